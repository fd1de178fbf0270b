#include "ctxsent/pipeline.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ctxsent/digest.hpp"
#include "ctxsent/error.hpp"
#include "ctxsent/parallel.hpp"
#include "ctxsent/version.hpp"

namespace ctxsent {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base_dir, const std::string& value) {
  fs::path p(value);
  return (p.is_absolute() || base_dir.empty() ? p : base_dir / p).lexically_normal();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::string adapter_name(Adapter a) {
  switch (a) {
    case Adapter::TwitterTsv: return "twitter-tsv";
    case Adapter::Msed: return "msed";
    case Adapter::CanonicalJsonl: return "canonical-jsonl";
  }
  return "canonical-jsonl";
}

// Knowledge types become file name components.
void check_type_name(const std::string& type) {
  if (type.empty() || type == "base" ||
      type.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789-_") != std::string::npos) {
    throw ConfigError("invalid knowledge type name '" + type + "'");
  }
}

std::map<std::string, Polarity> gold_map(const std::vector<Sample>& samples) {
  std::map<std::string, Polarity> golds;
  for (const auto& s : samples) {
    if (s.gold) golds.emplace(s.id, *s.gold);
  }
  return golds;
}

std::map<std::string, ClassifierOutput> by_id(const std::vector<ClassifierOutput>& outputs) {
  std::map<std::string, ClassifierOutput> m;
  for (const auto& o : outputs) m.emplace(o.sample_id, o);
  return m;
}

}  // namespace

RunConfig run_config_from_json(const Json& j, const fs::path& base_dir, const Json& overrides) {
  RunConfig c;
  try {
    const auto& ds = j.at("dataset");
    c.dataset.path = resolve(base_dir, ds.at("path").get<std::string>());
    c.dataset.options.adapter = parse_adapter(ds.value("adapter", std::string("canonical-jsonl")));
    if (auto it = ds.find("column_map"); it != ds.end()) {
      for (const auto& [k, v] : it->items()) {
        c.dataset.options.column_map[k] = v.is_number_integer() ? std::to_string(v.get<int>()) : v.get<std::string>();
      }
    }
    c.dataset.options.default_split = parse_split(ds.value("default_split", std::string("test")));
    c.dataset.options.has_header = ds.value("has_header", true);

    c.level = parse_task_level(j.value("task_level", std::string("sentence")));

    BackendConfig shared;
    if (auto it = j.find("backend"); it != j.end()) shared = it->get<BackendConfig>();
    c.generator = j.contains("generator") ? j.at("generator").get<BackendConfig>() : shared;
    c.classifier = j.contains("classifier") ? j.at("classifier").get<BackendConfig>() : shared;

    if (auto it = j.find("knowledge_types"); it != j.end()) {
      c.knowledge_types = it->get<std::vector<std::string>>();
    }
    if (auto it = j.find("fusion"); it != j.end()) c.fusion = it->get<FusionConfig>();
    if (auto it = j.find("sweep"); it != j.end()) {
      const auto& s = *it;
      c.sweep.mode = parse_sweep_mode(s.value("mode", std::string("two-phase")));
      if (s.contains("alpha_grid")) c.sweep.alpha_grid = s.at("alpha_grid").get<std::vector<double>>();
      if (s.contains("beta_grid")) c.sweep.beta_grid = s.at("beta_grid").get<std::vector<double>>();
      c.sweep.phase1_alpha = s.value("phase1_alpha", c.sweep.phase1_alpha);
      c.sweep.split = parse_split(s.value("split", std::string("dev")));
    }
    if (auto it = j.find("eval"); it != j.end()) {
      const auto split = it->value("split", std::string("test"));
      c.eval.split = split == "all" ? std::nullopt : std::optional<Split>(parse_split(split));
      c.eval.entropy_bins = it->value("entropy_bins", c.eval.entropy_bins);
    }
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    if (auto it = j.find("run_id"); it != j.end() && !it->is_null()) c.run_id = it->get<std::string>();
    c.seed = j.value("seed", std::uint64_t{0});
    if (auto it = j.find("cache_path"); it != j.end() && !it->is_null()) {
      c.cache_path = resolve(base_dir, it->get<std::string>());
    }
    if (auto it = j.find("template_file"); it != j.end() && !it->is_null()) {
      c.template_file = resolve(base_dir, it->get<std::string>());
    }
    if (auto it = j.find("instruction_file"); it != j.end() && !it->is_null()) {
      c.instruction_file = resolve(base_dir, it->get<std::string>());
    }

    if (!overrides.is_null()) {
      if (auto it = overrides.find("seed"); it != overrides.end()) c.seed = it->get<std::uint64_t>();
      if (auto it = overrides.find("alpha"); it != overrides.end()) c.fusion.alpha = it->get<double>();
      if (auto it = overrides.find("beta"); it != overrides.end()) c.fusion.beta = it->get<double>();
      if (auto it = overrides.find("strategy"); it != overrides.end()) {
        c.fusion.strategy = parse_strategy(it->get<std::string>());
      }
      if (auto it = overrides.find("knowledge_type"); it != overrides.end()) {
        c.knowledge_types = {it->get<std::string>()};
      }
      if (auto it = overrides.find("backend"); it != overrides.end()) {
        const auto kind = parse_backend_kind(it->get<std::string>());
        c.generator.kind = kind;
        c.classifier.kind = kind;
      }
      if (auto it = overrides.find("out"); it != overrides.end()) c.output_dir = it->get<std::string>();
      if (auto it = overrides.find("run_id"); it != overrides.end()) c.run_id = it->get<std::string>();
    }
    c.generator.mock.seed = c.seed;
    c.classifier.mock.seed = c.seed;

    const bool all_mock = c.generator.kind == BackendKind::Mock && c.classifier.kind == BackendKind::Mock;
    c.deterministic_timestamps = j.value("deterministic_timestamps", all_mock);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const fs::path& path, const Json& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read run config: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path(), overrides);
}

Json to_json(const RunConfig& c) {
  Json column_map = Json::object();
  for (const auto& [k, v] : c.dataset.options.column_map) column_map[k] = v;
  Json j{{"dataset",
          {{"path", c.dataset.path.generic_string()},
           {"adapter", adapter_name(c.dataset.options.adapter)},
           {"column_map", column_map},
           {"default_split", to_string(c.dataset.options.default_split)},
           {"has_header", c.dataset.options.has_header}}},
         {"task_level", to_string(c.level)},
         {"generator", c.generator},
         {"classifier", c.classifier},
         {"knowledge_types", c.knowledge_types},
         {"fusion", c.fusion},
         {"sweep",
          {{"mode", to_string(c.sweep.mode)},
           {"alpha_grid", c.sweep.alpha_grid},
           {"beta_grid", c.sweep.beta_grid},
           {"phase1_alpha", c.sweep.phase1_alpha},
           {"split", to_string(c.sweep.split)}}},
         {"eval",
          {{"split", c.eval.split ? std::string(to_string(*c.eval.split)) : std::string("all")},
           {"entropy_bins", c.eval.entropy_bins}}},
         {"seed", c.seed},
         {"deterministic_timestamps", c.deterministic_timestamps}};
  if (c.template_file) j["template_file"] = c.template_file->generic_string();
  if (c.instruction_file) j["instruction_file"] = c.instruction_file->generic_string();
  return j;
}

std::string config_hash(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

void validate(const RunConfig& c) {
  if (!fs::exists(c.dataset.path)) throw ConfigError("dataset not found: " + c.dataset.path.string());
  if (c.template_file && !fs::exists(*c.template_file)) {
    throw ConfigError("template file not found: " + c.template_file->string());
  }
  if (c.instruction_file && !fs::exists(*c.instruction_file)) {
    throw ConfigError("instruction file not found: " + c.instruction_file->string());
  }
  if (c.knowledge_types.empty()) throw ConfigError("at least one knowledge type is required");
  std::set<std::string> seen;
  for (const auto& t : c.knowledge_types) {
    check_type_name(t);
    if (!seen.insert(t).second) throw ConfigError("duplicate knowledge type '" + t + "'");
  }
  validate(c.generator);
  validate(c.classifier);
  validate(c.fusion);
  if (c.eval.entropy_bins < 1) throw ConfigError("entropy_bins must be >= 1");
  if (c.sweep.alpha_grid.empty() || c.sweep.beta_grid.empty()) throw ConfigError("sweep grids must not be empty");
  if (c.run_id && (c.run_id->empty() || c.run_id->find('/') != std::string::npos)) {
    throw ConfigError("run_id must be a non-empty name without '/'");
  }
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
  validate(config_);
  run_id_ = config_.run_id.value_or("run-" + config_hash(config_).substr(0, 12));
  run_dir_ = config_.output_dir / run_id_;
  const fs::path cache_path = config_.cache_path.value_or(config_.output_dir / "cache.jsonl");
  ResponseCache::Clock clock;
  if (config_.deterministic_timestamps) clock = [] { return std::string(kFixedTimestamp); };
  cache_ = std::make_unique<ResponseCache>(cache_path, clock);
  if (config_.template_file) template_overrides_ = load_template_overrides(*config_.template_file);
  if (config_.instruction_file) wording_ = load_instruction_template(*config_.instruction_file);
  for (const auto& t : config_.knowledge_types) find_template(t, template_overrides_);
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::samples_path() const { return run_dir_ / "samples.jsonl"; }
fs::path Pipeline::contexts_path() const { return run_dir_ / "contexts.jsonl"; }
fs::path Pipeline::base_predictions_path() const { return run_dir_ / "predictions_base.jsonl"; }
fs::path Pipeline::context_predictions_path(const std::string& type) const {
  return run_dir_ / ("predictions_" + type + ".jsonl");
}
fs::path Pipeline::fused_path(const std::string& type) const { return run_dir_ / ("fused_" + type + ".jsonl"); }
fs::path Pipeline::report_path(const std::string& type) const { return run_dir_ / ("report_" + type + ".json"); }
fs::path Pipeline::sweep_path(const std::string& type) const { return run_dir_ / ("sweep_" + type + ".json"); }

std::string Pipeline::now() const {
  return config_.deterministic_timestamps ? std::string(kFixedTimestamp) : utc_now_iso8601();
}

fs::path Pipeline::require(const fs::path& path) const {
  if (!fs::exists(path)) throw MissingArtifactError(path.string());
  return path;
}

std::vector<Sample> Pipeline::load_samples() const { return read_jsonl<Sample>(require(samples_path())); }

void Pipeline::record_stage(const std::string& stage, const std::vector<fs::path>& inputs,
                            const std::vector<fs::path>& outputs) const {
  const fs::path path = run_dir_ / "manifest.json";
  Json manifest = Json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      manifest = Json::parse(in);
    } catch (const Json::parse_error&) {
      manifest = Json::object();
    }
  }
  manifest["tool"] = "ctxsent";
  manifest["version"] = kVersion;
  manifest["run_id"] = run_id_;
  manifest["config_hash"] = config_hash(config_);
  manifest["config"] = to_json(config_);
  auto hashes = [&](const std::vector<fs::path>& files) {
    Json j = Json::object();
    for (const auto& f : files) {
      const auto key = f.parent_path() == run_dir_ ? f.filename().generic_string() : f.generic_string();
      j[key] = sha256_file(f.string());
    }
    return j;
  };
  manifest["stages"][stage] = {{"inputs", hashes(inputs)}, {"outputs", hashes(outputs)}};
  write_json(path, manifest);
}

Json Pipeline::ingest() {
  auto samples = ingest_dataset(config_.dataset.path, config_.dataset.options);
  if (config_.level == TaskLevel::Aspect) {
    std::vector<std::string> missing;
    for (const auto& s : samples) {
      if (!s.aspect) missing.push_back(s.id);
    }
    if (!missing.empty()) {
      std::string ids;
      for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
      throw ValidationError("aspect-level task but samples lack an aspect: " + ids);
    }
  }
  write_jsonl(samples_path(), samples);
  record_stage("ingest", {config_.dataset.path}, {samples_path()});
  return Json{{"stage", "ingest"}, {"samples", samples.size()}, {"outputs", {samples_path().generic_string()}}};
}

Json Pipeline::generate_contexts() {
  const auto samples = load_samples();
  // Reuse records already generated for the same (sample, type, model, prompt).
  std::map<std::string, ContextRecord> existing;
  auto key_of = [](const ContextRecord& r) {
    return DigestBuilder().add(r.sample_id).add(r.knowledge_type).add(r.model_id).add(r.prompt_hash).hex();
  };
  if (fs::exists(contexts_path())) {
    try {
      for (auto& r : read_jsonl<ContextRecord>(contexts_path())) existing.emplace(key_of(r), std::move(r));
    } catch (const Error&) {
      existing.clear();
    }
  }

  auto backend = make_backend(config_.generator);
  CachingBackend cached(*backend, *cache_);
  std::vector<ContextRecord> records;
  for (const auto& type : config_.knowledge_types) {
    const auto& tmpl = find_template(type, template_overrides_);
    std::vector<ContextRecord> slots(samples.size());
    parallel_for(samples.size(), config_.generator.concurrency_limit, [&](std::size_t i) {
      const auto& sample = samples[i];
      const auto prompt = render_context_prompt(tmpl, sample, config_.generator.image_token);
      ContextRecord r{sample.id, type, config_.generator.model_id, prompt.hash, {}, {}};
      if (auto it = existing.find(key_of(r)); it != existing.end()) {
        slots[i] = it->second;
        return;
      }
      try {
        r.text = cached.generate(GenerateRequest{prompt, sample.image});
      } catch (const Error& e) {
        throw Error(e.kind(), "sample " + sample.id + " (" + type + "): " + e.what());
      }
      r.created_at = now();
      slots[i] = std::move(r);
    });
    records.insert(records.end(), slots.begin(), slots.end());
  }
  write_jsonl(contexts_path(), records);
  record_stage("generate-context", {samples_path()}, {contexts_path()});
  return Json{{"stage", "generate-context"},
              {"contexts", records.size()},
              {"outputs", {contexts_path().generic_string()}}};
}

Json Pipeline::predict() {
  const auto samples = load_samples();
  const auto contexts = read_jsonl<ContextRecord>(require(contexts_path()));
  auto backend = make_backend(config_.classifier);
  CachingBackend cached(*backend, *cache_);
  const ClassifierOptions options{config_.level, wording_};

  std::vector<BatchFailure> failures;
  std::vector<fs::path> outputs;
  auto run = [&](const std::map<std::string, ContextRecord>* ctx, const fs::path& out) {
    auto result = predict_batch(cached, samples, options, ctx);
    write_jsonl(out, result.outputs);
    outputs.push_back(out);
    failures.insert(failures.end(), result.failures.begin(), result.failures.end());
  };

  run(nullptr, base_predictions_path());
  for (const auto& type : config_.knowledge_types) {
    std::map<std::string, ContextRecord> by_sample;
    for (const auto& r : contexts) {
      if (r.knowledge_type == type && r.model_id == config_.generator.model_id) by_sample.emplace(r.sample_id, r);
    }
    for (const auto& s : samples) {
      if (!by_sample.count(s.id)) {
        throw MissingArtifactError(contexts_path().string() + " (no " + type + " context for sample " + s.id + ")");
      }
    }
    run(&by_sample, context_predictions_path(type));
  }

  const fs::path errors_path = run_dir_ / "errors_predict.json";
  if (!failures.empty()) {
    write_json(errors_path, to_json(failures));
    record_stage("predict", {samples_path(), contexts_path()}, outputs);
    throw BackendError(std::to_string(failures.size()) + " prediction(s) failed; see " + errors_path.string());
  }
  if (fs::exists(errors_path)) fs::remove(errors_path);
  record_stage("predict", {samples_path(), contexts_path()}, outputs);
  Json out_paths = Json::array();
  for (const auto& p : outputs) out_paths.push_back(p.generic_string());
  return Json{{"stage", "predict"}, {"samples", samples.size()}, {"outputs", out_paths}};
}

Json Pipeline::fuse() {
  const auto samples = load_samples();
  const auto base = by_id(read_jsonl<ClassifierOutput>(require(base_predictions_path())));
  std::vector<fs::path> inputs{base_predictions_path()};
  std::vector<fs::path> outputs;
  Json summary = Json::object();
  for (const auto& type : config_.knowledge_types) {
    const auto ctx = by_id(read_jsonl<ClassifierOutput>(require(context_predictions_path(type))));
    inputs.push_back(context_predictions_path(type));
    std::vector<PredictionRecord> records;
    std::size_t hard = 0;
    for (const auto& s : samples) {
      auto b = base.find(s.id);
      auto c = ctx.find(s.id);
      if (b == base.end() || c == ctx.end()) {
        throw ValidationError("sample " + s.id + " lacks a base or " + type + " prediction");
      }
      records.push_back(make_prediction_record(s.id, b->second.dist, c->second.dist, config_.fusion, type));
      hard += records.back().is_hard ? 1 : 0;
    }
    write_jsonl(fused_path(type), records);
    outputs.push_back(fused_path(type));
    summary[type] = {{"records", records.size()}, {"hard", hard}};
  }
  record_stage("fuse", inputs, outputs);
  Json out_paths = Json::array();
  for (const auto& p : outputs) out_paths.push_back(p.generic_string());
  return Json{{"stage", "fuse"}, {"strategy", to_string(config_.fusion.strategy)}, {"types", summary},
              {"outputs", out_paths}};
}

Json Pipeline::evaluate() {
  const auto samples = load_samples();
  std::set<std::string> in_split;
  for (const auto& s : samples) {
    if (!config_.eval.split || s.split == *config_.eval.split) {
      if (!s.gold) throw ValidationError("sample " + s.id + " has no gold label");
      in_split.insert(s.id);
    }
  }
  if (in_split.empty()) throw ValidationError("no samples in the evaluation split");
  const auto golds = gold_map(samples);
  const auto edges = equal_width_entropy_edges(config_.eval.entropy_bins);

  std::vector<fs::path> inputs{samples_path()};
  std::vector<fs::path> outputs;
  std::vector<std::pair<std::string, std::vector<PredictionRecord>>> per_type;
  Json summary = Json::object();
  for (const auto& type : config_.knowledge_types) {
    inputs.push_back(require(fused_path(type)));
    std::vector<PredictionRecord> records;
    for (auto& r : read_jsonl<PredictionRecord>(fused_path(type))) {
      if (in_split.count(r.sample_id)) records.push_back(std::move(r));
    }
    std::vector<Polarity> gold_labels, base_labels, ctx_labels, final_labels;
    for (const auto& r : records) {
      gold_labels.push_back(golds.at(r.sample_id));
      base_labels.push_back(argmax_label(r.base));
      ctx_labels.push_back(argmax_label(r.with_context.value_or(r.base)));
      final_labels.push_back(r.final_label);
    }
    const auto hard_report = error_rate_by_entropy(records, golds, edges, true, config_.fusion.alpha);
    const auto all_report = error_rate_by_entropy(records, golds, edges, false, config_.fusion.alpha);
    const auto fused_metrics = compute_metrics(gold_labels, final_labels);
    Json report{{"knowledge_type", type},
                {"split", config_.eval.split ? std::string(to_string(*config_.eval.split)) : std::string("all")},
                {"fusion", config_.fusion},
                {"metrics",
                 {{"base", to_json(compute_metrics(gold_labels, base_labels))},
                  {"context", to_json(compute_metrics(gold_labels, ctx_labels))},
                  {"fused", to_json(fused_metrics)}}},
                {"entropy_hard", to_json(hard_report)},
                {"entropy_all", to_json(all_report)}};
    write_json(report_path(type), report);
    const auto csv = run_dir_ / ("entropy_" + type + ".csv");
    write_text(csv, to_csv(hard_report));
    outputs.push_back(report_path(type));
    outputs.push_back(csv);
    summary[type] = {{"accuracy", fused_metrics.accuracy}, {"macro_f1", fused_metrics.macro_f1}};
    per_type.emplace_back(type, std::move(records));
  }
  const auto rows = compare_knowledge_types(per_type, golds);
  const auto comparison = run_dir_ / "knowledge_types.csv";
  write_text(comparison, to_csv(rows));
  outputs.push_back(comparison);
  record_stage("evaluate", inputs, outputs);
  Json out_paths = Json::array();
  for (const auto& p : outputs) out_paths.push_back(p.generic_string());
  return Json{{"stage", "evaluate"}, {"types", summary}, {"outputs", out_paths}};
}

Json Pipeline::sweep() {
  const auto samples = load_samples();
  const auto base = by_id(read_jsonl<ClassifierOutput>(require(base_predictions_path())));
  std::vector<fs::path> inputs{samples_path(), base_predictions_path()};
  std::vector<fs::path> outputs;
  Json summary = Json::object();
  for (const auto& type : config_.knowledge_types) {
    const auto ctx = by_id(read_jsonl<ClassifierOutput>(require(context_predictions_path(type))));
    inputs.push_back(context_predictions_path(type));
    std::vector<DevItem> items;
    for (const auto& s : samples) {
      if (s.split != config_.sweep.split) continue;
      if (!s.gold) throw ValidationError("sweep sample " + s.id + " has no gold label");
      auto b = base.find(s.id);
      auto c = ctx.find(s.id);
      if (b == base.end() || c == ctx.end()) {
        throw ValidationError("sample " + s.id + " lacks a base or " + type + " prediction");
      }
      items.push_back({b->second.dist, c->second.dist, *s.gold});
    }
    if (items.empty()) {
      throw ValidationError(std::string("no samples in the sweep split '") + std::string(to_string(config_.sweep.split)) +
                            "'");
    }
    SweepOptions options{config_.sweep.mode, config_.sweep.alpha_grid, config_.sweep.beta_grid,
                         config_.sweep.phase1_alpha, 4};
    const auto result = ctxsent::sweep(items, config_.fusion, options);
    Json j = to_json(result);
    j["knowledge_type"] = type;
    j["split"] = to_string(config_.sweep.split);
    j["strategy"] = to_string(config_.fusion.strategy);
    write_json(sweep_path(type), j);
    const auto csv = run_dir_ / ("sweep_" + type + ".csv");
    write_text(csv, to_csv(result));
    outputs.push_back(sweep_path(type));
    outputs.push_back(csv);
    summary[type] = j["selected"];
  }
  record_stage("sweep", inputs, outputs);
  Json out_paths = Json::array();
  for (const auto& p : outputs) out_paths.push_back(p.generic_string());
  return Json{{"stage", "sweep"}, {"selected", summary}, {"outputs", out_paths}};
}

Json Pipeline::run_all() {
  Json stages = Json::array();
  stages.push_back(ingest());
  stages.push_back(generate_contexts());
  stages.push_back(predict());
  stages.push_back(fuse());
  stages.push_back(evaluate());
  stages.push_back(sweep());
  return Json{{"stage", "run"}, {"run_dir", run_dir_.generic_string()}, {"stages", stages}};
}

}  // namespace ctxsent
