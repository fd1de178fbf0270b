// Command-line front end. Talks to the library only through the C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "ctxsent/ctxsent.h"

namespace {

using Json = nlohmann::json;

struct PipelineFlags {
  std::string config;
  std::optional<long long> seed;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::string> strategy;
  std::optional<std::string> knowledge_type;
  std::optional<std::string> backend;
  std::optional<std::string> out;
  std::optional<std::string> run_id;

  Json overrides() const {
    Json j = Json::object();
    if (seed) j["seed"] = *seed;
    if (alpha) j["alpha"] = *alpha;
    if (beta) j["beta"] = *beta;
    if (strategy) j["strategy"] = *strategy;
    if (knowledge_type) j["knowledge_type"] = *knowledge_type;
    if (backend) j["backend"] = *backend;
    if (out) j["out"] = *out;
    if (run_id) j["run_id"] = *run_id;
    return j;
  }
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& flags) {
  cmd->add_option("--config", flags.config, "Run-config JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "Seed for the mock backends");
  cmd->add_option("--alpha", flags.alpha, "Hard-sample threshold")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--beta", flags.beta, "Fusion coefficient")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--strategy", flags.strategy, "cf, interpolate, average, max, js or cxmi");
  cmd->add_option("--knowledge-type", flags.knowledge_type, "Restrict the run to one knowledge type");
  cmd->add_option("--backend", flags.backend, "mock or remote, for both generator and classifier");
  cmd->add_option("--out", flags.out, "Output directory");
  cmd->add_option("--run-id", flags.run_id, "Run id (default derives from the config hash)");
}

int report_failure(ctxsent_status status) {
  std::fprintf(stderr, "%s\n", ctxsent_last_error_json());
  return static_cast<int>(status);
}

int report_usage_error(const std::string& message) {
  std::cerr << Json{{"status", "invalid_argument"}, {"code", 1}, {"message", message}}.dump() << "\n";
  return 1;
}

void print_owned(char* text) {
  if (text == nullptr) return;
  std::fputs(text, stdout);
  std::fputc('\n', stdout);
  ctxsent_string_free(text);
}

int run_stage(const PipelineFlags& flags, const char* stage) {
  ctxsent_pipeline* pipeline = nullptr;
  const std::string overrides = flags.overrides().dump();
  ctxsent_status status = ctxsent_pipeline_open(flags.config.c_str(), overrides.c_str(), &pipeline);
  if (status != CTXSENT_OK) return report_failure(status);
  char* summary = nullptr;
  status = ctxsent_pipeline_run_stage(pipeline, stage, &summary);
  ctxsent_pipeline_close(pipeline);
  if (status != CTXSENT_OK) return report_failure(status);
  print_owned(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-augmented sentiment classification pipeline"};
  app.set_version_flag("--version", std::string(ctxsent_version()));
  app.require_subcommand(1);

  struct StageCommand {
    const char* name;
    const char* stage;
    const char* help;
  };
  const StageCommand stages[] = {
      {"ingest", "ingest", "Normalize the dataset into samples.jsonl"},
      {"generate-context", "generate-context", "Generate one context per sample and knowledge type"},
      {"predict", "predict", "Score base and context-conditioned predictions"},
      {"fuse", "fuse", "Fuse base and context-conditioned distributions"},
      {"evaluate", "evaluate", "Write metrics, entropy buckets and the knowledge-type table"},
      {"sweep", "sweep", "Grid-search alpha and beta on the dev split"},
      {"run", "run", "Run every stage in order"},
  };

  PipelineFlags flags;
  std::optional<std::string> chosen_stage;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_pipeline_flags(cmd, flags);
    cmd->callback([&chosen_stage, stage = s.stage] { chosen_stage = stage; });
  }

  std::string dump_path;
  std::optional<std::string> csv_path;
  auto* saliency = app.add_subcommand("analyze-saliency", "Compute per-layer saliency scores from a dump");
  saliency->add_option("--dump", dump_path, "Saliency dump JSON")->required()->check(CLI::ExistingFile);
  saliency->add_option("--csv", csv_path, "Also write layer,S_c_to_p,S_i_to_p CSV here");

  std::string sentence, context1, context2;
  auto* judge = app.add_subcommand("judge-prompt", "Render the pairwise context comparison prompt");
  judge->add_option("--sentence", sentence)->required();
  judge->add_option("--context1", context1)->required();
  judge->add_option("--context2", context2)->required();

  auto* templates = app.add_subcommand("templates", "List the built-in knowledge-type templates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_usage_error(e.what());
  }

  if (chosen_stage) return run_stage(flags, chosen_stage->c_str());

  char* out = nullptr;
  ctxsent_status status = CTXSENT_OK;
  if (saliency->parsed()) {
    status = ctxsent_analyze_saliency(dump_path.c_str(), csv_path ? csv_path->c_str() : nullptr, &out);
  } else if (judge->parsed()) {
    status = ctxsent_render_judge_prompt(sentence.c_str(), context1.c_str(), context2.c_str(), &out);
  } else if (templates->parsed()) {
    status = ctxsent_templates_json(&out);
  }
  if (status != CTXSENT_OK) return report_failure(status);
  print_owned(out);
  return 0;
}
