#include "ctxsent/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ctxsent/error.hpp"

namespace ctxsent {

namespace fs = std::filesystem;

Polarity polarity_from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kNumPolarities)) {
    throw ValidationError("polarity index out of range: " + std::to_string(index));
  }
  return static_cast<Polarity>(index);
}

std::string_view to_string(Polarity p) noexcept {
  switch (p) {
    case Polarity::Negative: return "negative";
    case Polarity::Neutral: return "neutral";
    case Polarity::Positive: return "positive";
  }
  return "negative";
}

Polarity parse_polarity(std::string_view text) {
  if (text == "negative" || text == "0") return Polarity::Negative;
  if (text == "neutral" || text == "1") return Polarity::Neutral;
  if (text == "positive" || text == "2") return Polarity::Positive;
  throw ValidationError("unknown polarity label '" + std::string(text) + "'");
}

PolarityDistribution::PolarityDistribution() : probs_{1.0 / 3, 1.0 / 3, 1.0 / 3} {}

PolarityDistribution PolarityDistribution::from_probs(const Probs& probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < -kProbTolerance || p > 1.0 + kProbTolerance) {
      throw ValidationError("probability entry out of [0,1]: " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbTolerance) {
    throw ValidationError("probabilities do not sum to 1 (sum=" + std::to_string(sum) + ")");
  }
  return PolarityDistribution(probs);
}

PolarityDistribution PolarityDistribution::normalize(const Probs& weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("cannot normalize negative or non-finite weight");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw ValidationError("cannot normalize an all-zero vector");
  Probs out{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) out[i] = weights[i] / sum;
  return PolarityDistribution(out);
}

PolarityDistribution PolarityDistribution::one_hot(Polarity p) {
  Probs out{};
  out[index_of(p)] = 1.0;
  return PolarityDistribution(out);
}

Polarity argmax_label(const PolarityDistribution& dist) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumPolarities; ++i) {
    if (dist[i] > dist[best]) best = i;
  }
  return static_cast<Polarity>(best);
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "test";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "dev" || text == "val" || text == "valid") return Split::Dev;
  if (text == "test") return Split::Test;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

void validate(const Sample& sample) {
  if (sample.id.empty()) throw ValidationError("sample with empty id");
  if (sample.sentence.empty()) {
    throw ValidationError("sample " + sample.id + ": empty sentence");
  }
  if (sample.aspect && sample.sentence.find(*sample.aspect) == std::string::npos) {
    throw ValidationError("sample " + sample.id + ": aspect '" + *sample.aspect +
                          "' does not occur in sentence");
  }
}

void validate_dataset(const std::vector<Sample>& samples) {
  std::set<std::string> seen;
  std::vector<std::string> duplicates;
  std::vector<std::string> aspect_errors;
  std::vector<std::string> other_errors;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) duplicates.push_back(s.id);
    if (s.aspect && s.sentence.find(*s.aspect) == std::string::npos) {
      aspect_errors.push_back(s.id);
    } else if (s.id.empty() || s.sentence.empty()) {
      other_errors.push_back(s.id.empty() ? "<empty id>" : s.id);
    }
  }
  auto join = [](const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
    return out;
  };
  std::string message;
  if (!duplicates.empty()) message += "duplicate ids: " + join(duplicates) + "; ";
  if (!aspect_errors.empty()) message += "aspect not in sentence: " + join(aspect_errors) + "; ";
  if (!other_errors.empty()) message += "empty id or sentence: " + join(other_errors) + "; ";
  if (!message.empty()) {
    message.resize(message.size() - 2);
    throw ValidationError(message);
  }
}

// ---------------------------------------------------------------------------
// JSON mapping

void to_json(Json& j, const PolarityDistribution& d) {
  j = Json::array({d[std::size_t{0}], d[std::size_t{1}], d[std::size_t{2}]});
}

void from_json(const Json& j, PolarityDistribution& d) {
  if (!j.is_array() || j.size() != kNumPolarities) {
    throw ValidationError("probability vector must be a 3-element array");
  }
  Probs probs{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) probs[i] = j.at(i).get<double>();
  d = PolarityDistribution::from_probs(probs);
}

namespace {

Polarity label_from_json(const Json& j) {
  if (j.is_number_integer()) return polarity_from_index(j.get<int>());
  if (j.is_string()) return parse_polarity(j.get<std::string>());
  throw ValidationError("label must be a name or 0/1/2");
}

template <typename T>
void put_optional(Json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void get_optional(const Json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    out = it->template get<T>();
  } else {
    out.reset();
  }
}

}  // namespace

void to_json(Json& j, const Sample& s) {
  j = Json{{"id", s.id}, {"split", to_string(s.split)}, {"sentence", s.sentence}};
  put_optional(j, "image", s.image);
  put_optional(j, "aspect", s.aspect);
  if (s.gold) j["label"] = to_string(*s.gold);
}

void from_json(const Json& j, Sample& s) {
  s.id = j.at("id").get<std::string>();
  s.split = parse_split(j.value("split", std::string("test")));
  s.sentence = j.at("sentence").get<std::string>();
  get_optional(j, "image", s.image);
  get_optional(j, "aspect", s.aspect);
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
    s.gold = label_from_json(*it);
  } else {
    s.gold.reset();
  }
}

void to_json(Json& j, const ContextRecord& r) {
  j = Json{{"sample_id", r.sample_id},   {"knowledge_type", r.knowledge_type},
           {"model_id", r.model_id},     {"prompt_hash", r.prompt_hash},
           {"text", r.text},             {"created_at", r.created_at}};
}

void from_json(const Json& j, ContextRecord& r) {
  r.sample_id = j.at("sample_id").get<std::string>();
  r.knowledge_type = j.at("knowledge_type").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.prompt_hash = j.at("prompt_hash").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.created_at = j.value("created_at", std::string());
}

void to_json(Json& j, const PredictionRecord& r) {
  j = Json{{"sample_id", r.sample_id}, {"base", r.base}};
  put_optional(j, "with_context", r.with_context);
  put_optional(j, "fused", r.fused);
  j["delta"] = r.delta;
  j["is_hard"] = r.is_hard;
  j["final_label"] = to_string(r.final_label);
  j["strategy"] = r.strategy;
  put_optional(j, "knowledge_type", r.knowledge_type);
}

void from_json(const Json& j, PredictionRecord& r) {
  r.sample_id = j.at("sample_id").get<std::string>();
  r.base = j.at("base").get<PolarityDistribution>();
  get_optional(j, "with_context", r.with_context);
  get_optional(j, "fused", r.fused);
  r.delta = j.at("delta").get<double>();
  r.is_hard = j.at("is_hard").get<bool>();
  r.final_label = label_from_json(j.at("final_label"));
  r.strategy = j.at("strategy").get<std::string>();
  get_optional(j, "knowledge_type", r.knowledge_type);
}

// ---------------------------------------------------------------------------
// JSONL

void write_jsonl_lines(const fs::path& path, const std::vector<Json>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& row : rows) out << row.dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<JsonlRow> read_jsonl_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<JsonlRow> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json value;
    try {
      value = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(number) +
                            ": invalid JSON (" + e.what() + ")");
    }
    if (!value.is_object()) {
      throw ValidationError(path.string() + ": line " + std::to_string(number) +
                            ": expected a JSON object");
    }
    rows.push_back({number, std::move(value)});
  }
  return rows;
}

void throw_schema_error(const fs::path& path, std::size_t line, const std::string& what) {
  throw ValidationError(path.string() + ": line " + std::to_string(line) +
                        ": schema mismatch (" + what + ")");
}

// ---------------------------------------------------------------------------
// Ingestion

Adapter parse_adapter(std::string_view name) {
  if (name == "twitter-tsv") return Adapter::TwitterTsv;
  if (name == "msed") return Adapter::Msed;
  if (name == "canonical-jsonl") return Adapter::CanonicalJsonl;
  throw ConfigError("unknown dataset adapter '" + std::string(name) +
                    "' (expected twitter-tsv, msed or canonical-jsonl)");
}

ColumnMap default_column_map(Adapter adapter) {
  switch (adapter) {
    // index \t label \t image id \t sentence with $T$ \t aspect
    case Adapter::TwitterTsv:
      return {{"id", "0"}, {"label", "1"}, {"image", "2"}, {"sentence", "3"}, {"aspect", "4"}};
    case Adapter::Msed:
      return {{"id", "id"}, {"image", "image"}, {"sentence", "caption"}, {"label", "sentiment"}};
    case Adapter::CanonicalJsonl:
      return {{"id", "id"},         {"split", "split"},   {"sentence", "sentence"},
              {"image", "image"},   {"aspect", "aspect"}, {"label", "label"}};
  }
  return {};
}

namespace {

struct RawRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Tab-separated without quoting; tweets routinely contain bare quotes.
std::vector<RawRow> split_tsv(const std::string& content) {
  std::vector<RawRow> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    RawRow row{number, {}};
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      row.cells.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// RFC 4180 style: quoted fields may hold commas, doubled quotes and newlines.
std::vector<RawRow> split_csv(const std::string& content) {
  std::vector<RawRow> rows;
  RawRow row;
  std::string cell;
  bool in_quotes = false;
  bool row_has_data = false;
  std::size_t line = 1;
  row.line = 1;
  auto end_row = [&] {
    row.cells.push_back(std::move(cell));
    cell.clear();
    if (row_has_data || row.cells.size() > 1 || !row.cells.front().empty()) {
      rows.push_back(std::move(row));
    }
    row = RawRow{};
    row_has_data = false;
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      row_has_data = true;
    } else if (c == ',') {
      row.cells.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_row();
      ++line;
      row.line = line;
    } else {
      cell.push_back(c);
    }
  }
  if (in_quotes) {
    throw ValidationError("line " + std::to_string(row.line) + ": unterminated quoted field");
  }
  if (!cell.empty() || !row.cells.empty() || row_has_data) end_row();
  return rows;
}

bool is_index(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::vector<Sample> ingest_delimited(const std::vector<RawRow>& rows, const IngestOptions& options,
                                     bool twitter) {
  ColumnMap map = default_column_map(options.adapter);
  for (const auto& [k, v] : options.column_map) map[k] = v;

  std::vector<std::string> header;
  std::size_t first = 0;
  if (options.has_header && !rows.empty()) {
    header = rows.front().cells;
    first = 1;
  }
  auto resolve = [&](const std::string& field) -> std::optional<std::size_t> {
    auto it = map.find(field);
    if (it == map.end() || it->second.empty()) return std::nullopt;
    if (is_index(it->second)) return static_cast<std::size_t>(std::stoul(it->second));
    auto pos = std::find(header.begin(), header.end(), it->second);
    if (pos == header.end()) {
      if (field == "sentence" || field == "id") {
        throw ValidationError("column '" + it->second + "' for field '" + field +
                              "' not found in header");
      }
      return std::nullopt;
    }
    return static_cast<std::size_t>(pos - header.begin());
  };
  const auto id_col = resolve("id");
  const auto sentence_col = resolve("sentence");
  const auto label_col = resolve("label");
  const auto image_col = resolve("image");
  const auto aspect_col = resolve("aspect");
  const auto split_col = resolve("split");
  if (!sentence_col) throw ValidationError("column map lacks a sentence column");

  std::vector<Sample> samples;
  samples.reserve(rows.size());
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto fail = [&](const std::string& reason) -> void {
      throw ValidationError("row at line " + std::to_string(row.line) + ": " + reason);
    };
    auto cell = [&](const std::optional<std::size_t>& col, const char* name) -> std::optional<std::string> {
      if (!col) return std::nullopt;
      if (*col >= row.cells.size()) {
        fail("expected column " + std::to_string(*col) + " (" + name + ") but row has " +
             std::to_string(row.cells.size()) + " fields");
      }
      return row.cells[*col];
    };
    Sample s;
    s.id = id_col ? *cell(id_col, "id") : std::to_string(r - first);
    s.sentence = *cell(sentence_col, "sentence");
    if (auto v = cell(image_col, "image"); v && !v->empty()) s.image = *v;
    if (auto v = cell(aspect_col, "aspect"); v && !v->empty()) s.aspect = *v;
    if (auto v = cell(label_col, "label"); v && !v->empty()) {
      try {
        s.gold = parse_polarity(*v);
      } catch (const ValidationError&) {
        fail("bad label '" + *v + "'");
      }
    }
    s.split = options.default_split;
    if (auto v = cell(split_col, "split"); v && !v->empty()) {
      try {
        s.split = parse_split(*v);
      } catch (const ValidationError&) {
        fail("bad split '" + *v + "'");
      }
    }
    if (twitter && s.aspect) {
      static constexpr std::string_view kPlaceholder = "$T$";
      for (auto pos = s.sentence.find(kPlaceholder); pos != std::string::npos;
           pos = s.sentence.find(kPlaceholder, pos + s.aspect->size())) {
        s.sentence.replace(pos, kPlaceholder.size(), *s.aspect);
      }
    }
    if (s.id.empty()) fail("empty id");
    if (s.sentence.empty()) fail("empty sentence");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> ingest_canonical(const fs::path& path, const IngestOptions& options) {
  ColumnMap map = default_column_map(Adapter::CanonicalJsonl);
  for (const auto& [k, v] : options.column_map) map[k] = v;
  std::vector<Sample> samples;
  for (const auto& row : read_jsonl_lines(path)) {
    Json canonical = Json::object();
    for (const auto& [field, key] : map) {
      if (auto it = row.value.find(key); it != row.value.end()) canonical[field] = *it;
    }
    if (!canonical.contains("split")) canonical["split"] = to_string(options.default_split);
    try {
      samples.push_back(canonical.get<Sample>());
    } catch (const std::exception& e) {
      throw ValidationError("row at line " + std::to_string(row.line) + ": " + e.what());
    }
  }
  return samples;
}

}  // namespace

std::vector<Sample> ingest_dataset(const fs::path& path, const IngestOptions& options) {
  if (!fs::exists(path)) throw IoError("dataset not found: " + path.string());
  std::vector<Sample> samples;
  switch (options.adapter) {
    case Adapter::TwitterTsv:
      samples = ingest_delimited(split_tsv(read_all(path)), options, true);
      break;
    case Adapter::Msed:
      samples = ingest_delimited(split_csv(read_all(path)), options, false);
      break;
    case Adapter::CanonicalJsonl:
      samples = ingest_canonical(path, options);
      break;
  }
  validate_dataset(samples);
  return samples;
}

}  // namespace ctxsent
