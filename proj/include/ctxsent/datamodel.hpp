#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ctxsent {

using Json = nlohmann::json;

inline constexpr std::size_t kNumPolarities = 3;
inline constexpr double kProbTolerance = 1e-9;

/// Sentiment label. The canonical order negative/neutral/positive is used for
/// every probability vector in memory and on disk.
enum class Polarity : int { Negative = 0, Neutral = 1, Positive = 2 };

inline constexpr std::array<Polarity, kNumPolarities> kAllPolarities = {
    Polarity::Negative, Polarity::Neutral, Polarity::Positive};

constexpr std::size_t index_of(Polarity p) noexcept {
  return static_cast<std::size_t>(p);
}
Polarity polarity_from_index(int index);
std::string_view to_string(Polarity p) noexcept;
/// Accepts the lowercase names and the numeric strings "0", "1", "2".
Polarity parse_polarity(std::string_view text);

using Probs = std::array<double, kNumPolarities>;

/// A validated probability vector over the three polarities.
class PolarityDistribution {
 public:
  /// Uniform distribution.
  PolarityDistribution();

  /// Validates without modifying: entries in [0,1] and unit sum, each within
  /// kProbTolerance. Throws ValidationError.
  static PolarityDistribution from_probs(const Probs& probs);
  /// Scales a non-negative vector with positive sum to unit sum.
  static PolarityDistribution normalize(const Probs& weights);
  static PolarityDistribution one_hot(Polarity p);

  const Probs& probs() const noexcept { return probs_; }
  double operator[](Polarity p) const noexcept { return probs_[index_of(p)]; }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }

  bool operator==(const PolarityDistribution&) const = default;

 private:
  explicit PolarityDistribution(const Probs& probs) : probs_(probs) {}
  Probs probs_;
};

/// Highest-probability label; ties go to the lowest canonical index.
Polarity argmax_label(const PolarityDistribution& dist) noexcept;

enum class Split { Train, Dev, Test };
std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view text);

struct Sample {
  std::string id;
  Split split = Split::Test;
  std::string sentence;
  std::optional<std::string> image;
  std::optional<std::string> aspect;
  std::optional<Polarity> gold;

  bool operator==(const Sample&) const = default;
};

/// Throws ValidationError if the aspect is not a substring of the sentence or
/// the sentence is empty.
void validate(const Sample& sample);
/// Checks id uniqueness and per-sample validity, reporting every offending id.
void validate_dataset(const std::vector<Sample>& samples);

struct ContextRecord {
  std::string sample_id;
  std::string knowledge_type;
  std::string model_id;
  std::string prompt_hash;
  std::string text;
  std::string created_at;

  bool operator==(const ContextRecord&) const = default;
};

struct PredictionRecord {
  std::string sample_id;
  PolarityDistribution base;
  std::optional<PolarityDistribution> with_context;
  std::optional<PolarityDistribution> fused;
  double delta = 0.0;
  bool is_hard = false;
  Polarity final_label = Polarity::Negative;
  std::string strategy;
  std::optional<std::string> knowledge_type;

  bool operator==(const PredictionRecord&) const = default;
};

// JSON mapping. Probability vectors serialize as 3-element arrays.
void to_json(Json& j, const PolarityDistribution& d);
void from_json(const Json& j, PolarityDistribution& d);
void to_json(Json& j, const Sample& s);
void from_json(const Json& j, Sample& s);
void to_json(Json& j, const ContextRecord& r);
void from_json(const Json& j, ContextRecord& r);
void to_json(Json& j, const PredictionRecord& r);
void from_json(const Json& j, PredictionRecord& r);

/// Writes one compact JSON object per line.
void write_jsonl_lines(const std::filesystem::path& path, const std::vector<Json>& rows);

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
  std::vector<Json> rows;
  rows.reserve(items.size());
  for (const auto& item : items) rows.emplace_back(item);
  write_jsonl_lines(path, rows);
}

struct JsonlRow {
  std::size_t line = 0;  // 1-based
  Json value;
};

/// Reads non-empty lines as JSON objects; a parse failure names the 1-based
/// line number.
std::vector<JsonlRow> read_jsonl_lines(const std::filesystem::path& path);

[[noreturn]] void throw_schema_error(const std::filesystem::path& path, std::size_t line,
                                     const std::string& what);

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  const auto rows = read_jsonl_lines(path);
  std::vector<T> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    try {
      out.push_back(row.value.template get<T>());
    } catch (const std::exception& e) {
      throw_schema_error(path, row.line, e.what());
    }
  }
  return out;
}

// Dataset ingestion.

enum class Adapter { TwitterTsv, Msed, CanonicalJsonl };
Adapter parse_adapter(std::string_view name);

/// Maps canonical field names (id, split, sentence, image, aspect, label) to a
/// source column. Values are header names, or decimal column indices.
using ColumnMap = std::map<std::string, std::string>;

struct IngestOptions {
  Adapter adapter = Adapter::CanonicalJsonl;
  ColumnMap column_map;
  /// Split assigned when the source has no split column.
  Split default_split = Split::Test;
  /// For delimited formats: whether the first row is a header.
  bool has_header = true;
};

/// Default column map for an adapter.
ColumnMap default_column_map(Adapter adapter);

std::vector<Sample> ingest_dataset(const std::filesystem::path& path,
                                   const IngestOptions& options);

}  // namespace ctxsent
