#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxsent/backend.hpp"
#include "ctxsent/classifier.hpp"
#include "ctxsent/datamodel.hpp"
#include "ctxsent/eval.hpp"
#include "ctxsent/fusion.hpp"
#include "ctxsent/prompts.hpp"

namespace ctxsent {

struct DatasetSpec {
  std::filesystem::path path;
  IngestOptions options;
};

struct SweepSpec {
  SweepMode mode = SweepMode::TwoPhase;
  std::vector<double> alpha_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> beta_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double phase1_alpha = 0.3;
  Split split = Split::Dev;
};

struct EvalSpec {
  /// Empty evaluates every sample.
  std::optional<Split> split = Split::Test;
  int entropy_bins = 8;
};

/// Everything a pipeline run depends on. Relative paths in the config file
/// resolve against the file's directory.
struct RunConfig {
  DatasetSpec dataset;
  TaskLevel level = TaskLevel::Sentence;
  BackendConfig generator;
  BackendConfig classifier;
  std::vector<std::string> knowledge_types = {"historical"};
  FusionConfig fusion;
  SweepSpec sweep;
  EvalSpec eval;
  std::filesystem::path output_dir = "out";
  std::optional<std::string> run_id;
  std::uint64_t seed = 0;
  /// Defaults to <output_dir>/cache.jsonl.
  std::optional<std::filesystem::path> cache_path;
  std::optional<std::filesystem::path> template_file;
  std::optional<std::filesystem::path> instruction_file;
  /// Stamp records with a fixed epoch instead of the wall clock. Defaults to
  /// true when both backends are mocks.
  bool deterministic_timestamps = true;
};

/// Parses a config object. `overrides` may carry seed, alpha, beta, strategy,
/// knowledge_type, backend, out and run_id (the CLI flags).
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir, const Json& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const Json& overrides = {});
/// Canonical form, used for hashing; omits output_dir and run_id.
Json to_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

/// Throws if referenced input files are missing or settings are invalid.
void validate(const RunConfig& config);

inline constexpr const char* kFixedTimestamp = "1970-01-01T00:00:00Z";

/// Runs the stages against artifacts under <output_dir>/<run_id>/. Each stage
/// reads the previous stage's files and records its inputs and outputs in
/// manifest.json.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);
  ~Pipeline();

  const RunConfig& config() const noexcept { return config_; }
  const std::string& run_id() const noexcept { return run_id_; }
  const std::filesystem::path& run_dir() const noexcept { return run_dir_; }

  /// Each stage returns a summary object {stage, outputs, ...}.
  Json ingest();
  Json generate_contexts();
  Json predict();
  Json fuse();
  Json evaluate();
  Json sweep();
  /// ingest → generate-context → predict → fuse → evaluate → sweep.
  Json run_all();

  std::filesystem::path samples_path() const;
  std::filesystem::path contexts_path() const;
  std::filesystem::path base_predictions_path() const;
  std::filesystem::path context_predictions_path(const std::string& type) const;
  std::filesystem::path fused_path(const std::string& type) const;
  std::filesystem::path report_path(const std::string& type) const;
  std::filesystem::path sweep_path(const std::string& type) const;

 private:
  std::vector<Sample> load_samples() const;
  std::filesystem::path require(const std::filesystem::path& path) const;
  void record_stage(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs) const;
  std::string now() const;

  RunConfig config_;
  std::string run_id_;
  std::filesystem::path run_dir_;
  std::unique_ptr<ResponseCache> cache_;
  std::vector<PromptTemplate> template_overrides_;
  InstructionTemplate wording_;
};

}  // namespace ctxsent
