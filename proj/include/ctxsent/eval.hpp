#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxsent/datamodel.hpp"
#include "ctxsent/fusion.hpp"

namespace ctxsent {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, kNumPolarities> per_class{};
  std::size_t n = 0;
};

/// Accuracy plus unweighted macro averages over the three classes. Undefined
/// ratios (zero denominators) count as 0.
MetricsReport compute_metrics(std::span<const Polarity> golds, std::span<const Polarity> preds);

Json to_json(const MetricsReport& m);

/// Shannon entropy in bits, in [0, log2 3].
double entropy_bits(const PolarityDistribution& p) noexcept;

/// `bins` equal-width edges spanning [0, log2 3].
std::vector<double> equal_width_entropy_edges(int bins = 8);

struct EntropyBucket {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  /// Error rate of argmax(base); empty when the bucket is empty.
  std::optional<double> base_error_rate;
  /// Error rate of final_label; empty when the bucket is empty.
  std::optional<double> final_error_rate;
};

struct EntropyBucketReport {
  std::vector<double> edges;
  std::vector<EntropyBucket> buckets;
  bool hard_only = false;
  double alpha = 0.3;
  std::size_t analyzed = 0;
};

/// Buckets records by the entropy of their base distribution. Records without
/// a gold label are an error. With `hard_only`, only delta <= alpha records
/// are analyzed.
EntropyBucketReport error_rate_by_entropy(const std::vector<PredictionRecord>& records,
                                          const std::map<std::string, Polarity>& golds,
                                          const std::vector<double>& edges, bool hard_only, double alpha);

Json to_json(const EntropyBucketReport& r);
std::string to_csv(const EntropyBucketReport& r);

// Hyperparameter sweep

struct DevItem {
  PolarityDistribution base;
  PolarityDistribution with_context;
  Polarity gold = Polarity::Negative;
};

enum class SweepMode { TwoPhase, FullGrid };
std::string_view to_string(SweepMode m) noexcept;
SweepMode parse_sweep_mode(std::string_view text);

struct SweepPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double macro_f1 = 0.0;
  /// 1 or 2 in two-phase mode, 0 for full grid.
  int phase = 0;
};

struct SweepResult {
  std::vector<SweepPoint> grid;
  double best_alpha = 0.0;
  double best_beta = 0.0;
  double best_f1 = 0.0;
  double base_f1 = 0.0;
  std::string rule;
};

/// Macro-F1 of the fused labels for one configuration.
double fused_macro_f1(const std::vector<DevItem>& items, const FusionConfig& config);

struct SweepOptions {
  SweepMode mode = SweepMode::TwoPhase;
  std::vector<double> alpha_grid;
  std::vector<double> beta_grid;
  /// Alpha held fixed while searching beta in two-phase mode.
  double phase1_alpha = 0.3;
  int workers = 1;
};

/// Grid search over (alpha, beta) with `base` supplying the strategy and
/// remaining settings. Ties prefer the smallest beta, then the smallest alpha.
/// Two-phase mode picks beta at phase1_alpha, then alpha at that beta; the
/// phase-2 scan always includes phase1_alpha.
SweepResult sweep(const std::vector<DevItem>& items, const FusionConfig& base, const SweepOptions& options);

Json to_json(const SweepResult& r);
std::string to_csv(const SweepResult& r);

// Knowledge-type comparison

struct KnowledgeRow {
  std::string knowledge_type;
  MetricsReport metrics;
};

/// One "base" row (argmax of base distributions) followed by one row per
/// knowledge type (final labels), in input order. Every set must cover the
/// same sample ids.
std::vector<KnowledgeRow> compare_knowledge_types(
    const std::vector<std::pair<std::string, std::vector<PredictionRecord>>>& per_type,
    const std::map<std::string, Polarity>& golds);

std::string to_csv(const std::vector<KnowledgeRow>& rows);

}  // namespace ctxsent
