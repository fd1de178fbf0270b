#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "ctxsent/datamodel.hpp"

namespace ctxsent {

/// Ways of combining a base distribution P with a context-conditioned one P̂.
enum class Strategy {
  /// Convex interpolation applied only to hard samples (delta <= alpha).
  ContextualFusion,
  /// Convex interpolation applied to every sample; the ungated baseline.
  Interpolate,
  Average,
  Max,
  /// Interpolation weighted by JS(P, uniform).
  JsDivergence,
  /// Accept/reject gate on a probability-ratio proxy of CXMI.
  Cxmi,
};

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view text);

struct FusionConfig {
  double alpha = 0.3;
  double beta = 0.45;
  Strategy strategy = Strategy::ContextualFusion;
  double cxmi_threshold = 1.1;
  /// Restrict average/max/js/cxmi to hard samples. ContextualFusion is always
  /// gated and Interpolate never is.
  bool gate = false;
};

/// Throws ConfigError unless alpha, beta are in [0,1] and cxmi_threshold > 0.
void validate(const FusionConfig& config);
void to_json(Json& j, const FusionConfig& c);
void from_json(const Json& j, FusionConfig& c);

/// 2 max(p) + min(p) - 1, clamped to [0,1]. For three classes with unit sum
/// this is the gap between the two largest probabilities.
double delta(const PolarityDistribution& p) noexcept;

/// delta(p) <= alpha, boundary inclusive.
bool is_hard(const PolarityDistribution& p, double alpha) noexcept;

/// (1 - w) p + w q. Reproduces p at w = 0, q at w = 1, and p when p == q,
/// bit for bit.
PolarityDistribution interpolate(const PolarityDistribution& p, const PolarityDistribution& q, double w);

struct FusionOutcome {
  PolarityDistribution dist;
  Polarity label = Polarity::Negative;
  double delta = 0.0;
  bool is_hard = false;
};

/// Contextual fusion: non-hard samples keep p unchanged; hard samples take
/// p + beta (p_hat - p).
FusionOutcome fuse_cf(const PolarityDistribution& p, const PolarityDistribution& p_hat,
                      const FusionConfig& config);

PolarityDistribution fuse_average(const PolarityDistribution& p, const PolarityDistribution& p_hat);
/// Elementwise max, renormalized to unit sum.
PolarityDistribution fuse_max(const PolarityDistribution& p, const PolarityDistribution& p_hat);

/// Jensen-Shannon divergence with base-2 logs, in [0, 1]; 0 log 0 := 0.
double js_divergence(const PolarityDistribution& p, const PolarityDistribution& q) noexcept;
/// Interpolation with weight JS(p, uniform).
PolarityDistribution fuse_js(const PolarityDistribution& p, const PolarityDistribution& p_hat);

/// p(j) / max(p_hat(j), 1e-12) at j = argmax p.
double cxmi_ratio(const PolarityDistribution& p, const PolarityDistribution& p_hat) noexcept;
/// Keeps p when the ratio exceeds `threshold`, otherwise switches to p_hat.
PolarityDistribution fuse_cxmi(const PolarityDistribution& p, const PolarityDistribution& p_hat,
                               double threshold);

/// Dispatches on config.strategy, honouring the gate rules above.
FusionOutcome fuse(const PolarityDistribution& p, const PolarityDistribution& p_hat,
                   const FusionConfig& config);

PredictionRecord make_prediction_record(std::string sample_id, const PolarityDistribution& p,
                                        const PolarityDistribution& p_hat, const FusionConfig& config,
                                        std::optional<std::string> knowledge_type);

}  // namespace ctxsent
