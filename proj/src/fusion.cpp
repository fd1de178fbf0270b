#include "ctxsent/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "ctxsent/error.hpp"

namespace ctxsent {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::ContextualFusion: return "cf";
    case Strategy::Interpolate: return "interpolate";
    case Strategy::Average: return "average";
    case Strategy::Max: return "max";
    case Strategy::JsDivergence: return "js";
    case Strategy::Cxmi: return "cxmi";
  }
  return "cf";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "cf") return Strategy::ContextualFusion;
  if (text == "interpolate") return Strategy::Interpolate;
  if (text == "average") return Strategy::Average;
  if (text == "max") return Strategy::Max;
  if (text == "js") return Strategy::JsDivergence;
  if (text == "cxmi") return Strategy::Cxmi;
  throw ConfigError("unknown fusion strategy '" + std::string(text) +
                    "' (expected cf, interpolate, average, max, js or cxmi)");
}

void validate(const FusionConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) throw ConfigError("beta must be in [0,1]");
  if (!(c.cxmi_threshold > 0.0)) throw ConfigError("cxmi_threshold must be > 0");
}

void to_json(Json& j, const FusionConfig& c) {
  j = Json{{"alpha", c.alpha},
           {"beta", c.beta},
           {"strategy", to_string(c.strategy)},
           {"cxmi_threshold", c.cxmi_threshold},
           {"gate", c.gate}};
}

void from_json(const Json& j, FusionConfig& c) {
  c = FusionConfig{};
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.strategy = parse_strategy(j.value("strategy", std::string("cf")));
  c.cxmi_threshold = j.value("cxmi_threshold", c.cxmi_threshold);
  c.gate = j.value("gate", c.gate);
  validate(c);
}

double delta(const PolarityDistribution& p) noexcept {
  const auto& v = p.probs();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return std::clamp(2.0 * *hi + *lo - 1.0, 0.0, 1.0);
}

bool is_hard(const PolarityDistribution& p, double alpha) noexcept { return delta(p) <= alpha; }

PolarityDistribution interpolate(const PolarityDistribution& p, const PolarityDistribution& q, double w) {
  Probs out{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) {
    // Equal entries pass through untouched so that p is an exact fixed point.
    out[i] = p[i] == q[i] ? p[i] : (1.0 - w) * p[i] + w * q[i];
  }
  return PolarityDistribution::from_probs(out);
}

FusionOutcome fuse_cf(const PolarityDistribution& p, const PolarityDistribution& p_hat,
                      const FusionConfig& config) {
  validate(config);
  FusionOutcome out{p, argmax_label(p), delta(p), false};
  out.is_hard = out.delta <= config.alpha;
  if (!out.is_hard) return out;
  out.dist = interpolate(p, p_hat, config.beta);
  out.label = argmax_label(out.dist);
  return out;
}

PolarityDistribution fuse_average(const PolarityDistribution& p, const PolarityDistribution& p_hat) {
  return interpolate(p, p_hat, 0.5);
}

PolarityDistribution fuse_max(const PolarityDistribution& p, const PolarityDistribution& p_hat) {
  Probs out{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) out[i] = std::max(p[i], p_hat[i]);
  return PolarityDistribution::normalize(out);
}

namespace {

double kl_base2(const PolarityDistribution& p, const Probs& m) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumPolarities; ++i) {
    if (p[i] > 0.0) sum += p[i] * std::log2(p[i] / m[i]);
  }
  return sum;
}

}  // namespace

double js_divergence(const PolarityDistribution& p, const PolarityDistribution& q) noexcept {
  Probs m{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) m[i] = 0.5 * (p[i] + q[i]);
  return std::clamp(0.5 * kl_base2(p, m) + 0.5 * kl_base2(q, m), 0.0, 1.0);
}

PolarityDistribution fuse_js(const PolarityDistribution& p, const PolarityDistribution& p_hat) {
  return interpolate(p, p_hat, js_divergence(p, PolarityDistribution()));
}

double cxmi_ratio(const PolarityDistribution& p, const PolarityDistribution& p_hat) noexcept {
  const auto j = argmax_label(p);
  return p[j] / std::max(p_hat[j], 1e-12);
}

PolarityDistribution fuse_cxmi(const PolarityDistribution& p, const PolarityDistribution& p_hat,
                               double threshold) {
  return cxmi_ratio(p, p_hat) > threshold ? p : p_hat;
}

FusionOutcome fuse(const PolarityDistribution& p, const PolarityDistribution& p_hat,
                   const FusionConfig& config) {
  validate(config);
  if (config.strategy == Strategy::ContextualFusion) return fuse_cf(p, p_hat, config);

  FusionOutcome out{p, argmax_label(p), delta(p), false};
  out.is_hard = out.delta <= config.alpha;
  const bool gated = config.gate && config.strategy != Strategy::Interpolate;
  if (gated && !out.is_hard) return out;

  switch (config.strategy) {
    case Strategy::Interpolate: out.dist = interpolate(p, p_hat, config.beta); break;
    case Strategy::Average: out.dist = fuse_average(p, p_hat); break;
    case Strategy::Max: out.dist = fuse_max(p, p_hat); break;
    case Strategy::JsDivergence: out.dist = fuse_js(p, p_hat); break;
    case Strategy::Cxmi: out.dist = fuse_cxmi(p, p_hat, config.cxmi_threshold); break;
    case Strategy::ContextualFusion: break;
  }
  out.label = argmax_label(out.dist);
  return out;
}

PredictionRecord make_prediction_record(std::string sample_id, const PolarityDistribution& p,
                                        const PolarityDistribution& p_hat, const FusionConfig& config,
                                        std::optional<std::string> knowledge_type) {
  const auto outcome = fuse(p, p_hat, config);
  PredictionRecord r;
  r.sample_id = std::move(sample_id);
  r.base = p;
  r.with_context = p_hat;
  r.fused = outcome.dist;
  r.delta = outcome.delta;
  r.is_hard = outcome.is_hard;
  r.final_label = outcome.label;
  r.strategy = std::string(to_string(config.strategy));
  r.knowledge_type = std::move(knowledge_type);
  return r;
}

}  // namespace ctxsent
