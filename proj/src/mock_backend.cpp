#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ctxsent/backend.hpp"
#include "ctxsent/digest.hpp"
#include "ctxsent/error.hpp"

namespace ctxsent {

namespace {

// mt19937_64 output is fully specified by the standard; the double
// conversion below is done by hand because std::uniform_real_distribution
// is not portable bit-for-bit.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t pick(std::size_t n) {
    return std::min(static_cast<std::size_t>(uniform() * static_cast<double>(n)), n - 1);
  }

 private:
  std::mt19937_64 engine_;
};

Stream make_stream(std::uint64_t seed, std::string_view purpose, std::string_view key,
                   std::string_view extra = {}) {
  const auto material = DigestBuilder().add(std::to_string(seed)).add(purpose).add(key).add(extra).hex();
  return Stream(digest_u64(material));
}

// Any class other than `excluded`, chosen by the stream.
std::size_t other_than(std::size_t excluded, Stream& s) {
  const std::size_t offset = 1 + s.pick(2);
  return (excluded + offset) % kNumPolarities;
}

std::size_t remaining(std::size_t a, std::size_t b) { return 3 - a - b; }

struct Latent {
  bool hard = false;
  double base_accuracy = 0.0;
};

Latent latent_for(const MockOracle& oracle, std::string_view sample_key) {
  auto s = make_stream(oracle.seed, "latent", sample_key);
  Latent latent;
  latent.hard = s.uniform() < oracle.hard_fraction;
  // Spread accuracies so hard_fraction * hard + (1 - hard_fraction) * easy
  // equals base_accuracy, and both stay inside [0, 1].
  const double base = oracle.base_accuracy;
  const double spread = 1.3 * std::min(base, 1.0 - base);
  latent.base_accuracy = latent.hard ? base - spread * (1.0 - oracle.hard_fraction)
                                     : base + spread * oracle.hard_fraction;
  latent.base_accuracy = std::clamp(latent.base_accuracy, 0.0, 1.0);
  return latent;
}

std::size_t draw_prediction(const std::optional<Polarity>& gold, double accuracy, Stream& s) {
  const double u = s.uniform();
  if (!gold) return s.pick(kNumPolarities);
  const auto g = index_of(*gold);
  if (u < accuracy) return g;
  return other_than(g, s);
}

constexpr const char* kFiller[] = {
    "The scene suggests a notable public event.",
    "Local history gives the image a specific meaning.",
    "The people shown appear to react to recent news.",
    "Similar images have circulated during earlier crises.",
    "The setting points to a well known location.",
    "Commentators often read such posts as ironic.",
    "The visual contrast emphasises a change over time.",
    "Background events shape how readers feel about it.",
};

int word_count(const std::string& text) {
  std::istringstream in(text);
  std::string w;
  int n = 0;
  while (in >> w) ++n;
  return n;
}

}  // namespace

MockBackend::MockBackend(BackendConfig config) : config_(std::move(config)) {
  config_.kind = BackendKind::Mock;
  validate(config_);
}

std::string MockBackend::fingerprint() const {
  std::ostringstream out;
  out.precision(17);
  out << "mock|seed=" << config_.mock.seed << "|base=" << config_.mock.base_accuracy
      << "|hard_ctx=" << config_.mock.hard_context_accuracy
      << "|easy_ctx=" << config_.mock.easy_context_accuracy
      << "|hard_frac=" << config_.mock.hard_fraction;
  return out.str();
}

std::string MockBackend::request_salt(const ScoreRequest& request) const {
  const auto& h = request.hint;
  return DigestBuilder()
      .add(h.sample_key)
      .add(h.gold ? std::string(to_string(*h.gold)) : std::string("-"))
      .add(h.context_key.value_or("-"))
      .hex();
}

std::string MockBackend::generate(const GenerateRequest& request) {
  const auto& hash = request.prompt.hash;
  auto s = make_stream(config_.mock.seed, "generate", hash, config_.model_id);
  std::ostringstream out;
  out << "[mock " << config_.model_id << " seed=" << config_.mock.seed
      << " prompt=" << hash.substr(0, 16) << "]";
  const std::size_t n = 2 + s.pick(3);
  for (std::size_t i = 0; i < n; ++i) out << ' ' << kFiller[s.pick(std::size(kFiller))];
  return out.str();
}

bool MockBackend::is_latent_hard(std::string_view sample_key) const {
  return latent_for(config_.mock, sample_key).hard;
}

PolarityDistribution MockBackend::oracle_distribution(const OracleHint& hint,
                                                      std::string_view prompt_hash) const {
  const std::string_view key = hint.sample_key.empty() ? prompt_hash : std::string_view(hint.sample_key);
  const Latent latent = latent_for(config_.mock, key);
  Probs probs{};

  if (!hint.context_key) {
    auto s = make_stream(config_.mock.seed, "base", key);
    const auto pred = draw_prediction(hint.gold, latent.base_accuracy, s);
    const bool wrong = hint.gold && pred != index_of(*hint.gold);
    if (latent.hard) {
      // Top-two gap g in [0, 0.28]; third mass c keeps the runner-up >= c.
      const double g = 0.28 * s.uniform();
      const double c = 0.02 + ((1.0 - g) / 3.0 - 0.02) * s.uniform();
      const std::size_t runner = wrong ? index_of(*hint.gold) : other_than(pred, s);
      probs[pred] = (1.0 + g - c) / 2.0;
      probs[runner] = (1.0 - g - c) / 2.0;
      probs[remaining(pred, runner)] = c;
    } else {
      const double top = 0.7 + 0.25 * s.uniform();
      const double share = 0.5 + 0.45 * s.uniform();
      const std::size_t runner = other_than(pred, s);
      probs[pred] = top;
      probs[runner] = (1.0 - top) * share;
      probs[remaining(pred, runner)] = (1.0 - top) * (1.0 - share);
    }
  } else {
    auto s = make_stream(config_.mock.seed, "context", key, *hint.context_key);
    const double accuracy =
        latent.hard ? config_.mock.hard_context_accuracy : config_.mock.easy_context_accuracy;
    const auto pred = draw_prediction(hint.gold, accuracy, s);
    const double top = 0.55 + 0.35 * s.uniform();
    const double share = 0.5 + 0.45 * s.uniform();
    const std::size_t runner = other_than(pred, s);
    probs[pred] = top;
    probs[runner] = (1.0 - top) * share;
    probs[remaining(pred, runner)] = (1.0 - top) * (1.0 - share);
  }
  return PolarityDistribution::normalize(probs);
}

ChoiceScores MockBackend::score_choices(const ScoreRequest& request) {
  if (!config_.mock.supports_scoring) {
    throw CapabilityError("backend '" + config_.model_id + "' does not support choice likelihoods");
  }
  const auto dist = oracle_distribution(request.hint, request.prompt.hash);
  std::array<double, kNumPolarities> total{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) total[i] = std::log(dist[i]);
  if (config_.normalization == Normalization::PerToken) {
    std::array<int, kNumPolarities> counts{};
    for (std::size_t i = 0; i < kNumPolarities; ++i) {
      counts[i] = std::max(1, word_count(request.choices[i]));
    }
    return normalize_per_token(total, counts);
  }
  return ChoiceScores{total, Normalization::Total};
}

}  // namespace ctxsent
