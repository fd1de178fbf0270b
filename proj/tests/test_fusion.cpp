#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ctxsent/error.hpp"
#include "ctxsent/fusion.hpp"
#include "support.hpp"

using namespace ctxsent;

namespace {

PolarityDistribution dist(double a, double b, double c) { return PolarityDistribution::from_probs({a, b, c}); }

void check_close(const PolarityDistribution& got, const Probs& want, double tol = 1e-12) {
  for (std::size_t i = 0; i < 3; ++i) {
    CAPTURE(i);
    CHECK(std::abs(got[i] - want[i]) <= tol);
  }
}

FusionConfig cf(double alpha, double beta) {
  FusionConfig c;
  c.alpha = alpha;
  c.beta = beta;
  return c;
}

// Reference Jensen-Shannon divergence, written out term by term.
double reference_js(const Probs& p, const Probs& q) {
  double js = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double m = (p[i] + q[i]) / 2.0;
    if (p[i] > 0) js += 0.5 * p[i] * std::log(p[i] / m) / std::log(2.0);
    if (q[i] > 0) js += 0.5 * q[i] * std::log(q[i] / m) / std::log(2.0);
  }
  return js;
}

}  // namespace

TEST_CASE("delta examples") {
  CHECK(delta(PolarityDistribution()) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(delta(dist(1, 0, 0)) == 1.0);
  CHECK(delta(dist(0.5, 0.3, 0.2)) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("is_hard examples, boundary inclusive") {
  CHECK(is_hard(PolarityDistribution(), 0.3));
  CHECK_FALSE(is_hard(dist(1, 0, 0), 0.3));
  // 2 * 0.5 + 0.2 - 1 evaluates to exactly 0.2 in binary floating point.
  CHECK(delta(dist(0.5, 0.3, 0.2)) <= 0.2);
  CHECK(is_hard(dist(0.5, 0.3, 0.2), 0.2));
}

TEST_CASE("property: delta equals the top-two gap") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 10000; ++i) {
    const auto p = testing::random_distribution(rng);
    auto v = p.probs();
    std::sort(v.begin(), v.end());
    const double d = delta(p);
    CHECK(std::abs(d - (v[2] - v[1])) <= 1e-9);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("cf leaves confident samples alone") {
  const auto p = dist(1, 0, 0);
  const auto out = fuse_cf(p, dist(0, 0, 1), cf(0.3, 0.9));
  CHECK(out.dist == p);
  CHECK(out.label == Polarity::Negative);
  CHECK_FALSE(out.is_hard);
  CHECK(out.delta == 1.0);
}

TEST_CASE("cf with beta 0 ignores the context") {
  const auto p = dist(0.4, 0.4, 0.2);
  CHECK(fuse_cf(p, dist(0, 0, 1), cf(0.3, 0.0)).dist == p);
}

TEST_CASE("cf worked example") {
  // (0.4,0.4,0.2) + 0.5 * ((0.8,0.1,0.1) - (0.4,0.4,0.2)) = (0.6,0.25,0.15)
  const auto out = fuse_cf(dist(0.4, 0.4, 0.2), dist(0.8, 0.1, 0.1), cf(0.3, 0.5));
  CHECK(out.is_hard);
  CHECK(out.delta == doctest::Approx(0.0).epsilon(1e-15));
  check_close(out.dist, {0.6, 0.25, 0.15});
  CHECK(out.label == Polarity::Negative);
}

TEST_CASE("cf rejects out-of-range settings") {
  CHECK_THROWS_AS(fuse_cf(dist(0.4, 0.4, 0.2), dist(0.8, 0.1, 0.1), cf(0.3, 1.5)), ConfigError);
  CHECK_THROWS_AS(fuse_cf(dist(0.4, 0.4, 0.2), dist(0.8, 0.1, 0.1), cf(0.3, -0.1)), ConfigError);
  CHECK_THROWS_AS(fuse_cf(dist(0.4, 0.4, 0.2), dist(0.8, 0.1, 0.1), cf(1.1, 0.5)), ConfigError);
}

TEST_CASE("property: cf contract on random inputs") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const auto p = testing::random_distribution(rng);
    const auto q = testing::random_distribution(rng);
    const auto config = cf(u(rng), u(rng));
    const auto out = fuse_cf(p, q, config);
    double sum = 0.0;
    for (double x : out.dist.probs()) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    if (!is_hard(p, config.alpha)) {
      CHECK(out.dist == p);
      CHECK(out.label == argmax_label(p));
    }
    CHECK(fuse_cf(p, q, cf(config.alpha, 0.0)).dist == p);
    if (is_hard(p, config.alpha)) CHECK(fuse_cf(p, q, cf(config.alpha, 1.0)).dist == q);
    CHECK(fuse_cf(p, p, config).dist == p);
  }
}

TEST_CASE("average") {
  const auto p = dist(0.2, 0.3, 0.5);
  CHECK(fuse_average(p, p) == p);
  check_close(fuse_average(dist(1, 0, 0), dist(0, 1, 0)), {0.5, 0.5, 0.0});
  check_close(fuse_average(p, dist(0.6, 0.3, 0.1)), {0.4, 0.3, 0.3});
}

TEST_CASE("max") {
  const auto p = dist(0.5, 0.3, 0.2);
  check_close(fuse_max(p, p), p.probs());
  // raw (0.5, 0.5, 0.3) over 1.3
  check_close(fuse_max(p, dist(0.2, 0.5, 0.3)), {0.5 / 1.3, 0.5 / 1.3, 0.3 / 1.3});
  for (auto k : kAllPolarities) {
    CHECK(argmax_label(fuse_max(PolarityDistribution::one_hot(k), PolarityDistribution())) == k);
  }
}

TEST_CASE("property: max preserves a one-hot argmax against random partners") {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 2000; ++i) {
    const auto k = kAllPolarities[i % 3];
    const auto q = testing::random_distribution(rng);
    const auto fused = fuse_max(PolarityDistribution::one_hot(k), q);
    // Brute force: the one-hot entry is 1, every other raw entry is < 1 unless q is one-hot elsewhere.
    if (q[index_of(k)] > 0.0 || std::none_of(q.probs().begin(), q.probs().end(), [](double x) { return x == 1.0; })) {
      CHECK(fused[k] >= fused[(index_of(k) + 1) % 3]);
      CHECK(fused[k] >= fused[(index_of(k) + 2) % 3]);
    }
  }
}

TEST_CASE("js divergence values") {
  CHECK(js_divergence(PolarityDistribution(), PolarityDistribution()) == 0.0);
  // M = (2/3, 1/6, 1/6)
  const double m0 = 2.0 / 3.0, m1 = 1.0 / 6.0, third = 1.0 / 3.0;
  const double expected =
      0.5 * std::log2(1.0 / m0) + 0.5 * (third * std::log2(third / m0) + 2 * third * std::log2(third / m1));
  const double js = js_divergence(dist(1, 0, 0), PolarityDistribution());
  CHECK(js == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(js - 0.4591) <= 1e-3);
  CHECK(fuse_js(PolarityDistribution(), dist(0.1, 0.1, 0.8)) == PolarityDistribution());
}

TEST_CASE("property: js is symmetric, bounded and matches the reference") {
  std::mt19937_64 rng(34);
  for (int i = 0; i < 1000; ++i) {
    const auto p = testing::random_distribution(rng);
    const auto q = testing::random_distribution(rng);
    const double a = js_divergence(p, q);
    CHECK(std::abs(a - js_divergence(q, p)) <= 1e-12);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(std::abs(a - reference_js(p.probs(), q.probs())) <= 1e-12);
  }
}

TEST_CASE("cxmi gate") {
  const auto p = dist(0.3, 0.3, 0.4);
  CHECK(cxmi_ratio(p, p) == 1.0);
  CHECK(fuse_cxmi(p, p, 1.1) == p);
  const auto confident = dist(0.9, 0.05, 0.05);
  const auto hat = dist(0.5, 0.3, 0.2);
  CHECK(cxmi_ratio(confident, hat) == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(fuse_cxmi(confident, hat, 1.1) == confident);
  CHECK(fuse_cxmi(confident, hat, 2.0) == hat);
  CHECK(std::isfinite(cxmi_ratio(confident, dist(0, 1, 0))));
}

TEST_CASE("cxmi threshold sweep is monotone in how often context is taken") {
  std::mt19937_64 rng(35);
  std::vector<std::pair<PolarityDistribution, PolarityDistribution>> pairs;
  for (int i = 0; i < 500; ++i) pairs.emplace_back(testing::random_distribution(rng), testing::random_distribution(rng));
  std::size_t previous = 0;
  for (double t = 0.5; t <= 2.0 + 1e-9; t += 0.1) {
    std::size_t taken = 0;
    for (const auto& [p, q] : pairs) taken += fuse_cxmi(p, q, t) == q && !(p == q);
    CHECK(taken >= previous);
    previous = taken;
  }
}

TEST_CASE("dispatcher applies gate rules") {
  const auto hard_p = dist(0.4, 0.35, 0.25);
  const auto easy_p = dist(0.8, 0.1, 0.1);
  const auto hat = dist(0.1, 0.1, 0.8);
  FusionConfig c;
  c.beta = 1.0;

  c.strategy = Strategy::Interpolate;
  CHECK(fuse(easy_p, hat, c).dist == hat);  // never gated
  c.strategy = Strategy::ContextualFusion;
  CHECK(fuse(easy_p, hat, c).dist == easy_p);
  CHECK(fuse(hard_p, hat, c).dist == hat);

  c.strategy = Strategy::Average;
  CHECK(fuse(easy_p, hat, c).dist == fuse_average(easy_p, hat));
  c.gate = true;
  CHECK(fuse(easy_p, hat, c).dist == easy_p);
  CHECK(fuse(hard_p, hat, c).dist == fuse_average(hard_p, hat));

  c.strategy = Strategy::Max;
  CHECK(fuse(hard_p, hat, c).dist == fuse_max(hard_p, hat));
  c.strategy = Strategy::JsDivergence;
  CHECK(fuse(hard_p, hat, c).dist == fuse_js(hard_p, hat));
  c.strategy = Strategy::Cxmi;
  CHECK(fuse(hard_p, hat, c).dist == fuse_cxmi(hard_p, hat, c.cxmi_threshold));
}

TEST_CASE("property: every strategy is pure and yields a valid distribution") {
  std::mt19937_64 rng(36);
  const Strategy all[] = {Strategy::ContextualFusion, Strategy::Interpolate, Strategy::Average,
                          Strategy::Max,              Strategy::JsDivergence, Strategy::Cxmi};
  for (int i = 0; i < 2000; ++i) {
    const auto p = testing::random_distribution(rng);
    const auto q = testing::random_distribution(rng);
    for (auto s : all) {
      FusionConfig c;
      c.strategy = s;
      c.gate = i % 2 == 0;
      const auto a = fuse(p, q, c);
      const auto b = fuse(p, q, c);
      CHECK(a.dist == b.dist);
      CHECK(a.label == argmax_label(a.dist));
      double sum = 0.0;
      for (double x : a.dist.probs()) sum += x;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("strategy names and config JSON") {
  for (auto s : {Strategy::ContextualFusion, Strategy::Interpolate, Strategy::Average, Strategy::Max,
                 Strategy::JsDivergence, Strategy::Cxmi}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("median"), ConfigError);
  FusionConfig c;
  c.alpha = 0.25;
  c.beta = 0.6;
  c.strategy = Strategy::Max;
  c.gate = true;
  const auto back = Json(c).get<FusionConfig>();
  CHECK(back.alpha == 0.25);
  CHECK(back.beta == 0.6);
  CHECK(back.strategy == Strategy::Max);
  CHECK(back.gate);
  CHECK_THROWS_AS(Json::parse(R"({"beta": 2})").get<FusionConfig>(), ConfigError);
}

TEST_CASE("prediction records carry fusion details") {
  FusionConfig c;
  const auto r = make_prediction_record("id", dist(0.4, 0.4, 0.2), dist(0.8, 0.1, 0.1), c, std::string("social"));
  CHECK(r.is_hard);
  CHECK(r.fused.has_value());
  CHECK(r.with_context == dist(0.8, 0.1, 0.1));
  CHECK(r.strategy == "cf");
  CHECK(r.knowledge_type == std::optional<std::string>("social"));
}
