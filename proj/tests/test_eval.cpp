#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ctxsent/error.hpp"
#include "ctxsent/eval.hpp"
#include "support.hpp"

using namespace ctxsent;

namespace {

using Labels = std::vector<Polarity>;

struct OracleMetrics {
  double accuracy = 0;
  double precision[3] = {};
  double recall[3] = {};
  double f1[3] = {};
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
};

// Brute force: fill every confusion cell by scanning the whole label list.
OracleMetrics oracle_metrics(const Labels& gold, const Labels& pred) {
  int cm[3][3] = {};
  for (int g = 0; g < 3; ++g) {
    for (int p = 0; p < 3; ++p) {
      for (std::size_t i = 0; i < gold.size(); ++i) {
        if (static_cast<int>(gold[i]) == g && static_cast<int>(pred[i]) == p) ++cm[g][p];
      }
    }
  }
  OracleMetrics m;
  int diag = 0;
  for (int c = 0; c < 3; ++c) {
    diag += cm[c][c];
    int col = 0, row = 0;
    for (int k = 0; k < 3; ++k) {
      col += cm[k][c];
      row += cm[c][k];
    }
    m.precision[c] = col == 0 ? 0.0 : static_cast<double>(cm[c][c]) / col;
    m.recall[c] = row == 0 ? 0.0 : static_cast<double>(cm[c][c]) / row;
    const double denom = m.precision[c] + m.recall[c];
    m.f1[c] = denom == 0.0 ? 0.0 : 2.0 * m.precision[c] * m.recall[c] / denom;
  }
  m.accuracy = static_cast<double>(diag) / static_cast<double>(gold.size());
  m.macro_precision = (m.precision[0] + m.precision[1] + m.precision[2]) / 3.0;
  m.macro_recall = (m.recall[0] + m.recall[1] + m.recall[2]) / 3.0;
  m.macro_f1 = (m.f1[0] + m.f1[1] + m.f1[2]) / 3.0;
  return m;
}

Labels random_labels(std::mt19937_64& rng, std::size_t n) {
  Labels out(n);
  for (auto& l : out) l = kAllPolarities[rng() % 3];
  return out;
}

PredictionRecord record(const std::string& id, const Probs& base, Polarity final_label, double alpha = 0.3) {
  PredictionRecord r;
  r.sample_id = id;
  r.base = PolarityDistribution::from_probs(base);
  r.delta = 0.0;
  {
    auto v = base;
    std::sort(v.begin(), v.end());
    r.delta = v[2] - v[1];
  }
  r.is_hard = r.delta <= alpha;
  r.final_label = final_label;
  r.strategy = "cf";
  return r;
}

constexpr auto N = Polarity::Negative;
constexpr auto U = Polarity::Neutral;
constexpr auto P = Polarity::Positive;

}  // namespace

TEST_CASE("metrics worked example") {
  const Labels gold{N, U, P, P};
  const Labels pred{N, P, P, P};
  const auto m = compute_metrics(gold, pred);
  const auto o = oracle_metrics(gold, pred);
  CHECK(m.accuracy == 0.75);
  CHECK(m.per_class[0].f1 == 1.0);
  CHECK(m.per_class[1].f1 == 0.0);
  CHECK(m.per_class[2].f1 == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(m.macro_f1 == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m.macro_f1 == o.macro_f1);
}

TEST_CASE("perfect and constant predictions") {
  const Labels gold{N, U, P, N, U, P};
  const auto perfect = compute_metrics(gold, gold);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  CHECK(perfect.macro_precision == 1.0);
  CHECK(perfect.macro_recall == 1.0);
  const auto constant = compute_metrics(gold, Labels(6, U));
  CHECK(constant.accuracy == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("metrics input errors") {
  CHECK_THROWS_AS(compute_metrics(Labels{N}, Labels{N, N}), ValidationError);
  CHECK_THROWS_AS(compute_metrics(Labels{}, Labels{}), ValidationError);
}

TEST_CASE("property: metrics match the brute-force oracle exactly") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 50;
    const auto gold = random_labels(rng, n);
    const auto pred = random_labels(rng, n);
    const auto m = compute_metrics(gold, pred);
    const auto o = oracle_metrics(gold, pred);
    CHECK(m.accuracy == o.accuracy);
    CHECK(m.macro_precision == o.macro_precision);
    CHECK(m.macro_recall == o.macro_recall);
    CHECK(m.macro_f1 == o.macro_f1);
    for (int c = 0; c < 3; ++c) {
      CHECK(m.per_class[c].precision == o.precision[c]);
      CHECK(m.per_class[c].recall == o.recall[c]);
      CHECK(m.per_class[c].f1 == o.f1[c]);
    }
  }
}

TEST_CASE("property: macro-F1 ignores sample order") {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng() % 40;
    auto gold = random_labels(rng, n);
    auto pred = random_labels(rng, n);
    const double before = compute_metrics(gold, pred).macro_f1;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Labels g2, p2;
    for (auto i : order) {
      g2.push_back(gold[i]);
      p2.push_back(pred[i]);
    }
    CHECK(compute_metrics(g2, p2).macro_f1 == before);
  }
}

TEST_CASE("entropy extremes") {
  CHECK(entropy_bits(PolarityDistribution()) == doctest::Approx(std::log2(3.0)).epsilon(1e-15));
  CHECK(std::abs(entropy_bits(PolarityDistribution()) - 1.58496) < 1e-5);
  CHECK(entropy_bits(PolarityDistribution::one_hot(Polarity::Positive)) == 0.0);
  const auto edges = equal_width_entropy_edges(8);
  CHECK(edges.size() == 9);
  CHECK(edges.front() == 0.0);
  CHECK(edges.back() == std::log2(3.0));
}

TEST_CASE("error rate by entropy buckets") {
  const std::map<std::string, Polarity> golds{{"a", N}, {"b", P}, {"c", U}, {"d", N}};
  const std::vector<PredictionRecord> records = {
      record("a", {1.0, 0.0, 0.0}, N),          // entropy 0, base right
      record("b", {0.4, 0.35, 0.25}, P),        // high entropy, base wrong, fixed
      record("c", {1.0 / 3, 1.0 / 3, 1.0 / 3}, N),  // top bucket, both wrong
      record("d", {0.9, 0.05, 0.05}, N),
  };
  const auto edges = equal_width_entropy_edges(2);
  const auto all = error_rate_by_entropy(records, golds, edges, false, 0.3);
  CHECK(all.analyzed == 4);
  REQUIRE(all.buckets.size() == 2);
  CHECK(all.buckets[0].count == 2);
  CHECK(*all.buckets[0].base_error_rate == 0.0);
  CHECK(all.buckets[1].count == 2);
  CHECK(*all.buckets[1].base_error_rate == 1.0);
  CHECK(*all.buckets[1].final_error_rate == 0.5);

  const auto hard = error_rate_by_entropy(records, golds, edges, true, 0.3);
  CHECK(hard.analyzed == 2);
  CHECK(hard.buckets[0].count == 0);
  CHECK_FALSE(hard.buckets[0].base_error_rate.has_value());
  const auto csv = to_csv(hard);
  CHECK(csv.rfind("lower,upper,count,base_error_rate,final_error_rate\n", 0) == 0);
  CHECK(csv.find("NA") != std::string::npos);
  CHECK(to_json(hard)["buckets"][0]["base_error_rate"].is_null());

  CHECK_THROWS_AS(error_rate_by_entropy(records, {{"a", N}}, edges, false, 0.3), ValidationError);
}

TEST_CASE("sweep boundaries") {
  std::mt19937_64 rng(43);
  std::vector<DevItem> items;
  Labels gold, base_pred, ctx_pred;
  for (int i = 0; i < 300; ++i) {
    DevItem item{testing::random_distribution(rng), testing::random_distribution(rng), kAllPolarities[rng() % 3]};
    items.push_back(item);
    gold.push_back(item.gold);
    base_pred.push_back(argmax_label(item.base));
    ctx_pred.push_back(argmax_label(item.with_context));
  }
  const double base_f1 = compute_metrics(gold, base_pred).macro_f1;
  const double ctx_f1 = compute_metrics(gold, ctx_pred).macro_f1;

  SweepOptions only_zero{SweepMode::TwoPhase, {0.3}, {0.0}, 0.3, 1};
  const auto r0 = sweep(items, FusionConfig{}, only_zero);
  CHECK(r0.best_f1 == base_f1);
  CHECK(r0.base_f1 == base_f1);

  SweepOptions only_one{SweepMode::FullGrid, {1.0}, {1.0}, 0.3, 1};
  CHECK(sweep(items, FusionConfig{}, only_one).best_f1 == ctx_f1);

  CHECK_THROWS_AS(sweep(items, FusionConfig{}, SweepOptions{SweepMode::FullGrid, {}, {0.5}, 0.3, 1}), ValidationError);
  CHECK_THROWS_AS(sweep({}, FusionConfig{}, only_zero), ValidationError);
}

TEST_CASE("sweep selection rules") {
  std::mt19937_64 rng(44);
  std::vector<DevItem> items;
  for (int i = 0; i < 200; ++i) {
    const auto gold = kAllPolarities[rng() % 3];
    // Helpful context: mostly right.
    const auto ctx_label = rng() % 10 < 8 ? gold : kAllPolarities[rng() % 3];
    Probs ctx{0.1, 0.1, 0.1};
    ctx[index_of(ctx_label)] = 0.8;
    items.push_back({testing::random_distribution(rng), PolarityDistribution::from_probs(ctx), gold});
  }
  const std::vector<double> grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  for (auto mode : {SweepMode::TwoPhase, SweepMode::FullGrid}) {
    const auto r = sweep(items, FusionConfig{}, SweepOptions{mode, grid, grid, 0.3, 3});
    CAPTURE(to_string(mode));
    CHECK(r.best_beta > 0.0);
    CHECK(r.best_f1 >= r.base_f1);
    FusionConfig chosen;
    chosen.alpha = r.best_alpha;
    chosen.beta = r.best_beta;
    CHECK(fused_macro_f1(items, chosen) == r.best_f1);
    // Attains the maximum over its evaluated points and breaks ties toward small beta, then alpha.
    for (const auto& p : r.grid) {
      if (mode == SweepMode::TwoPhase && p.phase == 1) continue;
      CHECK(p.macro_f1 <= r.best_f1);
      if (p.macro_f1 == r.best_f1) {
        CHECK((p.beta > r.best_beta || (p.beta == r.best_beta && p.alpha >= r.best_alpha)));
      }
    }
  }
  const auto two = sweep(items, FusionConfig{}, SweepOptions{SweepMode::TwoPhase, {0.5, 0.9}, grid, 0.3, 1});
  const bool has_phase1_alpha = std::any_of(two.grid.begin(), two.grid.end(),
                                            [](const SweepPoint& p) { return p.phase == 2 && p.alpha == 0.3; });
  CHECK(has_phase1_alpha);
  const auto j = to_json(two);
  CHECK(j["selected"]["beta"] == two.best_beta);
  CHECK(to_csv(two).rfind("phase,alpha,beta,macro_f1\n", 0) == 0);
}

TEST_CASE("sweep results do not depend on worker count") {
  std::mt19937_64 rng(45);
  std::vector<DevItem> items;
  for (int i = 0; i < 100; ++i) {
    items.push_back({testing::random_distribution(rng), testing::random_distribution(rng), kAllPolarities[i % 3]});
  }
  const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
  const auto a = sweep(items, FusionConfig{}, SweepOptions{SweepMode::FullGrid, grid, grid, 0.3, 1});
  const auto b = sweep(items, FusionConfig{}, SweepOptions{SweepMode::FullGrid, grid, grid, 0.3, 4});
  CHECK(to_json(a) == to_json(b));
}

TEST_CASE("knowledge type comparison") {
  const std::map<std::string, Polarity> golds{{"a", N}, {"b", P}, {"c", U}};
  const std::vector<PredictionRecord> set1 = {record("a", {0.5, 0.3, 0.2}, N), record("b", {0.4, 0.35, 0.25}, P),
                                              record("c", {0.2, 0.3, 0.5}, P)};
  auto rows = compare_knowledge_types({{"historical", set1}, {"cultural", set1}}, golds);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].knowledge_type == "base");
  CHECK(rows[0].metrics.macro_f1 == compute_metrics(Labels{N, P, U}, Labels{N, N, P}).macro_f1);
  CHECK(rows[1].metrics.macro_f1 == rows[2].metrics.macro_f1);
  CHECK(rows[1].metrics.accuracy == compute_metrics(Labels{N, P, U}, Labels{N, P, P}).accuracy);

  std::vector<std::pair<std::string, std::vector<PredictionRecord>>> eleven;
  for (int i = 0; i < 11; ++i) eleven.emplace_back("type" + std::to_string(i), set1);
  CHECK(compare_knowledge_types(eleven, golds).size() == 12);

  auto short_set = set1;
  short_set.pop_back();
  CHECK_THROWS_AS(compare_knowledge_types({{"a", set1}, {"b", short_set}}, golds), ValidationError);
  const auto csv = to_csv(rows);
  CHECK(csv.rfind("knowledge_type,n,accuracy,macro_precision,macro_recall,macro_f1\nbase,3,", 0) == 0);
}
