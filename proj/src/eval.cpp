#include "ctxsent/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ctxsent/error.hpp"
#include "ctxsent/parallel.hpp"

namespace ctxsent {

namespace {

// Shortest round-trip representation, identical to the JSON output.
std::string num(double v) { return Json(v).dump(); }

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

MetricsReport compute_metrics(std::span<const Polarity> golds, std::span<const Polarity> preds) {
  if (golds.size() != preds.size()) {
    throw ValidationError("gold/prediction length mismatch: " + std::to_string(golds.size()) + " vs " +
                          std::to_string(preds.size()));
  }
  if (golds.empty()) throw ValidationError("cannot compute metrics on an empty set");

  std::array<std::size_t, kNumPolarities> tp{}, predicted{}, actual{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto g = index_of(golds[i]);
    const auto p = index_of(preds[i]);
    ++actual[g];
    ++predicted[p];
    if (g == p) {
      ++tp[g];
      ++correct;
    }
  }

  MetricsReport m;
  m.n = golds.size();
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  for (std::size_t c = 0; c < kNumPolarities; ++c) {
    auto& pc = m.per_class[c];
    pc.support = actual[c];
    pc.precision = safe_ratio(tp[c], predicted[c]);
    pc.recall = safe_ratio(tp[c], actual[c]);
    pc.f1 = safe_ratio(2.0 * pc.precision * pc.recall, pc.precision + pc.recall);
    m.macro_precision += pc.precision;
    m.macro_recall += pc.recall;
    m.macro_f1 += pc.f1;
  }
  m.macro_precision /= kNumPolarities;
  m.macro_recall /= kNumPolarities;
  m.macro_f1 /= kNumPolarities;
  return m;
}

Json to_json(const MetricsReport& m) {
  Json per_class = Json::object();
  for (auto p : kAllPolarities) {
    const auto& c = m.per_class[index_of(p)];
    per_class[std::string(to_string(p))] = {
        {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  }
  return Json{{"n", m.n},
              {"accuracy", m.accuracy},
              {"macro_precision", m.macro_precision},
              {"macro_recall", m.macro_recall},
              {"macro_f1", m.macro_f1},
              {"per_class", per_class}};
}

double entropy_bits(const PolarityDistribution& p) noexcept {
  double h = 0.0;
  for (std::size_t i = 0; i < kNumPolarities; ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log2(p[i]);
  }
  return std::clamp(h, 0.0, std::log2(3.0));
}

std::vector<double> equal_width_entropy_edges(int bins) {
  if (bins < 1) throw ValidationError("entropy bucket count must be >= 1");
  const double top = std::log2(3.0);
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) edges[i] = top * i / bins;
  edges.back() = top;
  return edges;
}

EntropyBucketReport error_rate_by_entropy(const std::vector<PredictionRecord>& records,
                                          const std::map<std::string, Polarity>& golds,
                                          const std::vector<double>& edges, bool hard_only, double alpha) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    throw ValidationError("entropy bucket edges must be sorted with at least two entries");
  }
  EntropyBucketReport report;
  report.edges = edges;
  report.hard_only = hard_only;
  report.alpha = alpha;
  const std::size_t nb = edges.size() - 1;
  std::vector<std::size_t> count(nb, 0), base_wrong(nb, 0), final_wrong(nb, 0);

  for (const auto& r : records) {
    const auto gold = golds.find(r.sample_id);
    if (gold == golds.end()) throw ValidationError("no gold label for sample " + r.sample_id);
    if (hard_only && !(r.delta <= alpha)) continue;
    const double h = entropy_bits(r.base);
    // Right-closed last bucket; values outside the edges clamp to the ends.
    auto it = std::upper_bound(edges.begin(), edges.end(), h);
    std::size_t b = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
    b = std::min(b, nb - 1);
    ++count[b];
    if (argmax_label(r.base) != gold->second) ++base_wrong[b];
    if (r.final_label != gold->second) ++final_wrong[b];
    ++report.analyzed;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    EntropyBucket bucket{edges[b], edges[b + 1], count[b], std::nullopt, std::nullopt};
    if (count[b] > 0) {
      bucket.base_error_rate = static_cast<double>(base_wrong[b]) / count[b];
      bucket.final_error_rate = static_cast<double>(final_wrong[b]) / count[b];
    }
    report.buckets.push_back(bucket);
  }
  return report;
}

Json to_json(const EntropyBucketReport& r) {
  Json buckets = Json::array();
  for (const auto& b : r.buckets) {
    buckets.push_back({{"lower", b.lower},
                       {"upper", b.upper},
                       {"count", b.count},
                       {"base_error_rate", b.base_error_rate ? Json(*b.base_error_rate) : Json(nullptr)},
                       {"final_error_rate", b.final_error_rate ? Json(*b.final_error_rate) : Json(nullptr)}});
  }
  return Json{{"entropy_base", 2},
              {"edges", r.edges},
              {"hard_only", r.hard_only},
              {"alpha", r.alpha},
              {"analyzed", r.analyzed},
              {"buckets", buckets}};
}

std::string to_csv(const EntropyBucketReport& r) {
  std::ostringstream out;
  out << "lower,upper,count,base_error_rate,final_error_rate\n";
  for (const auto& b : r.buckets) {
    out << num(b.lower) << ',' << num(b.upper) << ',' << b.count << ','
        << (b.base_error_rate ? num(*b.base_error_rate) : "NA") << ','
        << (b.final_error_rate ? num(*b.final_error_rate) : "NA") << '\n';
  }
  return out.str();
}

std::string_view to_string(SweepMode m) noexcept { return m == SweepMode::TwoPhase ? "two-phase" : "full-grid"; }

SweepMode parse_sweep_mode(std::string_view text) {
  if (text == "two-phase") return SweepMode::TwoPhase;
  if (text == "full-grid") return SweepMode::FullGrid;
  throw ConfigError("unknown sweep mode '" + std::string(text) + "' (expected two-phase or full-grid)");
}

double fused_macro_f1(const std::vector<DevItem>& items, const FusionConfig& config) {
  std::vector<Polarity> golds, preds;
  golds.reserve(items.size());
  preds.reserve(items.size());
  for (const auto& item : items) {
    golds.push_back(item.gold);
    preds.push_back(fuse(item.base, item.with_context, config).label);
  }
  return compute_metrics(golds, preds).macro_f1;
}

namespace {

std::vector<SweepPoint> evaluate_points(const std::vector<DevItem>& items, const FusionConfig& base,
                                        std::vector<SweepPoint> points, int workers) {
  parallel_for(points.size(), workers, [&](std::size_t i) {
    FusionConfig config = base;
    config.alpha = points[i].alpha;
    config.beta = points[i].beta;
    points[i].macro_f1 = fused_macro_f1(items, config);
  });
  return points;
}

// Strictly better F1 wins; equal F1 prefers smaller beta, then smaller alpha.
bool better(const SweepPoint& a, const SweepPoint& b) {
  if (a.macro_f1 != b.macro_f1) return a.macro_f1 > b.macro_f1;
  if (a.beta != b.beta) return a.beta < b.beta;
  return a.alpha < b.alpha;
}

const SweepPoint& best_of(const std::vector<SweepPoint>& points, std::size_t first, std::size_t last) {
  const SweepPoint* best = &points[first];
  for (std::size_t i = first + 1; i < last; ++i) {
    if (better(points[i], *best)) best = &points[i];
  }
  return *best;
}

}  // namespace

SweepResult sweep(const std::vector<DevItem>& items, const FusionConfig& base, const SweepOptions& options) {
  if (options.alpha_grid.empty() || options.beta_grid.empty()) {
    throw ValidationError("sweep grids must not be empty");
  }
  if (items.empty()) throw ValidationError("sweep needs at least one dev item");
  for (double a : options.alpha_grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("alpha grid values must be in [0,1]");
  }
  for (double b : options.beta_grid) {
    if (!(b >= 0.0 && b <= 1.0)) throw ValidationError("beta grid values must be in [0,1]");
  }

  SweepResult result;
  {
    std::vector<Polarity> golds, preds;
    for (const auto& item : items) {
      golds.push_back(item.gold);
      preds.push_back(argmax_label(item.base));
    }
    result.base_f1 = compute_metrics(golds, preds).macro_f1;
  }

  if (options.mode == SweepMode::FullGrid) {
    std::vector<SweepPoint> points;
    for (double b : options.beta_grid) {
      for (double a : options.alpha_grid) points.push_back({a, b, 0.0, 0});
    }
    result.grid = evaluate_points(items, base, std::move(points), options.workers);
    const auto& best = best_of(result.grid, 0, result.grid.size());
    result.best_alpha = best.alpha;
    result.best_beta = best.beta;
    result.best_f1 = best.macro_f1;
    result.rule = "full-grid:max-f1,min-beta,min-alpha";
    return result;
  }

  std::vector<SweepPoint> phase1;
  for (double b : options.beta_grid) phase1.push_back({options.phase1_alpha, b, 0.0, 1});
  phase1 = evaluate_points(items, base, std::move(phase1), options.workers);
  const double beta_star = best_of(phase1, 0, phase1.size()).beta;

  std::set<double> alphas(options.alpha_grid.begin(), options.alpha_grid.end());
  alphas.insert(options.phase1_alpha);
  std::vector<SweepPoint> phase2;
  for (double a : alphas) phase2.push_back({a, beta_star, 0.0, 2});
  phase2 = evaluate_points(items, base, std::move(phase2), options.workers);
  const auto& best = best_of(phase2, 0, phase2.size());

  result.grid = std::move(phase1);
  result.grid.insert(result.grid.end(), phase2.begin(), phase2.end());
  result.best_alpha = best.alpha;
  result.best_beta = best.beta;
  result.best_f1 = best.macro_f1;
  result.rule = "two-phase:max-f1,min-beta,min-alpha";
  return result;
}

Json to_json(const SweepResult& r) {
  Json grid = Json::array();
  for (const auto& p : r.grid) {
    grid.push_back({{"alpha", p.alpha}, {"beta", p.beta}, {"macro_f1", p.macro_f1}, {"phase", p.phase}});
  }
  return Json{{"rule", r.rule},
              {"selected", {{"alpha", r.best_alpha}, {"beta", r.best_beta}, {"macro_f1", r.best_f1}}},
              {"base_macro_f1", r.base_f1},
              {"grid", grid}};
}

std::string to_csv(const SweepResult& r) {
  std::ostringstream out;
  out << "phase,alpha,beta,macro_f1\n";
  for (const auto& p : r.grid) {
    out << p.phase << ',' << num(p.alpha) << ',' << num(p.beta) << ',' << num(p.macro_f1) << '\n';
  }
  return out.str();
}

std::vector<KnowledgeRow> compare_knowledge_types(
    const std::vector<std::pair<std::string, std::vector<PredictionRecord>>>& per_type,
    const std::map<std::string, Polarity>& golds) {
  if (per_type.empty()) throw ValidationError("no knowledge-type predictions to compare");

  auto ids_of = [](const std::vector<PredictionRecord>& records) {
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.sample_id);
    return ids;
  };
  const auto reference = ids_of(per_type.front().second);
  for (const auto& [type, records] : per_type) {
    if (ids_of(records) != reference || records.size() != reference.size()) {
      throw ValidationError("knowledge type '" + type + "' covers a different set of sample ids than '" +
                            per_type.front().first + "'");
    }
  }

  auto golds_for = [&](const std::vector<PredictionRecord>& records) {
    std::vector<Polarity> out;
    out.reserve(records.size());
    for (const auto& r : records) {
      auto it = golds.find(r.sample_id);
      if (it == golds.end()) throw ValidationError("no gold label for sample " + r.sample_id);
      out.push_back(it->second);
    }
    return out;
  };

  std::vector<KnowledgeRow> rows;
  {
    const auto& records = per_type.front().second;
    std::vector<Polarity> preds;
    for (const auto& r : records) preds.push_back(argmax_label(r.base));
    rows.push_back({"base", compute_metrics(golds_for(records), preds)});
  }
  for (const auto& [type, records] : per_type) {
    std::vector<Polarity> preds;
    for (const auto& r : records) preds.push_back(r.final_label);
    rows.push_back({type, compute_metrics(golds_for(records), preds)});
  }
  return rows;
}

std::string to_csv(const std::vector<KnowledgeRow>& rows) {
  std::ostringstream out;
  out << "knowledge_type,n,accuracy,macro_precision,macro_recall,macro_f1\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    out << row.knowledge_type << ',' << m.n << ',' << num(m.accuracy) << ',' << num(m.macro_precision) << ','
        << num(m.macro_recall) << ',' << num(m.macro_f1) << '\n';
  }
  return out.str();
}

}  // namespace ctxsent
