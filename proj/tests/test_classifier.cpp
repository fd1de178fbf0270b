#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ctxsent/classifier.hpp"
#include "ctxsent/digest.hpp"
#include "ctxsent/error.hpp"
#include "support.hpp"

using namespace ctxsent;

namespace {

ContextRecord context_for(const std::string& id, const std::string& text) {
  return ContextRecord{id, "historical", "mock-lvlm", "h", text, "t"};
}

}  // namespace

TEST_CASE("softmax of equal scores is uniform") {
  const auto d = softmax({0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < 3; ++i) CHECK(d[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax of (ln 2, 0, 0)") {
  // e^{ln 2} = 2 against 1 and 1: total 4.
  const auto d = softmax({std::log(2.0), 0.0, 0.0});
  CHECK(d[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(d[2] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("softmax is stable for large scores") {
  const auto d = softmax({1000.0, 0.0, 0.0});
  CHECK(d[0] == doctest::Approx(1.0));
  CHECK(d[1] < 1e-300);
  CHECK(std::isfinite(d[1]));
  CHECK_THROWS_AS(softmax({INFINITY, 0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(softmax({std::nan(""), 0.0, 0.0}), ValidationError);
}

TEST_CASE("property: softmax is shift invariant and argmax consistent") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> score(-30.0, 5.0);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  for (int i = 0; i < 5000; ++i) {
    std::array<double, 3> s{score(rng), score(rng), score(rng)};
    if (i % 10 == 0) s[1] = s[0];  // exercise ties
    const auto d = softmax(s);
    const double c = shift(rng);
    const auto shifted = softmax({s[0] + c, s[1] + c, s[2] + c});
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(d[k] - shifted[k]) <= 1e-9);
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k) {
      if (s[k] > s[best]) best = k;
    }
    CHECK(index_of(argmax_label(d)) == best);
  }
}

TEST_CASE("perfect mock oracle predicts the gold label") {
  BackendConfig config;
  config.mock.base_accuracy = 1.0;
  MockBackend mock(config);
  for (int i = 0; i < 50; ++i) {
    Sample s{"n" + std::to_string(i), Split::Test, "a sad story", {}, {}, Polarity::Negative};
    CHECK(argmax_label(predict(mock, s, ClassifierOptions{}).dist) == Polarity::Negative);
  }
}

TEST_CASE("context changes the mock distribution and sets conditioned_on") {
  BackendConfig config;
  MockBackend mock(config);
  Sample s{"c1", Split::Test, "the city before and after", std::string("img.jpg"), {}, Polarity::Negative};
  const auto base = predict(mock, s, ClassifierOptions{});
  const auto ctx = context_for("c1", "Background on the city and its war.");
  const auto with = predict(mock, s, ClassifierOptions{}, &ctx);
  CHECK_FALSE(base.dist == with.dist);
  CHECK_FALSE(base.conditioned_on.has_value());
  CHECK(with.conditioned_on == std::optional<std::string>("historical"));
  CHECK(predict(mock, s, ClassifierOptions{}, &ctx) == with);
}

TEST_CASE("prediction errors name the sample and keep their kind") {
  BackendConfig config;
  config.mock.supports_scoring = false;
  MockBackend mock(config);
  Sample s{"broken-7", Split::Test, "text", {}, {}, {}};
  try {
    predict(mock, s, ClassifierOptions{});
    FAIL("expected capability error");
  } catch (const CapabilityError& e) {
    CHECK(std::string(e.what()).find("broken-7") != std::string::npos);
  }
}

TEST_CASE("batch prediction keeps input order") {
  BackendConfig config;
  config.concurrency_limit = 3;
  MockBackend mock(config);
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back({"b" + std::to_string(i), Split::Test, "text", {}, {}, {}});
  const auto result = predict_batch(mock, samples, ClassifierOptions{});
  REQUIRE(result.outputs.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(result.outputs[i].sample_id == samples[i].id);
  CHECK(result.failures.empty());

  CHECK(predict_batch(mock, {}, ClassifierOptions{}).outputs.empty());
}

TEST_CASE("batch prediction is independent of worker count") {
  std::vector<Sample> samples;
  std::map<std::string, ContextRecord> contexts;
  for (int i = 0; i < 40; ++i) {
    const auto id = "w" + std::to_string(i);
    samples.push_back({id, Split::Test, "text " + id, {}, {}, kAllPolarities[i % 3]});
    if (i % 2 == 0) contexts.emplace(id, context_for(id, "context " + id));
  }
  BackendConfig one;
  one.concurrency_limit = 1;
  BackendConfig many;
  many.concurrency_limit = 8;
  MockBackend a(one), b(many);
  const auto ra = predict_batch(a, samples, ClassifierOptions{}, &contexts);
  const auto rb = predict_batch(b, samples, ClassifierOptions{}, &contexts);
  CHECK(ra.outputs == rb.outputs);
  for (const auto& o : ra.outputs) CHECK(o.conditioned_on.has_value() == contexts.count(o.sample_id) > 0);
}

TEST_CASE("classifier output JSON round trip and import without raw scores") {
  ClassifierOutput o{"x", PolarityDistribution::from_probs({0.1, 0.2, 0.7}),
                     ChoiceScores{{-2.0, -1.5, -0.3}, Normalization::Total}, std::string("cultural")};
  CHECK(Json(o).get<ClassifierOutput>() == o);
  const auto imported = Json::parse(R"({"sample_id":"y","probs":[0.5,0.5,0.0],"conditioned_on":null})")
                            .get<ClassifierOutput>();
  CHECK_FALSE(imported.raw.has_value());
  CHECK_FALSE(imported.conditioned_on.has_value());
  CHECK_THROWS(Json::parse(R"({"sample_id":"y","probs":[0.5,0.6,0.0]})").get<ClassifierOutput>());
}
