#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "ctxsent/backend.hpp"
#include "ctxsent/classifier.hpp"
#include "ctxsent/error.hpp"
#include "stub_server.hpp"

using namespace ctxsent;
using testing::StubServer;

namespace {

BackendConfig remote_config(const StubServer& server) {
  BackendConfig c;
  c.kind = BackendKind::Remote;
  c.base_url = server.base_url();
  c.model_id = "stub-model";
  c.timeout_seconds = 5;
  c.max_retries = 0;
  c.retry_backoff_ms = 1;
  return c;
}

RenderedPrompt prompt(const std::string& text) {
  return RenderedPrompt{text, std::nullopt, prompt_digest(text, std::nullopt)};
}

ScoreRequest score_request(const std::string& text) {
  ScoreRequest r;
  r.prompt = prompt(text);
  r.choices = {"negative", "neutral", "positive"};
  return r;
}

Json fixed_scores() { return Json{{"choice_logprobs", {-1.0, -2.0, -3.0}}}; }

}  // namespace

TEST_CASE("generate returns the stubbed text") {
  StubServer server([](const Json&) {
    return std::pair{200, Json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "stubbed text"}}}}}}}};
  });
  RemoteBackend backend(remote_config(server));
  CHECK(backend.generate(GenerateRequest{prompt("hi"), std::nullopt}) == "stubbed text");
}

TEST_CASE("generate accepts completion-style bodies") {
  StubServer server([](const Json&) { return std::pair{200, Json{{"choices", {{{"text", "plain"}}}}}}; });
  RemoteBackend backend(remote_config(server));
  CHECK(backend.generate(GenerateRequest{prompt("hi"), std::nullopt}) == "plain");
}

TEST_CASE("score_choices returns the stubbed log-likelihoods exactly") {
  StubServer server([](const Json&) { return std::pair{200, fixed_scores()}; });
  RemoteBackend backend(remote_config(server));
  const auto s = backend.score_choices(score_request("q"));
  CHECK(s.loglik == std::array<double, 3>{-1.0, -2.0, -3.0});
  CHECK(s.normalization == Normalization::Total);
}

TEST_CASE("per-token scoring needs token counts") {
  StubServer server([](const Json& body) {
    Json out = fixed_scores();
    if (body.at("messages")[0]["content"][0]["text"] == "counts") out["choice_token_counts"] = {1, 2, 3};
    return std::pair{200, out};
  });
  auto config = remote_config(server);
  config.normalization = Normalization::PerToken;
  RemoteBackend backend(config);
  const auto s = backend.score_choices(score_request("counts"));
  CHECK(s.loglik == std::array<double, 3>{-1.0, -1.0, -1.0});
  CHECK_THROWS_AS(backend.score_choices(score_request("none")), CapabilityError);
}

TEST_CASE("wire format of scoring requests") {
  StubServer server([](const Json&) { return std::pair{200, fixed_scores()}; });
  auto config = remote_config(server);
  config.temperature = 0.25;
  RemoteBackend backend(config);
  auto r = score_request("classify this");
  r.image = "https://example.org/a.jpg";
  backend.score_choices(r);
  const auto body = Json::parse(server.requests().at(0));
  CHECK(body["model"] == "stub-model");
  CHECK(body["temperature"] == 0.25);
  CHECK(body["echo_choices"] == Json({"negative", "neutral", "positive"}));
  const auto& content = body["messages"][0]["content"];
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(content[0] == Json{{"type", "text"}, {"text", "classify this"}});
  CHECK(content[1] == Json{{"type", "image_url"}, {"image_url", {{"url", "https://example.org/a.jpg"}}}});
  CHECK_FALSE(body.contains("hint"));
  CHECK(server.auth_headers().at(0).empty());
}

TEST_CASE("missing logprobs is a capability error with the backend named") {
  StubServer server([](const Json&) { return std::pair{200, Json{{"choices", Json::array()}}}; });
  RemoteBackend backend(remote_config(server));
  try {
    backend.score_choices(score_request("q"));
    FAIL("expected capability error");
  } catch (const CapabilityError& e) {
    CHECK(std::string(e.what()).find("stub-model") != std::string::npos);
  }
}

TEST_CASE("bearer token comes from the named environment variable") {
  StubServer server([](const Json&) { return std::pair{200, fixed_scores()}; });
  auto config = remote_config(server);
  config.api_key_env = "CTXSENT_TEST_API_KEY";
  ::unsetenv("CTXSENT_TEST_API_KEY");
  CHECK_THROWS_AS(RemoteBackend{config}, ConfigError);
  ::setenv("CTXSENT_TEST_API_KEY", "sekret", 1);
  RemoteBackend backend(config);
  backend.score_choices(score_request("q"));
  CHECK(server.auth_headers().at(0) == "Bearer sekret");
  ::unsetenv("CTXSENT_TEST_API_KEY");
}

TEST_CASE("transient failures are retried") {
  std::atomic<int> calls{0};
  StubServer server([&](const Json&) {
    if (calls++ < 2) return std::pair{503, Json{{"error", "busy"}}};
    return std::pair{200, fixed_scores()};
  });
  auto config = remote_config(server);
  config.max_retries = 2;
  RemoteBackend backend(config);
  CHECK(backend.score_choices(score_request("q")).loglik[0] == -1.0);
  CHECK(calls.load() == 3);
}

TEST_CASE("client errors are not retried and carry the status") {
  std::atomic<int> calls{0};
  StubServer server([&](const Json&) {
    ++calls;
    return std::pair{400, Json{{"error", "bad request"}}};
  });
  auto config = remote_config(server);
  config.max_retries = 3;
  RemoteBackend backend(config);
  try {
    backend.score_choices(score_request("q"));
    FAIL("expected backend error");
  } catch (const BackendError& e) {
    CHECK(e.status() == 400);
  }
  CHECK(calls.load() == 1);
}

TEST_CASE("unreachable server surfaces a backend error") {
  BackendConfig c;
  c.kind = BackendKind::Remote;
  c.base_url = "http://127.0.0.1:1/v1";
  c.max_retries = 1;
  c.retry_backoff_ms = 1;
  c.timeout_seconds = 1;
  RemoteBackend backend(c);
  CHECK_THROWS_AS(backend.generate(GenerateRequest{prompt("x"), std::nullopt}), BackendError);
}

TEST_CASE("in-flight requests never exceed the concurrency limit") {
  StubServer server([](const Json&) { return std::pair{200, fixed_scores()}; }, std::chrono::milliseconds(20));
  auto config = remote_config(server);
  config.concurrency_limit = 2;
  RemoteBackend backend(config);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 3; ++i) backend.score_choices(score_request("q"));
    });
  }
  for (auto& th : threads) th.join();
  CHECK(server.requests().size() == 24);
  CHECK(server.peak_concurrency() <= 2);
  CHECK(server.peak_concurrency() == 2);
}

TEST_CASE("predict maps stub log-likelihoods through softmax") {
  StubServer server([](const Json&) { return std::pair{200, fixed_scores()}; });
  RemoteBackend backend(remote_config(server));
  Sample s{"a", Split::Test, "some sentence", {}, {}, Polarity::Neutral};
  const auto out = predict(backend, s, ClassifierOptions{});
  // Independent evaluation: e^-1, e^-2, e^-3 over their sum.
  const double z = std::exp(-1.0) + std::exp(-2.0) + std::exp(-3.0);
  CHECK(out.dist[0] == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-12));
  CHECK(out.dist[1] == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-12));
  CHECK(out.dist[2] == doctest::Approx(std::exp(-3.0) / z).epsilon(1e-12));
  CHECK(out.dist[0] == doctest::Approx(0.6652).epsilon(1e-4));
  CHECK(out.dist[1] == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(out.dist[2] == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(out.raw->loglik == std::array<double, 3>{-1.0, -2.0, -3.0});
}

TEST_CASE("a failing sample in a batch is reported by id") {
  StubServer server([](const Json& body) {
    const std::string text = body["messages"][0]["content"][0]["text"];
    if (text.find("sentence two") != std::string::npos) return std::pair{500, Json{{"error", "boom"}}};
    return std::pair{200, fixed_scores()};
  });
  RemoteBackend backend(remote_config(server));
  const std::vector<Sample> samples = {
      {"s1", Split::Test, "sentence one", {}, {}, {}},
      {"s2", Split::Test, "sentence two", {}, {}, {}},
      {"s3", Split::Test, "sentence three", {}, {}, {}},
  };
  const auto result = predict_batch(backend, samples, ClassifierOptions{});
  REQUIRE(result.outputs.size() == 2);
  CHECK(result.outputs[0].sample_id == "s1");
  CHECK(result.outputs[1].sample_id == "s3");
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].sample_id == "s2");
  CHECK(result.failures[0].kind == ErrorKind::Backend);
  const auto manifest = to_json(result.failures);
  CHECK(manifest["failed"] == 1);
  CHECK(manifest["failures"][0]["sample_id"] == "s2");
}
