#include "ctxsent/backend.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

#include "ctxsent/digest.hpp"
#include "ctxsent/error.hpp"

namespace ctxsent {

std::string_view to_string(BackendKind k) noexcept {
  return k == BackendKind::Remote ? "remote" : "mock";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "remote") return BackendKind::Remote;
  if (text == "mock") return BackendKind::Mock;
  throw ConfigError("unknown backend kind '" + std::string(text) + "' (expected remote or mock)");
}

std::string_view to_string(Normalization n) noexcept {
  return n == Normalization::Total ? "total" : "per-token";
}

Normalization parse_normalization(std::string_view text) {
  if (text == "total") return Normalization::Total;
  if (text == "per-token") return Normalization::PerToken;
  throw ConfigError("unknown normalization '" + std::string(text) + "' (expected total or per-token)");
}

void validate(const BackendConfig& c) {
  if (!(c.temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (c.concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
  if (c.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (!(c.timeout_seconds > 0.0)) throw ConfigError("timeout must be > 0");
  if (c.kind == BackendKind::Remote && c.base_url.empty()) {
    throw ConfigError("remote backend requires base_url");
  }
  if (c.model_id.empty()) throw ConfigError("model_id must not be empty");
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("mock.") + name + " must be in [0,1]");
  };
  unit(c.mock.base_accuracy, "base_accuracy");
  unit(c.mock.hard_context_accuracy, "hard_context_accuracy");
  unit(c.mock.easy_context_accuracy, "easy_context_accuracy");
  unit(c.mock.hard_fraction, "hard_fraction");
}

void to_json(Json& j, const BackendConfig& c) {
  j = Json{{"kind", to_string(c.kind)},
           {"base_url", c.base_url},
           {"model_id", c.model_id},
           {"api_key_env", c.api_key_env},
           {"temperature", c.temperature},
           {"timeout", c.timeout_seconds},
           {"max_retries", c.max_retries},
           {"retry_backoff_ms", c.retry_backoff_ms},
           {"concurrency_limit", c.concurrency_limit},
           {"normalization", to_string(c.normalization)},
           {"image_token", c.image_token ? Json(*c.image_token) : Json(nullptr)},
           {"mock",
            {{"seed", c.mock.seed},
             {"base_accuracy", c.mock.base_accuracy},
             {"hard_context_accuracy", c.mock.hard_context_accuracy},
             {"easy_context_accuracy", c.mock.easy_context_accuracy},
             {"hard_fraction", c.mock.hard_fraction},
             {"supports_scoring", c.mock.supports_scoring}}}};
}

void from_json(const Json& j, BackendConfig& c) {
  c = BackendConfig{};
  c.kind = parse_backend_kind(j.value("kind", std::string("mock")));
  c.base_url = j.value("base_url", c.base_url);
  c.model_id = j.value("model_id", c.model_id);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.temperature = j.value("temperature", c.temperature);
  c.timeout_seconds = j.value("timeout", c.timeout_seconds);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.retry_backoff_ms = j.value("retry_backoff_ms", c.retry_backoff_ms);
  c.concurrency_limit = j.value("concurrency_limit", c.concurrency_limit);
  c.normalization = parse_normalization(j.value("normalization", std::string("total")));
  if (auto it = j.find("image_token"); it != j.end()) {
    if (it->is_null()) {
      c.image_token.reset();
    } else {
      c.image_token = it->get<std::string>();
    }
  }
  if (auto it = j.find("mock"); it != j.end()) {
    const auto& m = *it;
    c.mock.seed = m.value("seed", c.mock.seed);
    c.mock.base_accuracy = m.value("base_accuracy", c.mock.base_accuracy);
    c.mock.hard_context_accuracy = m.value("hard_context_accuracy", c.mock.hard_context_accuracy);
    c.mock.easy_context_accuracy = m.value("easy_context_accuracy", c.mock.easy_context_accuracy);
    c.mock.hard_fraction = m.value("hard_fraction", c.mock.hard_fraction);
    c.mock.supports_scoring = m.value("supports_scoring", c.mock.supports_scoring);
  }
}

ChoiceScores normalize_per_token(const std::array<double, kNumPolarities>& total,
                                 const std::array<int, kNumPolarities>& token_counts) {
  ChoiceScores out;
  out.normalization = Normalization::PerToken;
  for (std::size_t i = 0; i < kNumPolarities; ++i) {
    if (token_counts[i] <= 0) throw ValidationError("choice token count must be positive");
    out.loglik[i] = total[i] / token_counts[i];
  }
  return out;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  validate(config);
  if (config.kind == BackendKind::Remote) return std::make_unique<RemoteBackend>(config);
  return std::make_unique<MockBackend>(config);
}

ConcurrencyGate::ConcurrencyGate(int limit) : limit_(limit < 1 ? 1 : limit) {}

void ConcurrencyGate::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return in_flight_ < limit_; });
  ++in_flight_;
}

void ConcurrencyGate::release() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  cv_.notify_one();
}

std::string cache_key(const Backend& backend, const RenderedPrompt& prompt,
                      const std::optional<std::string>& image,
                      const std::array<std::string, kNumPolarities>* choices, std::string_view salt) {
  DigestBuilder d;
  d.add(backend.fingerprint()).add(backend.config().model_id).add(prompt.hash).add(image.value_or(""));
  if (choices) {
    d.add("scores");
    for (const auto& c : *choices) d.add(c);
    d.add(to_string(backend.config().normalization));
  } else {
    d.add("text");
  }
  d.add(salt);
  return d.hex();
}

std::string CachingBackend::generate(const GenerateRequest& request) {
  const auto key = cache_key(inner_, request.prompt, request.image, nullptr, {});
  if (auto hit = cache_.get(key); hit && std::holds_alternative<std::string>(*hit)) {
    return std::get<std::string>(*hit);
  }
  auto text = inner_.generate(request);
  cache_.put(key, text, inner_.config().model_id);
  return text;
}

ChoiceScores CachingBackend::score_choices(const ScoreRequest& request) {
  const auto key = cache_key(inner_, request.prompt, request.image, &request.choices,
                             inner_.request_salt(request));
  if (auto hit = cache_.get(key); hit && std::holds_alternative<ChoiceScores>(*hit)) {
    return std::get<ChoiceScores>(*hit);
  }
  auto scores = inner_.score_choices(request);
  cache_.put(key, scores, inner_.config().model_id);
  return scores;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ctxsent
