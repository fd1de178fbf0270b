#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "ctxsent/backend.hpp"
#include "ctxsent/error.hpp"

namespace ctxsent {

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  out.path += "/chat/completions";
  return out;
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

RemoteBackend::RemoteBackend(BackendConfig config)
    : config_(std::move(config)), gate_(config_.concurrency_limit) {
  config_.kind = BackendKind::Remote;
  validate(config_);
  auto url = split_url(config_.base_url);
  scheme_host_port_ = std::move(url.scheme_host_port);
  path_ = std::move(url.path);
  if (!config_.api_key_env.empty()) {
    const char* value = std::getenv(config_.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
      throw ConfigError("credential environment variable " + config_.api_key_env + " is not set");
    }
    bearer_ = value;
  }
}

std::string RemoteBackend::fingerprint() const { return "remote|" + config_.base_url; }

Json RemoteBackend::build_request(const RenderedPrompt& prompt, const std::optional<std::string>& image,
                                  const std::array<std::string, kNumPolarities>* choices) const {
  Json content = Json::array();
  content.push_back({{"type", "text"}, {"text", prompt.text}});
  if (image) content.push_back({{"type", "image_url"}, {"image_url", {{"url", *image}}}});
  Json body = {{"model", config_.model_id},
               {"messages", Json::array({{{"role", "user"}, {"content", content}}})},
               {"temperature", config_.temperature}};
  if (choices) body["echo_choices"] = Json(*choices);
  return body;
}

Json RemoteBackend::post(const Json& body) {
  const std::string payload = body.dump();
  int last_status = 0;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_backoff_ms << (attempt - 1)));
    }
    httplib::Result result;
    {
      ConcurrencyGate::Permit permit(gate_);
      httplib::Client client(scheme_host_port_);
      const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      httplib::Headers headers;
      if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);
      result = client.Post(path_, headers, payload, "application/json");
    }
    if (!result) {
      last_status = 0;
      last_error = httplib::to_string(result.error());
      continue;
    }
    last_status = result->status;
    if (result->status >= 200 && result->status < 300) {
      try {
        return Json::parse(result->body);
      } catch (const Json::parse_error& e) {
        throw BackendError(std::string("malformed response body: ") + e.what(), last_status);
      }
    }
    last_error = result->body;
    if (!retryable(result->status)) break;
  }
  throw BackendError("request to " + scheme_host_port_ + path_ + " failed with status " +
                         std::to_string(last_status) + (last_error.empty() ? "" : ": " + last_error),
                     last_status);
}

std::string RemoteBackend::generate(const GenerateRequest& request) {
  const Json response = post(build_request(request.prompt, request.image, nullptr));
  if (auto it = response.find("choices"); it != response.end() && it->is_array() && !it->empty()) {
    const auto& first = it->front();
    if (auto msg = first.find("message"); msg != first.end()) {
      if (auto content = msg->find("content"); content != msg->end() && content->is_string()) {
        return content->get<std::string>();
      }
    }
    if (auto text = first.find("text"); text != first.end() && text->is_string()) {
      return text->get<std::string>();
    }
  }
  if (auto it = response.find("text"); it != response.end() && it->is_string()) {
    return it->get<std::string>();
  }
  throw BackendError("response carries no generated text");
}

ChoiceScores RemoteBackend::score_choices(const ScoreRequest& request) {
  const Json response = post(build_request(request.prompt, request.image, &request.choices));
  const auto it = response.find("choice_logprobs");
  if (it == response.end()) {
    throw CapabilityError("backend '" + config_.model_id +
                          "' returned no choice_logprobs; likelihood scoring is unsupported");
  }
  if (!it->is_array() || it->size() != kNumPolarities) {
    throw BackendError("choice_logprobs must hold exactly 3 numbers");
  }
  std::array<double, kNumPolarities> total{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) {
    if (!it->at(i).is_number()) throw BackendError("choice_logprobs entries must be numbers");
    total[i] = it->at(i).get<double>();
    if (!std::isfinite(total[i])) throw BackendError("choice_logprobs entries must be finite");
  }
  if (config_.normalization == Normalization::Total) return ChoiceScores{total, Normalization::Total};

  const auto counts = response.find("choice_token_counts");
  if (counts == response.end() || !counts->is_array() || counts->size() != kNumPolarities) {
    throw CapabilityError("per-token normalization requires choice_token_counts in the response");
  }
  std::array<int, kNumPolarities> n{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) n[i] = counts->at(i).get<int>();
  return normalize_per_token(total, n);
}

}  // namespace ctxsent
