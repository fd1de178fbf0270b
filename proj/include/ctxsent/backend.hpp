#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "ctxsent/datamodel.hpp"
#include "ctxsent/prompts.hpp"

namespace ctxsent {

enum class BackendKind { Remote, Mock };
std::string_view to_string(BackendKind k) noexcept;
BackendKind parse_backend_kind(std::string_view text);

/// How per-choice log-likelihoods are reduced: summed over the choice tokens
/// (total) or divided by the token count (per-token).
enum class Normalization { Total, PerToken };
std::string_view to_string(Normalization n) noexcept;
Normalization parse_normalization(std::string_view text);

/// Parameters of the deterministic mock classifier.
///
/// Every sample gets a latent difficulty drawn from (seed, sample key): with
/// probability `hard_fraction` it is hard, and its no-context distribution has
/// a top-two gap below 0.28; otherwise the gap is at least 0.4. Base accuracy
/// on hard and easy samples is spread around `base_accuracy` so the overall
/// rate stays at `base_accuracy`. Context-conditioned predictions are correct
/// with `hard_context_accuracy` on hard samples and `easy_context_accuracy`
/// on easy ones.
struct MockOracle {
  std::uint64_t seed = 0;
  double base_accuracy = 0.70;
  double hard_context_accuracy = 0.85;
  double easy_context_accuracy = 0.70;
  double hard_fraction = 0.35;
  bool supports_scoring = true;
};

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::string base_url;
  std::string model_id = "mock-lvlm";
  /// Environment variable holding the bearer token; empty sends no header.
  std::string api_key_env;
  double temperature = 0.0;
  double timeout_seconds = 60.0;
  int max_retries = 2;
  int retry_backoff_ms = 200;
  int concurrency_limit = 4;
  Normalization normalization = Normalization::Total;
  std::optional<std::string> image_token = std::string(kDefaultImageToken);
  MockOracle mock;
};

/// Throws ConfigError on invalid settings.
void validate(const BackendConfig& config);
void to_json(Json& j, const BackendConfig& c);
void from_json(const Json& j, BackendConfig& c);

struct ChoiceScores {
  /// Log-likelihood per choice, canonical polarity order.
  std::array<double, kNumPolarities> loglik{};
  Normalization normalization = Normalization::Total;

  bool operator==(const ChoiceScores&) const = default;
};

/// Divides each total log-likelihood by its choice's token count.
ChoiceScores normalize_per_token(const std::array<double, kNumPolarities>& total,
                                 const std::array<int, kNumPolarities>& token_counts);

/// Sample metadata only the mock consumes; never sent over the wire.
struct OracleHint {
  std::string sample_key;
  std::optional<Polarity> gold;
  /// Set for context-conditioned requests: digest of the context text.
  std::optional<std::string> context_key;
};

struct GenerateRequest {
  RenderedPrompt prompt;
  std::optional<std::string> image;
};

struct ScoreRequest {
  RenderedPrompt prompt;
  std::array<std::string, kNumPolarities> choices;
  std::optional<std::string> image;
  OracleHint hint;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string generate(const GenerateRequest& request) = 0;
  /// Throws CapabilityError when the backend cannot score choices.
  virtual ChoiceScores score_choices(const ScoreRequest& request) = 0;
  virtual const BackendConfig& config() const = 0;
  /// Identifies everything besides the request that determines responses.
  virtual std::string fingerprint() const = 0;
  /// Extra request fields that influence the response (mock oracle hints).
  virtual std::string request_salt(const ScoreRequest&) const { return {}; }
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(BackendConfig config);

  /// "[mock <model> seed=<s> prompt=<first 16 hex of hash>] ..." followed by
  /// filler sentences drawn from the same seed.
  std::string generate(const GenerateRequest& request) override;
  ChoiceScores score_choices(const ScoreRequest& request) override;
  const BackendConfig& config() const override { return config_; }
  std::string fingerprint() const override;
  std::string request_salt(const ScoreRequest& request) const override;

  /// Underlying distribution the mock reports as log-probabilities.
  PolarityDistribution oracle_distribution(const OracleHint& hint, std::string_view prompt_hash) const;
  /// Latent difficulty of a sample.
  bool is_latent_hard(std::string_view sample_key) const;

 private:
  BackendConfig config_;
};

/// Caps in-flight operations.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit);

  void acquire();
  void release();

  class Permit {
   public:
    explicit Permit(ConcurrencyGate& gate) : gate_(gate) { gate_.acquire(); }
    ~Permit() { gate_.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    ConcurrencyGate& gate_;
  };

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
};

/// Chat-completions style HTTP client. See README for the wire format.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(BackendConfig config);

  std::string generate(const GenerateRequest& request) override;
  ChoiceScores score_choices(const ScoreRequest& request) override;
  const BackendConfig& config() const override { return config_; }
  std::string fingerprint() const override;

  /// Request body for a call; exposed for wire-format tests.
  Json build_request(const RenderedPrompt& prompt, const std::optional<std::string>& image,
                     const std::array<std::string, kNumPolarities>* choices) const;

 private:
  Json post(const Json& body);

  BackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::string bearer_;
  ConcurrencyGate gate_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

// ---------------------------------------------------------------------------
// Response cache

using CacheValue = std::variant<std::string, ChoiceScores>;

/// Key over (backend fingerprint, model id, prompt hash, image, choice texts,
/// normalization mode, salt). Generation requests pass no choices.
std::string cache_key(const Backend& backend, const RenderedPrompt& prompt,
                      const std::optional<std::string>& image,
                      const std::array<std::string, kNumPolarities>* choices, std::string_view salt);

/// Content-addressed store persisted as JSONL
/// {key, kind: text|scores, value, model_id, created_at}. Appends on put;
/// corrupt lines are skipped with a warning when loading.
class ResponseCache {
 public:
  using Clock = std::function<std::string()>;

  /// Empty path keeps the cache in memory only.
  explicit ResponseCache(std::filesystem::path path = {}, Clock clock = {});

  std::optional<CacheValue> get(const std::string& key) const;
  void put(const std::string& key, const CacheValue& value, const std::string& model_id);
  /// Rewrites the file with one line per key; the last write wins.
  void compact();

  std::size_t size() const;
  std::size_t skipped_lines() const noexcept { return skipped_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  struct Entry {
    CacheValue value;
    std::string model_id;
    std::string created_at;
  };
  Json line_for(const std::string& key, const Entry& entry) const;

  std::filesystem::path path_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
  std::size_t skipped_ = 0;
};

/// Decorator serving repeated requests from a ResponseCache.
class CachingBackend final : public Backend {
 public:
  CachingBackend(Backend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}

  std::string generate(const GenerateRequest& request) override;
  ChoiceScores score_choices(const ScoreRequest& request) override;
  const BackendConfig& config() const override { return inner_.config(); }
  std::string fingerprint() const override { return inner_.fingerprint(); }
  std::string request_salt(const ScoreRequest& r) const override { return inner_.request_salt(r); }

 private:
  Backend& inner_;
  ResponseCache& cache_;
};

/// Current UTC time as ISO-8601.
std::string utc_now_iso8601();

}  // namespace ctxsent
