#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace bwsemo {

class ResponseCache;

struct DecodeParams {
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;
  std::string model;
};

inline constexpr int kCotMaxTokens = 512;
inline constexpr int kBareAnswerMaxTokens = 8;

/// Score each candidate continuation of `prompt`; only the relative order of
/// the returned log-probabilities is meaningful.
struct ChoiceQuery {
  std::string prompt;
  std::vector<std::string> candidates;

  /// Throws std::invalid_argument unless candidates are non-empty, distinct
  /// and each non-empty.
  void validate() const;
};

using LogprobMap = std::map<std::string, double>;

/// A text-in/text-out judge. Implementations must tolerate concurrent calls.
class Annotator {
 public:
  virtual ~Annotator() = default;

  virtual std::string backend_id() const = 0;
  virtual std::string complete(const std::string& prompt, const DecodeParams& params) = 0;
  /// Throws UnsupportedError when the backend cannot score continuations.
  virtual LogprobMap choice_logprob(const ChoiceQuery& query, const DecodeParams& params) = 0;

  /// Re-issue of a prompt whose previous answer was unusable. `attempt` > 0.
  /// Backends without state answer exactly like complete(); caching layers use
  /// the attempt number to avoid replaying the rejected response.
  virtual std::string complete_retry(const std::string& prompt, const DecodeParams& params,
                                     int attempt) {
    (void)attempt;
    return complete(prompt, params);
  }
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  double jitter = 0.25;  // fraction of the delay, applied symmetrically
};

/// Runs `fn`, retrying TransportError and retryable HTTP statuses (429, 5xx)
/// with jittered exponential backoff. The last error is rethrown.
std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& fn);

struct AnnotatorCounters {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
};

/// Decorates a backend with the persistent response cache. A hit returns the
/// stored bytes without touching the backend.
class CachedAnnotator : public Annotator {
 public:
  CachedAnnotator(std::shared_ptr<Annotator> backend, std::shared_ptr<ResponseCache> cache);

  std::string backend_id() const override { return backend_->backend_id(); }
  std::string complete(const std::string& prompt, const DecodeParams& params) override;
  LogprobMap choice_logprob(const ChoiceQuery& query, const DecodeParams& params) override;
  std::string complete_retry(const std::string& prompt, const DecodeParams& params,
                             int attempt) override;

  /// Appends one JSON line per request (prompt, response, cache status).
  void set_audit_log(const std::filesystem::path& path);

  AnnotatorCounters counters() const;

 private:
  std::string complete_keyed(const std::string& prompt, const DecodeParams& params, int attempt);
  void audit(const std::string& line);

  std::shared_ptr<Annotator> backend_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> calls_{0};
  std::mutex audit_mutex_;
  std::optional<std::filesystem::path> audit_path_;
};

/// SHA-256 over the canonical request description. `kind` distinguishes
/// generation from choice scoring; `extra` carries kind-specific fields.
std::string cache_key(const std::string& backend_id, const std::string& prompt,
                      const DecodeParams& params, const std::string& kind,
                      const std::string& extra = {});

}  // namespace bwsemo
