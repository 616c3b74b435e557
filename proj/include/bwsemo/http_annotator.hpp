#pragma once

#include <chrono>
#include <string>

#include "bwsemo/annotator.hpp"

namespace bwsemo {

struct HttpBackendConfig {
  /// Base URL including the API prefix, e.g. "http://localhost:8000/v1".
  std::string endpoint;
  std::string model;
  /// Name of the environment variable holding the bearer token. Unset or
  /// empty variables send no Authorization header.
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  bool supports_logprobs = true;
};

/// Client for an OpenAI-compatible server.
///
/// Generation uses `POST {endpoint}/chat/completions` with a single user
/// message. Choice scoring uses `POST {endpoint}/completions` with
/// `echo: true` on `prompt + " " + candidate` and reads the log-probability of
/// the first token past the prompt; multi-token candidates are scored by
/// their first token only.
class HttpAnnotator : public Annotator {
 public:
  explicit HttpAnnotator(HttpBackendConfig config);

  std::string backend_id() const override;
  std::string complete(const std::string& prompt, const DecodeParams& params) override;
  LogprobMap choice_logprob(const ChoiceQuery& query, const DecodeParams& params) override;

 private:
  std::string post(const std::string& path, const std::string& body) const;
  double score_candidate(const std::string& prompt, const std::string& candidate,
                         const DecodeParams& params) const;

  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

}  // namespace bwsemo
