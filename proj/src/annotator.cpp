#include "bwsemo/annotator.hpp"

#include <fstream>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "bwsemo/errors.hpp"
#include "bwsemo/response_cache.hpp"
#include "bwsemo/sha256.hpp"

namespace bwsemo {

using json = nlohmann::json;

void ChoiceQuery::validate() const {
  if (candidates.empty()) throw std::invalid_argument("choice query has no candidates");
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    if (c.empty()) throw std::invalid_argument("choice query has an empty candidate");
    if (!seen.insert(c).second) throw std::invalid_argument("duplicate candidate '" + c + "'");
  }
}

namespace {

bool retryable(const HttpStatusError& e) { return e.status() == 429 || e.status() >= 500; }

json params_json(const DecodeParams& p) {
  json j = {{"temperature", p.temperature}, {"max_tokens", p.max_tokens}, {"model", p.model}};
  j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
  return j;
}

}  // namespace

std::string with_retry(const RetryPolicy& policy, const std::function<std::string()>& fn) {
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  double delay_ms = static_cast<double>(policy.initial_backoff.count());
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const TransportError&) {
      if (attempt >= policy.max_attempts) throw;
    } catch (const HttpStatusError& e) {
      if (!retryable(e) || attempt >= policy.max_attempts) throw;
    }
    std::uniform_real_distribution<double> jitter(1.0 - policy.jitter, 1.0 + policy.jitter);
    std::this_thread::sleep_for(
        std::chrono::duration<double, std::milli>(delay_ms * jitter(jitter_rng)));
    delay_ms *= policy.multiplier;
  }
}

std::string cache_key(const std::string& backend_id, const std::string& prompt,
                      const DecodeParams& params, const std::string& kind,
                      const std::string& extra) {
  json j = {{"backend", backend_id},
            {"prompt", prompt},
            {"params", params_json(params)},
            {"kind", kind},
            {"extra", extra}};
  return sha256_hex(j.dump());
}

CachedAnnotator::CachedAnnotator(std::shared_ptr<Annotator> backend,
                                 std::shared_ptr<ResponseCache> cache)
    : backend_(std::move(backend)), cache_(std::move(cache)) {
  if (!backend_ || !cache_) throw std::invalid_argument("CachedAnnotator: null backend or cache");
}

std::string CachedAnnotator::complete(const std::string& prompt, const DecodeParams& params) {
  return complete_keyed(prompt, params, 0);
}

std::string CachedAnnotator::complete_retry(const std::string& prompt, const DecodeParams& params,
                                            int attempt) {
  return complete_keyed(prompt, params, attempt);
}

std::string CachedAnnotator::complete_keyed(const std::string& prompt, const DecodeParams& params,
                                            int attempt) {
  ++requests_;
  std::string extra = attempt > 0 ? "retry:" + std::to_string(attempt) : "";
  std::string key = cache_key(backend_id(), prompt, params, "complete", extra);
  if (auto hit = cache_->get(key); hit && hit->is_string()) {
    ++hits_;
    std::string text = hit->get<std::string>();
    audit(json{{"key", key}, {"kind", "complete"}, {"cache_hit", true}, {"prompt", prompt},
               {"response", text}}
              .dump());
    return text;
  }
  ++calls_;
  std::string text = attempt > 0 ? backend_->complete_retry(prompt, params, attempt)
                                 : backend_->complete(prompt, params);
  json meta = {{"backend", backend_id()}, {"kind", "complete"}, {"params", params_json(params)}};
  if (attempt > 0) meta["attempt"] = attempt;
  cache_->put(key, meta, text);
  audit(json{{"key", key}, {"kind", "complete"}, {"cache_hit", false}, {"prompt", prompt},
             {"response", text}}
            .dump());
  return text;
}

LogprobMap CachedAnnotator::choice_logprob(const ChoiceQuery& query, const DecodeParams& params) {
  query.validate();
  ++requests_;
  std::string key = cache_key(backend_id(), query.prompt, params, "choice",
                              json(query.candidates).dump());
  if (auto hit = cache_->get(key); hit && hit->is_object()) {
    ++hits_;
    audit(json{{"key", key}, {"kind", "choice"}, {"cache_hit", true}, {"response", *hit}}.dump());
    return hit->get<LogprobMap>();
  }
  ++calls_;
  LogprobMap scores = backend_->choice_logprob(query, params);
  json response = scores;
  json meta = {{"backend", backend_id()},
               {"kind", "choice"},
               {"candidates", query.candidates},
               {"params", params_json(params)}};
  cache_->put(key, meta, response);
  audit(json{{"key", key}, {"kind", "choice"}, {"cache_hit", false}, {"prompt", query.prompt},
             {"response", response}}
            .dump());
  return scores;
}

void CachedAnnotator::set_audit_log(const std::filesystem::path& path) {
  std::lock_guard lock(audit_mutex_);
  audit_path_ = path;
}

void CachedAnnotator::audit(const std::string& line) {
  std::lock_guard lock(audit_mutex_);
  if (!audit_path_) return;
  std::ofstream out(*audit_path_, std::ios::app | std::ios::binary);
  out << line << '\n';
}

AnnotatorCounters CachedAnnotator::counters() const {
  return {requests_.load(), hits_.load(), calls_.load()};
}

}  // namespace bwsemo
