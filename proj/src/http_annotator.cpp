#include "bwsemo/http_annotator.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "bwsemo/errors.hpp"

namespace bwsemo {

using json = nlohmann::json;

HttpAnnotator::HttpAnnotator(HttpBackendConfig config) : config_(std::move(config)) {
  static const std::regex url_re(R"((https?)://([^/]+)(/.*)?)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url_re)) {
    throw ConfigError("invalid endpoint URL '" + config_.endpoint + "'");
  }
  scheme_host_port_ = m[1].str() + "://" + m[2].str();
  path_prefix_ = m[3].matched ? m[3].str() : "";
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (config_.model.empty()) throw ConfigError("HTTP backend requires a model name");
}

std::string HttpAnnotator::backend_id() const { return "http:" + config_.endpoint; }

std::string HttpAnnotator::post(const std::string& path, const std::string& body) const {
  return with_retry(config_.retry, [&]() -> std::string {
    httplib::Client client(scheme_host_port_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(path_prefix_ + path, headers, body, "application/json");
    if (!res) {
      throw TransportError("request to " + scheme_host_port_ + path_prefix_ + path +
                           " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) throw HttpStatusError(res->status, res->body);
    return res->body;
  });
}

std::string HttpAnnotator::complete(const std::string& prompt, const DecodeParams& params) {
  json req = {{"model", params.model.empty() ? config_.model : params.model},
              {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens}};
  if (params.seed) req["seed"] = *params.seed;
  json res;
  try {
    res = json::parse(post("/chat/completions", req.dump()));
    const json& choice = res.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed completion response: ") + e.what());
  }
}

double HttpAnnotator::score_candidate(const std::string& prompt, const std::string& candidate,
                                      const DecodeParams& params) const {
  json req = {{"model", params.model.empty() ? config_.model : params.model},
              {"prompt", prompt + " " + candidate},
              {"max_tokens", 1},
              {"temperature", 0.0},
              {"echo", true},
              {"logprobs", 1}};
  std::string body;
  try {
    body = post("/completions", req.dump());
  } catch (const HttpStatusError& e) {
    if (e.status() == 400 || e.status() == 404 || e.status() == 422 || e.status() == 501) {
      throw UnsupportedError(std::string("backend rejected continuation scoring: ") + e.what());
    }
    throw;
  }
  try {
    json res = json::parse(body);
    const json& lp = res.at("choices").at(0).at("logprobs");
    const json& token_logprobs = lp.at("token_logprobs");
    std::size_t idx = token_logprobs.size();
    if (lp.contains("text_offset")) {
      const json& offsets = lp.at("text_offset");
      for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i].get<std::size_t>() >= prompt.size()) {
          idx = i;
          break;
        }
      }
    } else {
      std::size_t consumed = 0;
      const json& tokens = lp.at("tokens");
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (consumed >= prompt.size()) {
          idx = i;
          break;
        }
        consumed += tokens[i].get<std::string>().size();
      }
    }
    if (idx >= token_logprobs.size() || token_logprobs[idx].is_null()) {
      throw UnsupportedError("scoring response has no log-probability for the candidate token");
    }
    double v = token_logprobs[idx].get<double>();
    if (!std::isfinite(v)) throw UnsupportedError("non-finite candidate log-probability");
    return v;
  } catch (const json::exception& e) {
    throw UnsupportedError(std::string("scoring response lacks echoed logprobs: ") + e.what());
  }
}

LogprobMap HttpAnnotator::choice_logprob(const ChoiceQuery& query, const DecodeParams& params) {
  query.validate();
  if (!config_.supports_logprobs) {
    throw UnsupportedError("backend " + backend_id() + " is configured without logprob support");
  }
  LogprobMap out;
  for (const auto& c : query.candidates) out[c] = score_candidate(query.prompt, c, params);
  return out;
}

}  // namespace bwsemo
