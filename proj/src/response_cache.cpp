#include "bwsemo/response_cache.hpp"

#include <fstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace bwsemo {

using json = nlohmann::json;

ResponseCache::ResponseCache(std::filesystem::path dir) : persistent_(true) {
  std::filesystem::create_directories(dir);
  file_ = dir / "responses.jsonl";
  std::ifstream in(file_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      entries_.insert_or_assign(j.at("key").get<std::string>(), j.at("response"));
    } catch (const json::exception&) {
      ++skipped_;
      spdlog::warn("cache {}:{}: skipping corrupt entry", file_.string(), lineno);
    }
  }
  // Terminate a torn final line so the next append starts cleanly.
  std::error_code ec;
  if (std::filesystem::file_size(file_, ec) > 0 && !ec) {
    std::ifstream tail(file_, std::ios::binary);
    tail.seekg(-1, std::ios::end);
    if (tail.get() != '\n') std::ofstream(file_, std::ios::app | std::ios::binary) << '\n';
  }
}

std::shared_ptr<ResponseCache> ResponseCache::in_memory() {
  return std::shared_ptr<ResponseCache>(new ResponseCache());
}

std::optional<json> ResponseCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return std::optional<json>(std::in_place, it->second);
}

void ResponseCache::put(const std::string& key, const json& meta, const json& response) {
  std::unique_lock lock(mutex_);
  if (entries_.count(key)) return;
  entries_.emplace(key, response);
  if (!persistent_) return;
  std::ofstream out(file_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to cache file " + file_.string());
  json entry = {{"key", key}, {"meta", meta}, {"response", response}};
  out << entry.dump() << '\n';
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

}  // namespace bwsemo
