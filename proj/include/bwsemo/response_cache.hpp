#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace bwsemo {

/// Append-only on-disk store of `hex digest -> {meta, response}`.
///
/// Layout: `<dir>/responses.jsonl`, one JSON object per line with keys
/// `key`, `meta` and `response`. Unparseable lines are skipped with a warning
/// (a crash can leave a torn final line). Readers run concurrently; appends
/// are serialized.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  /// In-memory cache with no backing file.
  static std::shared_ptr<ResponseCache> in_memory();

  std::optional<nlohmann::json> get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& meta, const nlohmann::json& response);

  std::size_t size() const;
  std::size_t skipped_lines() const { return skipped_; }
  const std::filesystem::path& file() const { return file_; }

 private:
  ResponseCache() = default;

  std::filesystem::path file_;
  bool persistent_ = false;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, nlohmann::json> entries_;
  std::size_t skipped_ = 0;
};

}  // namespace bwsemo
