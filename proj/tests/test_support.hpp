#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bwsemo/annotator.hpp"
#include "bwsemo/corpus.hpp"
#include "bwsemo/emotion.hpp"

namespace testsupport {

inline std::filesystem::path data_dir() { return BWSEMO_TEST_DATA; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("bwsemo-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline bwsemo::InstanceRecord record(std::string id, std::string sentence, std::string body_part,
                                     std::vector<std::string> preceding = {}) {
  bwsemo::InstanceRecord r;
  r.id = std::move(id);
  r.sentence = std::move(sentence);
  r.body_part = std::move(body_part);
  r.preceding = std::move(preceding);
  return r;
}

/// N labeled synthetic records; gold emotion cycles through the six classes
/// and every third record is non-embodied.
inline bwsemo::Dataset synthetic_dataset(std::size_t n, std::uint64_t seed = 7) {
  static const char* parts[] = {"eyes", "hands", "heart", "face", "shoulders", "jaw", "fists"};
  std::mt19937_64 rng(seed);
  std::vector<bwsemo::InstanceRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%03zu", i);
    std::string part = parts[rng() % 7];
    auto r = record(id, "Sentence " + std::to_string(i) + ": his " + part + " moved.", part,
                    {"Context " + std::to_string(i) + "."});
    r.gold_emotion = bwsemo::kAllEmotions[i % 6];
    r.gold_embodied = i % 3 != 0;
    recs.push_back(std::move(r));
  }
  return bwsemo::Dataset(std::move(recs));
}

inline std::string dataset_jsonl(const bwsemo::Dataset& ds) {
  std::ostringstream os;
  bwsemo::write_dataset(ds, os, bwsemo::DatasetFormat::Jsonl);
  return os.str();
}

/// Annotator driven by a callback; counts calls.
class ScriptedAnnotator : public bwsemo::Annotator {
 public:
  using CompleteFn = std::function<std::string(const std::string&, int attempt)>;
  using ChoiceFn = std::function<bwsemo::LogprobMap(const bwsemo::ChoiceQuery&)>;

  explicit ScriptedAnnotator(CompleteFn complete, ChoiceFn choice = {})
      : complete_(std::move(complete)), choice_(std::move(choice)) {}

  std::string backend_id() const override { return "scripted"; }
  std::string complete(const std::string& prompt, const bwsemo::DecodeParams&) override {
    ++calls;
    return complete_(prompt, 0);
  }
  std::string complete_retry(const std::string& prompt, const bwsemo::DecodeParams&,
                             int attempt) override {
    ++calls;
    return complete_(prompt, attempt);
  }
  bwsemo::LogprobMap choice_logprob(const bwsemo::ChoiceQuery& q, const bwsemo::DecodeParams&) override {
    ++calls;
    q.validate();
    return choice_(q);
  }

  std::atomic<int> calls{0};

 private:
  CompleteFn complete_;
  ChoiceFn choice_;
};

}  // namespace testsupport
