#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "bwsemo/annotator.hpp"
#include "bwsemo/corpus.hpp"
#include "bwsemo/emotion.hpp"

namespace bwsemo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct BackendConfig {
  // HTTP backend
  std::string endpoint;
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_ms = 60000;
  int retries = 3;
  int backoff_ms = 1000;
  // Oracle backend: a profile JSON path, or "gold" to derive latents from
  // the dataset's gold labels.
  std::string oracle_profile;
  double oracle_noise = 0.0;
  bool oracle_logprobs = true;

  bool is_oracle() const { return !oracle_profile.empty(); }
};

struct RunConfig {
  std::filesystem::path dataset;
  DatasetFormat format = DatasetFormat::Jsonl;
  bool strict = false;
  std::string template_name;
  std::filesystem::path template_manifest;
  std::string method;  // "", "logit" or "cot"

  BackendConfig backend;
  double temperature = 0.0;
  std::optional<int> max_tokens;
  std::optional<std::uint64_t> seed;

  std::optional<double> k;
  std::string k_preset;
  std::size_t concurrency = 1;
  int parse_retries = 1;
  std::optional<std::size_t> max_judgments;

  std::filesystem::path cache_dir;  // default: <out>/cache
  std::filesystem::path out_dir = "runs";
  bool audit_log = false;
};

/// `<out>/<command>-<digest[:12]>-s<seed>[-k<k>][-<template>]`
std::filesystem::path run_directory(const RunConfig& config, std::string_view command,
                                    const std::string& dataset_digest,
                                    std::optional<double> k = std::nullopt);

/// First emotion name (whole word, case-insensitive) after the first
/// "Answer:" in `response`, or anywhere when there is no "Answer:".
std::optional<Emotion> parse_zeroshot_answer(std::string_view response);

int cmd_detect(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_classify_zeroshot(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_classify_bws(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Evaluates a predictions JSONL file against a gold dataset, over the ids
/// both share. Report files go to `out_dir` (default: next to predictions).
int cmd_eval(const std::filesystem::path& gold, const std::filesystem::path& predictions,
             DatasetFormat gold_format, const std::filesystem::path& out_dir, std::ostream& out,
             std::ostream& err);

/// Label files hold one label per line; blank lines are ignored.
int cmd_kappa(const std::filesystem::path& labels_a, const std::filesystem::path& labels_b,
              std::ostream& out, std::ostream& err);

/// `action` is "list" or "dump"; dump prints the named template body.
int cmd_templates(std::string_view action, const std::string& name,
                  const std::filesystem::path& manifest, std::ostream& out, std::ostream& err);

}  // namespace bwsemo
