#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "bwsemo/annotator.hpp"
#include "bwsemo/corpus.hpp"
#include "bwsemo/emotion.hpp"

namespace bwsemo {

/// Latent per-item intensities driving the simulated judge.
struct OracleProfile {
  std::map<std::string, PerEmotion<double>> latent;
  /// Optional per-item embodied flag; falls back to the record's gold label.
  std::map<std::string, bool> embodied;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

/// JSON: {"seed": int, "noise_sd": real,
///        "latent": {id: {"Joy": x, ...all six}}, "embodied": {id: bool}}
OracleProfile load_oracle_profile(const std::filesystem::path& path);
void save_oracle_profile(const OracleProfile& profile, const std::filesystem::path& path);

/// Gold emotion gets latent 1.0; every other emotion draws a seeded uniform
/// value in [0, distractor_max). Records without a gold emotion get only
/// distractors.
OracleProfile profile_from_gold(const Dataset& ds, std::uint64_t seed, double noise_sd,
                                double distractor_max = 0.8);

/// Answer for one BWS tuple in the "Most X Example: / Least X Example:" format.
///
/// Each id's intensity is its latent plus N(0, noise_sd) noise seeded from
/// (profile.seed, tuple ids, emotion). Ties resolve by id order: the smallest
/// id wins Most, the largest id wins Least. Throws std::out_of_range for an id
/// without latents.
std::string oracle_bws_answer(const std::array<std::string, 4>& tuple_ids, Emotion emotion,
                              const OracleProfile& profile);

/// Simulated annotator. Recovers the instance(s) a prompt refers to from its
/// "Example:", "Sentence:" and "Body part:" lines and answers from the
/// profile. Understands the BWS, detection (bare and chain-of-thought) and
/// zero-shot classification prompt families.
class OracleAnnotator : public Annotator {
 public:
  OracleAnnotator(const Dataset& dataset, OracleProfile profile, bool supports_logprobs = true);

  std::string backend_id() const override;
  std::string complete(const std::string& prompt, const DecodeParams& params) override;
  LogprobMap choice_logprob(const ChoiceQuery& query, const DecodeParams& params) override;

  const OracleProfile& profile() const { return profile_; }

 private:
  const InstanceRecord* locate(const std::string& prompt) const;
  double embodied_margin(const InstanceRecord& r) const;

  const Dataset& dataset_;
  OracleProfile profile_;
  bool supports_logprobs_;
  std::map<std::pair<std::string, std::string>, std::string> by_text_;
};

}  // namespace bwsemo
