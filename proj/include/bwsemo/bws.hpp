#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bwsemo/annotator.hpp"
#include "bwsemo/corpus.hpp"
#include "bwsemo/emotion.hpp"
#include "bwsemo/prompting.hpp"

namespace bwsemo {

using Tuple = std::array<std::string, 4>;

/// Schedule of 4-tuples for one BWS run.
struct TuplePlan {
  std::vector<std::string> ids;  // items in input order
  double multiplier = 0.0;
  std::uint64_t seed = 0;
  std::vector<Tuple> tuples;
  std::map<std::string, std::size_t> occurrence;

  std::size_t n_items() const { return ids.size(); }
  bool operator==(const TuplePlan&) const = default;
};

/// round(k * n), the number of tuples a plan with multiplier k holds.
std::size_t tuple_count(std::size_t n_items, double multiplier);

/// Builds round(k*N) tuples by passes. Each pass shuffles all ids and cuts
/// them into consecutive groups of four; a short final group is topped up
/// with the least-used ids from outside the group (seeded tie-break). Passes
/// repeat until enough tuples exist and the last pass is truncated.
///
/// Throws std::invalid_argument for fewer than 4 ids, duplicate ids, or a k
/// whose tuple count cannot cover every id at least once.
TuplePlan schedule_tuples(std::span<const std::string> ids, double multiplier, std::uint64_t seed);

nlohmann::json to_json(const TuplePlan& plan);
TuplePlan tuple_plan_from_json(const nlohmann::json& j);

/// Multiplier presets. "paper" is the set of reported tuple counts; the
/// "fifty-percent" schedule starts at 2 and grows by half up to 72.
std::vector<double> k_preset(std::string_view name);

enum class BwsParseFailure { MissingLine, IdNotInTuple, SameId, ConflictingIds };

std::string_view to_string(BwsParseFailure f);

struct BwsParse {
  std::optional<std::string> most_id;
  std::optional<std::string> least_id;
  std::optional<BwsParseFailure> failure;
  std::string detail;

  bool ok() const { return !failure; }
};

/// Reads the last "Most ... Example:" and "Least ... Example:" lines of a
/// response. On each line the tokens after the colon are stripped of
/// surrounding punctuation and compared exactly against the tuple ids; the
/// line must name exactly one distinct tuple id. Both ids must differ.
BwsParse parse_bws_response(std::string_view raw, const Tuple& tuple_ids, Emotion emotion);

struct BwsJudgment {
  std::size_t tuple_index = 0;
  Emotion emotion = Emotion::Joy;
  std::string most_id;
  std::string least_id;
  std::string raw;
  bool valid = false;
  std::string failure_reason;  // empty when valid
  int attempts = 0;

  bool operator==(const BwsJudgment&) const = default;
};

nlohmann::json to_json(const BwsJudgment& j);
BwsJudgment bws_judgment_from_json(const nlohmann::json& j);

struct BwsRunOptions {
  /// Extra attempts with the identical prompt after an unparseable answer.
  int parse_retries = 1;
  std::size_t concurrency = 1;
  /// Judgments already on disk; their (tuple, emotion) pairs are not re-asked.
  std::vector<BwsJudgment> completed;
  /// Stop after this many new judgments (the remainder stays pending).
  std::optional<std::size_t> max_new_judgments;
  /// Called once per new judgment, serialized, in completion order.
  std::function<void(const BwsJudgment&)> on_judgment;
};

struct BwsRunResult {
  std::vector<BwsJudgment> judgments;  // ordered by (tuple, emotion)
  std::size_t issued = 0;              // judgments requested in this call
  std::size_t invalid = 0;
  bool complete = false;               // every (tuple, emotion) pair judged
};

/// Annotates every (tuple, emotion) pair of `plan` with `tmpl` (normally
/// bws_rank). Invalid answers are kept with valid=false.
BwsRunResult run_bws(const TuplePlan& plan, const Dataset& dataset, const PromptTemplate& tmpl,
                     std::span<const Emotion> emotions, Annotator& annotator,
                     const DecodeParams& params, BwsRunOptions options = {});

struct ItemScores {
  PerEmotion<std::size_t> best{};
  PerEmotion<std::size_t> worst{};
  PerEmotion<std::size_t> overall{};
  PerEmotion<double> score{};
};

struct ScoreTable {
  std::vector<std::string> ids;  // plan order
  std::vector<ItemScores> rows;
  PerEmotion<std::size_t> valid_judgments{};
  std::size_t uncovered = 0;  // (id, emotion) cells with no valid judgment

  const ItemScores* find(const std::string& id) const;
};

/// (#best - #worst) / #overall per (id, emotion) over valid judgments only;
/// cells never covered by a valid judgment score 0 and are counted as
/// uncovered.
ScoreTable compute_scores(std::span<const BwsJudgment> judgments, const TuplePlan& plan);

std::string score_table_csv(const ScoreTable& table);

struct EmotionPrediction {
  std::string id;
  Emotion predicted = Emotion::Joy;
  PerEmotion<double> scores{};
  bool tie = false;
};

/// Argmax over the six scores; ties go to the earliest emotion in canonical
/// order and set `tie`.
std::vector<EmotionPrediction> classify(const ScoreTable& scores);

nlohmann::json to_json(const EmotionPrediction& p);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace bwsemo
