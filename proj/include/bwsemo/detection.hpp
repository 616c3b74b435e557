#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bwsemo/annotator.hpp"
#include "bwsemo/corpus.hpp"
#include "bwsemo/prompting.hpp"

namespace bwsemo {

enum class DetectionMethod { Logit, Cot };

std::string_view to_string(DetectionMethod m);

enum class PredictionStatus { Ok, Unparsed, Failed };

/// Embodied-emotion verdict for one record. `predicted` is engaged iff
/// status == Ok; logit predictions carry `margin`, CoT predictions carry
/// `rationale` (also when unparsed).
struct BinaryPrediction {
  std::string id;
  PredictionStatus status = PredictionStatus::Ok;
  std::optional<bool> predicted;
  DetectionMethod method = DetectionMethod::Logit;
  std::optional<std::string> rationale;
  std::optional<double> margin;  // logprob(True) - logprob(False)
  bool tie = false;
  std::string template_name;
  std::string model;
  std::string error;

  bool operator==(const BinaryPrediction&) const = default;
};

nlohmann::json to_json(const BinaryPrediction& p);
BinaryPrediction binary_prediction_from_json(const nlohmann::json& j);

/// Last case-insensitive whole-word "true"/"false" in `generation`, quoted or
/// bare. nullopt when neither occurs.
std::optional<bool> extract_cot_answer(std::string_view generation);

/// Compares the scores of the "True" and "False" continuations. Equal scores
/// resolve to true with `tie` set. Throws ConfigError for a template that is
/// not a bare-answer template; UnsupportedError propagates from the backend.
BinaryPrediction detect_logit(const InstanceRecord& record, const PromptTemplate& tmpl,
                              Annotator& annotator, const DecodeParams& params);

/// Generates a reasoning chain and extracts the final answer from it. A
/// generation without an answer yields status Unparsed.
BinaryPrediction detect_cot(const InstanceRecord& record, const PromptTemplate& tmpl,
                            Annotator& annotator, const DecodeParams& params);

struct DetectionRun {
  std::vector<BinaryPrediction> predictions;  // dataset order
  std::size_t ties = 0;
  std::size_t unparsed = 0;
  std::size_t failed = 0;
};

/// One prediction per record, in dataset order for any concurrency. Per-record
/// backend failures are recorded with status Failed; UnsupportedError and
/// ConfigError abort the run.
DetectionRun run_detection(const Dataset& dataset, const PromptTemplate& tmpl,
                           DetectionMethod method, Annotator& annotator,
                           const DecodeParams& params, std::size_t concurrency);

}  // namespace bwsemo
