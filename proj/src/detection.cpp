#include "bwsemo/detection.hpp"

#include <cctype>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "bwsemo/errors.hpp"
#include "bwsemo/parallel.hpp"

namespace bwsemo {

using json = nlohmann::json;

std::string_view to_string(DetectionMethod m) { return m == DetectionMethod::Logit ? "logit" : "cot"; }

json to_json(const BinaryPrediction& p) {
  json j;
  j["id"] = p.id;
  j["predicted"] = p.predicted ? json(*p.predicted) : json(nullptr);
  j["method"] = std::string(to_string(p.method));
  if (p.margin) j["margin"] = *p.margin;
  if (p.rationale) j["rationale"] = *p.rationale;
  if (p.tie) j["tie"] = true;
  if (p.status != PredictionStatus::Ok) {
    j["status"] = p.status == PredictionStatus::Unparsed ? "unparsed" : "failed";
    if (!p.error.empty()) j["error"] = p.error;
  }
  j["template"] = p.template_name;
  j["model"] = p.model;
  return j;
}

BinaryPrediction binary_prediction_from_json(const json& j) {
  BinaryPrediction p;
  p.id = j.at("id").get<std::string>();
  if (!j.at("predicted").is_null()) p.predicted = j.at("predicted").get<bool>();
  p.method = j.value("method", "logit") == "cot" ? DetectionMethod::Cot : DetectionMethod::Logit;
  if (j.contains("margin")) p.margin = j.at("margin").get<double>();
  if (j.contains("rationale")) p.rationale = j.at("rationale").get<std::string>();
  p.tie = j.value("tie", false);
  std::string status = j.value("status", "ok");
  p.status = status == "unparsed" ? PredictionStatus::Unparsed
             : status == "failed" ? PredictionStatus::Failed
                                  : PredictionStatus::Ok;
  p.error = j.value("error", "");
  p.template_name = j.value("template", "");
  p.model = j.value("model", "");
  return p;
}

std::optional<bool> extract_cot_answer(std::string_view text) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  std::optional<bool> answer;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i > 0 && is_word(text[i - 1])) continue;
    for (auto [word, value] : {std::pair{std::string_view("true"), true},
                               std::pair{std::string_view("false"), false}}) {
      if (i + word.size() > text.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < word.size() && match; ++k) {
        match = std::tolower(static_cast<unsigned char>(text[i + k])) == word[k];
      }
      if (match && (i + word.size() == text.size() || !is_word(text[i + word.size()]))) {
        answer = value;
      }
    }
  }
  return answer;
}

BinaryPrediction detect_logit(const InstanceRecord& record, const PromptTemplate& tmpl,
                              Annotator& annotator, const DecodeParams& params) {
  if (!tmpl.is_bare_answer()) {
    throw ConfigError("template '" + tmpl.name + "' is not a bare-answer detection template");
  }
  RenderContext ctx;
  ctx.record = &record;
  ChoiceQuery query{render(tmpl, ctx), {"True", "False"}};
  LogprobMap scores = annotator.choice_logprob(query, params);
  double t = scores.at("True");
  double f = scores.at("False");

  BinaryPrediction p;
  p.id = record.id;
  p.method = DetectionMethod::Logit;
  p.margin = t - f;
  p.predicted = t >= f;
  p.tie = t == f;
  p.template_name = tmpl.name;
  p.model = params.model;
  if (p.tie) spdlog::info("record '{}': True/False scores tie, predicting True", record.id);
  return p;
}

BinaryPrediction detect_cot(const InstanceRecord& record, const PromptTemplate& tmpl,
                            Annotator& annotator, const DecodeParams& params) {
  if (!is_cot_template(tmpl.name) && tmpl.is_bare_answer()) {
    throw ConfigError("template '" + tmpl.name + "' is not a chain-of-thought template");
  }
  RenderContext ctx;
  ctx.record = &record;
  std::string generation = annotator.complete(render(tmpl, ctx), params);

  BinaryPrediction p;
  p.id = record.id;
  p.method = DetectionMethod::Cot;
  p.rationale = generation;
  p.template_name = tmpl.name;
  p.model = params.model;
  p.predicted = extract_cot_answer(generation);
  if (!p.predicted) {
    p.status = PredictionStatus::Unparsed;
    p.error = "no True/False answer in generation";
  }
  return p;
}

DetectionRun run_detection(const Dataset& dataset, const PromptTemplate& tmpl,
                           DetectionMethod method, Annotator& annotator,
                           const DecodeParams& params, std::size_t concurrency) {
  DetectionRun run;
  run.predictions.resize(dataset.size());
  parallel_for(dataset.size(), concurrency, [&](std::size_t i) {
    const InstanceRecord& r = dataset[i];
    try {
      run.predictions[i] = method == DetectionMethod::Logit ? detect_logit(r, tmpl, annotator, params)
                                                            : detect_cot(r, tmpl, annotator, params);
    } catch (const UnsupportedError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const TemplateError&) {
      throw;
    } catch (const std::exception& e) {
      BinaryPrediction p;
      p.id = r.id;
      p.status = PredictionStatus::Failed;
      p.predicted.reset();
      p.method = method;
      p.template_name = tmpl.name;
      p.model = params.model;
      p.error = e.what();
      run.predictions[i] = std::move(p);
    }
  });
  for (const auto& p : run.predictions) {
    run.ties += p.tie ? 1 : 0;
    run.unparsed += p.status == PredictionStatus::Unparsed ? 1 : 0;
    run.failed += p.status == PredictionStatus::Failed ? 1 : 0;
  }
  if (run.ties) spdlog::info("{} logit ties resolved to True", run.ties);
  return run;
}

}  // namespace bwsemo
