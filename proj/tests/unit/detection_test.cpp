#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "bwsemo/detection.hpp"
#include "bwsemo/errors.hpp"
#include "bwsemo/oracle.hpp"
#include "bwsemo/response_cache.hpp"
#include "test_support.hpp"

using namespace bwsemo;
using testsupport::ScriptedAnnotator;

namespace {

const PromptTemplate& tmpl(const char* name) { return builtin_templates().at(name); }

}  // namespace

TEST(CotExtraction, LastWholeWordWins) {
  EXPECT_EQ(extract_cot_answer("...so the answer is \"True.\""), true);
  EXPECT_EQ(extract_cot_answer("False... however True"), true);
  EXPECT_EQ(extract_cot_answer("True at first, but FALSE."), false);
  EXPECT_EQ(extract_cot_answer("**Answer: false**"), false);
  EXPECT_EQ(extract_cot_answer("untrue and falsehood"), std::nullopt);
  EXPECT_EQ(extract_cot_answer("no verdict here"), std::nullopt);
  EXPECT_EQ(extract_cot_answer(""), std::nullopt);
}

TEST(DetectLogit, OracleFollowsGold) {
  auto ds = testsupport::synthetic_dataset(6);
  OracleAnnotator oracle(ds, profile_from_gold(ds, 1, 0.0));
  for (const auto& r : ds.records()) {
    auto p = detect_logit(r, tmpl("detect_base"), oracle, {});
    EXPECT_EQ(p.predicted, *r.gold_embodied);
    EXPECT_EQ(*p.margin > 0, *r.gold_embodied);
    EXPECT_EQ(p.template_name, "detect_base");
    EXPECT_FALSE(p.tie);
  }
}

TEST(DetectLogit, EqualLogprobsPredictTrueWithTieFlag) {
  auto r = testsupport::record("x", "s", "s");
  ScriptedAnnotator a([](const std::string&, int) { return std::string(); },
                      [](const ChoiceQuery&) { return LogprobMap{{"True", -0.7}, {"False", -0.7}}; });
  auto p = detect_logit(r, tmpl("detect_simple"), a, {});
  EXPECT_EQ(p.predicted, true);
  EXPECT_TRUE(p.tie);
  EXPECT_DOUBLE_EQ(*p.margin, 0.0);
}

TEST(DetectLogit, RejectsCotTemplate) {
  auto r = testsupport::record("x", "s", "s");
  ScriptedAnnotator a([](const std::string&, int) { return std::string(); });
  EXPECT_THROW(detect_logit(r, tmpl("cot_2step"), a, {}), ConfigError);
}

TEST(DetectCot, ParsesAndFlagsUnparsed) {
  auto r = testsupport::record("x", "s", "s");
  ScriptedAnnotator yes([](const std::string&, int) { return std::string("Step 1... so the answer is \"True.\""); });
  auto p = detect_cot(r, tmpl("cot_2step"), yes, {});
  EXPECT_EQ(p.predicted, true);
  EXPECT_EQ(p.status, PredictionStatus::Ok);
  ASSERT_TRUE(p.rationale);
  EXPECT_NE(p.rationale->find("Step 1"), std::string::npos);

  ScriptedAnnotator meh([](const std::string&, int) { return std::string("I am not sure."); });
  auto q = detect_cot(r, tmpl("cot_2step"), meh, {});
  EXPECT_FALSE(q.predicted);
  EXPECT_EQ(q.status, PredictionStatus::Unparsed);
}

TEST(RunDetection, OracleTenRecordsAllMethods) {
  auto ds = testsupport::synthetic_dataset(10);
  OracleAnnotator oracle(ds, profile_from_gold(ds, 2, 0.0));
  for (const char* name : {"detect_base", "detect_simple"}) {
    auto run = run_detection(ds, tmpl(name), DetectionMethod::Logit, oracle, {}, 1);
    ASSERT_EQ(run.predictions.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(run.predictions[i].id, ds[i].id);
      EXPECT_EQ(run.predictions[i].predicted, ds[i].gold_embodied);
      EXPECT_EQ(run.predictions[i].template_name, name);
    }
  }
  for (const char* name : {"cot_2step", "cot_3step", "cot_2step_simple"}) {
    auto run = run_detection(ds, tmpl(name), DetectionMethod::Cot, oracle, {}, 3);
    EXPECT_EQ(run.unparsed, 0u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(run.predictions[i].predicted, ds[i].gold_embodied);
  }
}

TEST(RunDetection, ConcurrencyDoesNotChangeOutput) {
  auto ds = testsupport::synthetic_dataset(40);
  OracleAnnotator oracle(ds, profile_from_gold(ds, 2, 1.5));
  auto a = run_detection(ds, tmpl("detect_base"), DetectionMethod::Logit, oracle, {}, 1);
  auto b = run_detection(ds, tmpl("detect_base"), DetectionMethod::Logit, oracle, {}, 8);
  EXPECT_EQ(a.predictions, b.predictions);
}

TEST(RunDetection, WarmCacheIdenticalWithoutBackendCalls) {
  auto ds = testsupport::synthetic_dataset(10);
  auto oracle = std::make_shared<OracleAnnotator>(ds, profile_from_gold(ds, 2, 0.3));
  auto cache = ResponseCache::in_memory();
  CachedAnnotator cold(oracle, cache);
  auto first = run_detection(ds, tmpl("detect_base"), DetectionMethod::Logit, cold, {}, 4);
  CachedAnnotator warm(oracle, cache);
  auto second = run_detection(ds, tmpl("detect_base"), DetectionMethod::Logit, warm, {}, 4);
  EXPECT_EQ(first.predictions, second.predictions);
  EXPECT_EQ(warm.counters().backend_calls, 0u);
  EXPECT_EQ(warm.counters().cache_hits, 10u);
}

TEST(RunDetection, PerRecordErrorsAreIsolated) {
  auto ds = testsupport::synthetic_dataset(5);
  ScriptedAnnotator flaky([](const std::string&, int) { return std::string(); },
                          [&](const ChoiceQuery& q) -> LogprobMap {
                            if (q.prompt.find(ds[2].sentence) != std::string::npos) {
                              throw TransportError("connection reset");
                            }
                            return {{"True", -0.1}, {"False", -2.0}};
                          });
  auto run = run_detection(ds, tmpl("detect_base"), DetectionMethod::Logit, flaky, {}, 2);
  EXPECT_EQ(run.failed, 1u);
  EXPECT_EQ(run.predictions[2].status, PredictionStatus::Failed);
  EXPECT_NE(run.predictions[2].error.find("connection reset"), std::string::npos);
  EXPECT_EQ(run.predictions[3].predicted, true);
}

TEST(RunDetection, UnsupportedAborts) {
  auto ds = testsupport::synthetic_dataset(3);
  OracleAnnotator oracle(ds, profile_from_gold(ds, 2, 0.0), false);
  EXPECT_THROW(run_detection(ds, tmpl("detect_base"), DetectionMethod::Logit, oracle, {}, 1),
               UnsupportedError);
}

TEST(BinaryPredictionJson, RoundTrip) {
  BinaryPrediction p;
  p.id = "a";
  p.predicted = false;
  p.method = DetectionMethod::Cot;
  p.rationale = "because";
  p.template_name = "cot_2step";
  p.model = "m";
  EXPECT_EQ(binary_prediction_from_json(to_json(p)), p);
  BinaryPrediction q;
  q.id = "b";
  q.status = PredictionStatus::Failed;
  q.error = "boom";
  q.margin = 0.0;
  q.tie = true;
  EXPECT_EQ(binary_prediction_from_json(to_json(q)), q);
}
