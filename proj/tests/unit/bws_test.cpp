#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "bwsemo/bws.hpp"
#include "bwsemo/oracle.hpp"
#include "bwsemo/response_cache.hpp"
#include "test_support.hpp"

using namespace bwsemo;
using json = nlohmann::json;
using testsupport::ScriptedAnnotator;

namespace {

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("i" + std::to_string(i));
  return ids;
}

void expect_well_formed(const TuplePlan& plan) {
  std::map<std::string, std::size_t> counted;
  for (const auto& t : plan.tuples) {
    std::set<std::string> distinct(t.begin(), t.end());
    EXPECT_EQ(distinct.size(), 4u);
    for (const auto& id : t) ++counted[id];
  }
  EXPECT_EQ(counted, plan.occurrence);
  EXPECT_EQ(counted.size(), plan.ids.size());
}

BwsJudgment judged(std::size_t tuple, Emotion e, std::string most, std::string least) {
  BwsJudgment j;
  j.tuple_index = tuple;
  j.emotion = e;
  j.most_id = std::move(most);
  j.least_id = std::move(least);
  j.valid = true;
  j.attempts = 1;
  return j;
}

}  // namespace

TEST(Schedule, EightItemsNoRemainder) {
  auto ids = make_ids(8);
  auto plan = schedule_tuples(ids, 2.0, 1);
  EXPECT_EQ(plan.tuples.size(), 16u);
  expect_well_formed(plan);
  for (const auto& [id, n] : plan.occurrence) EXPECT_EQ(n, 8u) << id;
}

TEST(Schedule, SixItemsWithTopUp) {
  auto ids = make_ids(6);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto plan = schedule_tuples(ids, 2.0, seed);
    ASSERT_EQ(plan.tuples.size(), 12u);
    expect_well_formed(plan);
    std::size_t sum = 0, lo = SIZE_MAX, hi = 0;
    for (const auto& [id, n] : plan.occurrence) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
      sum += n;
    }
    EXPECT_GE(lo, 6u);  // once per pass
    EXPECT_LE(hi - lo, 4u);
    EXPECT_EQ(sum, 48u);
  }
}

TEST(Schedule, DeterministicAndSeedSensitive) {
  auto ids = make_ids(37);
  EXPECT_EQ(schedule_tuples(ids, 4.5, 3), schedule_tuples(ids, 4.5, 3));
  EXPECT_NE(schedule_tuples(ids, 4.5, 3).tuples, schedule_tuples(ids, 4.5, 4).tuples);
}

TEST(Schedule, TupleCountRounds) {
  EXPECT_EQ(tuple_count(20, 2.0), 40u);
  EXPECT_EQ(tuple_count(7, 4.5), 32u);  // 31.5 rounds up
  EXPECT_EQ(tuple_count(10, 6.75), 68u);
  EXPECT_EQ(schedule_tuples(make_ids(7), 4.5, 1).tuples.size(), 32u);
}

TEST(Schedule, RejectsBadInput) {
  EXPECT_THROW(schedule_tuples(make_ids(3), 2.0, 1), std::invalid_argument);
  EXPECT_THROW(schedule_tuples(make_ids(8), 0.0, 1), std::invalid_argument);
  EXPECT_THROW(schedule_tuples(make_ids(8), 0.1, 1), std::invalid_argument);
  std::vector<std::string> dup{"a", "b", "c", "a"};
  EXPECT_THROW(schedule_tuples(dup, 2.0, 1), std::invalid_argument);
}

TEST(Schedule, JsonRoundTrip) {
  auto plan = schedule_tuples(make_ids(9), 3.0, 5);
  EXPECT_EQ(tuple_plan_from_json(json::parse(to_json(plan).dump())), plan);
}

TEST(Presets, Values) {
  EXPECT_EQ(k_preset("paper"), (std::vector<double>{4, 12, 24, 36, 48, 72}));
  auto fifty = k_preset("fifty-percent");
  ASSERT_GE(fifty.size(), 5u);
  EXPECT_DOUBLE_EQ(fifty[0], 2.0);
  EXPECT_DOUBLE_EQ(fifty[1], 3.0);
  EXPECT_DOUBLE_EQ(fifty[2], 4.5);
  EXPECT_DOUBLE_EQ(fifty[3], 6.75);
  EXPECT_DOUBLE_EQ(fifty[4], 10.125);
  EXPECT_LE(fifty.back(), 72.0);
  EXPECT_GT(fifty.back() * 1.5, 72.0);
  EXPECT_THROW(k_preset("nope"), std::invalid_argument);
}

TEST(Parse, SpecExamples) {
  Tuple t{"42", "7", "3", "9"};
  auto ok = parse_bws_response("Most Fear Example: 42\nLeast Fear Example: 7", t, Emotion::Fear);
  ASSERT_TRUE(ok.ok());
  EXPECT_EQ(*ok.most_id, "42");
  EXPECT_EQ(*ok.least_id, "7");
  auto same = parse_bws_response("Most Fear Example: 42\nLeast Fear Example: 42", t, Emotion::Fear);
  EXPECT_EQ(same.failure, BwsParseFailure::SameId);
}

TEST(Parse, AdversarialCorpus) {
  std::ifstream in(testsupport::data_dir() / "bws_responses.json");
  json cases = json::parse(in);
  ASSERT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    SCOPED_TRACE(c["name"].get<std::string>());
    auto ids = c["tuple"].get<std::vector<std::string>>();
    Tuple t{ids[0], ids[1], ids[2], ids[3]};
    auto got = parse_bws_response(c["response"].get<std::string>(), t,
                                  *parse_emotion(c["emotion"].get<std::string>()));
    if (c.contains("failure")) {
      ASSERT_TRUE(got.failure);
      EXPECT_EQ(to_string(*got.failure), c["failure"].get<std::string>());
    } else {
      ASSERT_TRUE(got.ok()) << got.detail;
      EXPECT_EQ(*got.most_id, c["most"].get<std::string>());
      EXPECT_EQ(*got.least_id, c["least"].get<std::string>());
    }
  }
}

TEST(Scores, DirectFormula) {
  // "a" sits in 12 tuples for Joy: best 5 times, worst twice.
  TuplePlan plan;
  plan.ids = {"a", "b", "c", "d", "e"};
  std::vector<BwsJudgment> js;
  for (std::size_t i = 0; i < 12; ++i) {
    plan.tuples.push_back({"a", "b", "c", i % 2 ? "d" : "e"});
    std::string most = i < 5 ? "a" : "b";
    std::string least = (i == 5 || i == 6) ? "a" : "c";
    js.push_back(judged(i, Emotion::Joy, most, least));
  }
  auto table = compute_scores(js, plan);
  const auto* a = table.find("a");
  EXPECT_EQ(a->best[0], 5u);
  EXPECT_EQ(a->worst[0], 2u);
  EXPECT_EQ(a->overall[0], 12u);
  EXPECT_DOUBLE_EQ(a->score[0], 0.25);
  EXPECT_DOUBLE_EQ(table.find("d")->score[0], 0.0);  // never chosen
  EXPECT_DOUBLE_EQ(table.find("c")->score[0], -10.0 / 12.0);
}

TEST(Scores, UpperBoundAndInvalidIgnored) {
  TuplePlan plan;
  plan.ids = {"a", "b", "c", "d", "e"};
  plan.tuples = {{"a", "b", "c", "d"}, {"a", "c", "d", "e"}, {"e", "a", "b", "c"}, {"a", "b", "d", "e"}};
  std::vector<BwsJudgment> js;
  for (std::size_t i = 0; i < 4; ++i) js.push_back(judged(i, Emotion::Anger, "a", plan.tuples[i][3]));
  BwsJudgment bad;
  bad.tuple_index = 0;
  bad.emotion = Emotion::Anger;
  bad.valid = false;
  bad.failure_reason = "missing_line";
  js.push_back(bad);
  auto table = compute_scores(js, plan);
  EXPECT_DOUBLE_EQ(table.find("a")->score[index_of(Emotion::Anger)], 1.0);
  EXPECT_EQ(table.find("a")->overall[index_of(Emotion::Anger)], 4u);
  EXPECT_EQ(table.valid_judgments[index_of(Emotion::Anger)], 4u);
  EXPECT_EQ(table.uncovered, 5u * 5u);  // the five other emotions have no judgments
}

TEST(Scores, InconsistentJudgmentThrows) {
  TuplePlan plan;
  plan.ids = {"a", "b", "c", "d"};
  plan.tuples = {{"a", "b", "c", "d"}};
  std::vector<BwsJudgment> js{judged(0, Emotion::Joy, "a", "z")};
  EXPECT_THROW(compute_scores(js, plan), std::invalid_argument);
  std::vector<BwsJudgment> out_of_range{judged(3, Emotion::Joy, "a", "b")};
  EXPECT_THROW(compute_scores(out_of_range, plan), std::invalid_argument);
}

TEST(Classify, ArgmaxAndTies) {
  ScoreTable t;
  t.ids = {"x", "y", "z"};
  t.rows.resize(3);
  t.rows[0].score = {0.5, 0.2, 0.1, -0.3, 0.2, 0.0};
  t.rows[1].score = {0.4, 0.1, 0.0, 0.0, 0.4, -1.0};
  t.rows[2].score = {0, 0, 0, 0, 0, 0};
  auto p = classify(t);
  EXPECT_EQ(p[0].predicted, Emotion::Joy);
  EXPECT_FALSE(p[0].tie);
  EXPECT_EQ(p[1].predicted, Emotion::Joy);
  EXPECT_TRUE(p[1].tie);
  EXPECT_EQ(p[2].predicted, Emotion::Joy);
  EXPECT_TRUE(p[2].tie);
  t.rows[1].score = {0.1, 0.1, 0.0, 0.0, 0.4, 0.4};
  EXPECT_EQ(classify(t)[1].predicted, Emotion::Fear);
}

TEST(RunBws, OracleJudgmentsMatchLatentExtremes) {
  auto ds = testsupport::synthetic_dataset(12);
  auto profile = profile_from_gold(ds, 4, 0.0);
  OracleAnnotator oracle(ds, profile);
  auto plan = schedule_tuples(ds.ids(), 1.0, 4);
  ASSERT_EQ(plan.tuples.size(), 12u);
  auto result = run_bws(plan, ds, builtin_templates().at("bws_rank"), kAllEmotions, oracle, {});
  EXPECT_TRUE(result.complete);
  EXPECT_EQ(result.judgments.size(), 72u);
  EXPECT_EQ(result.invalid, 0u);
  for (const auto& j : result.judgments) {
    const auto& t = plan.tuples[j.tuple_index];
    const std::size_t e = index_of(j.emotion);
    for (const auto& id : t) {
      EXPECT_GE(profile.latent.at(j.most_id)[e], profile.latent.at(id)[e]);
      EXPECT_LE(profile.latent.at(j.least_id)[e], profile.latent.at(id)[e]);
    }
  }
}

TEST(RunBws, GarbageForOneTupleIsIsolatedAndRetried) {
  auto ds = testsupport::synthetic_dataset(8);
  auto plan = schedule_tuples(ds.ids(), 1.0, 2);
  auto is_poisoned = [&](const std::string& prompt) {
    return std::all_of(plan.tuples[0].begin(), plan.tuples[0].end(), [&](const std::string& id) {
      return prompt.find("Example: " + id + "\n") != std::string::npos;
    });
  };
  OracleAnnotator oracle(ds, profile_from_gold(ds, 2, 0.0));
  std::atomic<int> retries{0};
  ScriptedAnnotator flaky([&](const std::string& prompt, int attempt) {
    if (attempt > 0) ++retries;
    if (is_poisoned(prompt)) return std::string("lorem ipsum");
    return oracle.complete(prompt, {});
  });
  BwsRunOptions opts;
  opts.parse_retries = 2;
  auto result = run_bws(plan, ds, builtin_templates().at("bws_rank"), kAllEmotions, flaky, {}, opts);
  ASSERT_EQ(result.judgments.size(), 48u);
  EXPECT_EQ(result.invalid, 6u);
  EXPECT_EQ(retries.load(), 12);
  for (const auto& j : result.judgments) {
    EXPECT_EQ(j.valid, j.tuple_index != 0);
    if (!j.valid) {
      EXPECT_EQ(j.attempts, 3);
      EXPECT_EQ(j.failure_reason.rfind("missing_line", 0), 0u);
      EXPECT_EQ(j.raw, "lorem ipsum");
    }
  }
}

TEST(RunBws, ResumeIssuesOnlyMissingSlots) {
  auto ds = testsupport::synthetic_dataset(10);
  auto plan = schedule_tuples(ds.ids(), 2.0, 8);
  OracleAnnotator oracle(ds, profile_from_gold(ds, 8, 0.4));
  const auto& tmpl = builtin_templates().at("bws_rank");

  std::vector<BwsJudgment> streamed;
  BwsRunOptions first;
  first.max_new_judgments = 50;
  first.concurrency = 4;
  first.on_judgment = [&](const BwsJudgment& j) { streamed.push_back(j); };
  auto partial = run_bws(plan, ds, tmpl, kAllEmotions, oracle, {}, first);
  EXPECT_FALSE(partial.complete);
  EXPECT_EQ(partial.issued, 50u);
  EXPECT_EQ(streamed.size(), 50u);

  std::set<std::pair<std::size_t, Emotion>> done;
  for (const auto& j : streamed) done.insert({j.tuple_index, j.emotion});
  ScriptedAnnotator counting([&](const std::string& p, int) { return oracle.complete(p, {}); });
  std::set<std::pair<std::size_t, Emotion>> asked;
  BwsRunOptions second;
  second.completed = streamed;
  second.on_judgment = [&](const BwsJudgment& j) { asked.insert({j.tuple_index, j.emotion}); };
  auto rest = run_bws(plan, ds, tmpl, kAllEmotions, counting, {}, second);
  EXPECT_TRUE(rest.complete);
  EXPECT_EQ(rest.issued, 120u - 50u);
  EXPECT_EQ(counting.calls.load(), 70);
  for (const auto& slot : asked) EXPECT_FALSE(done.count(slot));

  auto whole = run_bws(plan, ds, tmpl, kAllEmotions, oracle, {});
  EXPECT_EQ(rest.judgments, whole.judgments);
}

TEST(RunBws, ConcurrencyIndependentOutput) {
  auto ds = testsupport::synthetic_dataset(16);
  auto plan = schedule_tuples(ds.ids(), 3.0, 1);
  OracleAnnotator oracle(ds, profile_from_gold(ds, 1, 0.5));
  const auto& tmpl = builtin_templates().at("bws_rank");
  BwsRunOptions par;
  par.concurrency = 8;
  auto a = run_bws(plan, ds, tmpl, kAllEmotions, oracle, {});
  auto b = run_bws(plan, ds, tmpl, kAllEmotions, oracle, {}, par);
  EXPECT_EQ(a.judgments, b.judgments);
  EXPECT_EQ(score_table_csv(compute_scores(a.judgments, plan)),
            score_table_csv(compute_scores(b.judgments, plan)));
}

TEST(Judgments, JsonRoundTrip) {
  auto j = judged(3, Emotion::Disgust, "a", "b");
  j.raw = "Most Disgust Example: a\nLeast Disgust Example: b";
  EXPECT_EQ(bws_judgment_from_json(to_json(j)), j);
  BwsJudgment bad;
  bad.tuple_index = 1;
  bad.emotion = Emotion::Surprise;
  bad.raw = "??";
  bad.failure_reason = "missing_line: nothing";
  bad.attempts = 2;
  EXPECT_EQ(bws_judgment_from_json(to_json(bad)), bad);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.25), "0.25");
  EXPECT_EQ(format_double(-1), "-1");
  EXPECT_EQ(format_double(1.0 / 3.0), "0.3333333333333333");
  EXPECT_EQ(format_double(4.5), "4.5");
}
