#include <gtest/gtest.h>

#include "bwsemo/errors.hpp"
#include "bwsemo/prompting.hpp"
#include "test_support.hpp"

using namespace bwsemo;
using testsupport::read_file;
using testsupport::record;

TEST(Placeholders, Validate) {
  EXPECT_EQ(validate_template("Sentence: <sentence|>"), std::set<std::string>{"sentence"});
  EXPECT_EQ(validate_template("no placeholders here"), std::set<std::string>{});
  try {
    validate_template("x <bogus|> y");
    FAIL();
  } catch (const TemplateError& e) {
    EXPECT_STREQ(e.what(), "unknown placeholder: bogus");
  }
}

TEST(Placeholders, BwsRankUsesAllFive) {
  EXPECT_EQ(builtin_templates().at("bws_rank").required_placeholders,
            (std::set<std::string>{"textid", "preceed", "sentence", "bdypart", "emo"}));
  EXPECT_EQ(builtin_templates().at("bws_rank").record_arity, 4u);
  EXPECT_EQ(builtin_templates().at("detect_base").record_arity, 1u);
}

TEST(Registry, Lookup) {
  const auto& reg = builtin_templates();
  ASSERT_NE(reg.find("detect_simple"), nullptr);
  EXPECT_NE(reg.at("detect_simple").body.find("Did emotion cause the body part’s movement/response?"),
            std::string::npos);
  EXPECT_NE(reg.at("bws_rank").body.find("You are an expert annotator specializing in emotion recognition"),
            std::string::npos);
  EXPECT_EQ(reg.find("nonexistent"), nullptr);
  EXPECT_THROW(reg.at("nonexistent"), TemplateError);
  EXPECT_EQ(reg.names().size(), 7u);
}

TEST(Registry, Classification) {
  EXPECT_TRUE(is_logit_detection_template("detect_base"));
  EXPECT_TRUE(is_logit_detection_template("detect_simple"));
  EXPECT_TRUE(is_cot_template("cot_3step"));
  EXPECT_FALSE(is_cot_template("bws_rank"));
  EXPECT_TRUE(builtin_templates().at("detect_base").is_bare_answer());
  EXPECT_TRUE(builtin_templates().at("classify_zeroshot").is_bare_answer());
  EXPECT_FALSE(builtin_templates().at("cot_2step").is_bare_answer());
}

TEST(Render, DetectSimpleEmptyContext) {
  auto r = record("x", "She clenched her fists.", "fists");
  RenderContext ctx;
  ctx.record = &r;
  std::string out = render(builtin_templates().at("detect_simple"), ctx);
  EXPECT_TRUE(out.ends_with("Body part: fists\nAnswer:"));
  EXPECT_NE(out.find("Preceding Context: \nSentence: She clenched her fists.\n"), std::string::npos);
}

TEST(Render, PrecedingJoinedBySpaces) {
  auto r = record("x", "s", "s", {"One.", "Two.", "Three."});
  RenderContext ctx;
  ctx.record = &r;
  auto tmpl = PromptTemplate::make("t", "<preceed|>|<sentence|>");
  EXPECT_EQ(render(tmpl, ctx), "One. Two. Three.|s");
}

TEST(Render, BwsRankFourRecordsAndFear) {
  std::vector<InstanceRecord> recs;
  for (int i = 1; i <= 4; ++i) recs.push_back(record(std::to_string(i * 10), "s" + std::to_string(i), "s"));
  RenderContext ctx;
  for (auto& r : recs) ctx.records.push_back(&r);
  ctx.emotion = Emotion::Fear;
  std::string out = render(builtin_templates().at("bws_rank"), ctx);
  EXPECT_NE(out.find("Most Fear Example:"), std::string::npos);
  EXPECT_NE(out.find("Least Fear Example:"), std::string::npos);
  auto a = out.find("Example: 10\n");
  auto b = out.find("Example: 20\n");
  auto c = out.find("Example: 30\n");
  auto d = out.find("Example: 40\n");
  ASSERT_NE(d, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_LT(c, d);
}

TEST(Render, Errors) {
  auto r = record("x", "s", "s");
  RenderContext ctx;
  ctx.record = &r;
  ctx.records = {&r};
  try {
    render(PromptTemplate::make("t", "<emo|> <sentence|>"), ctx);
    FAIL();
  } catch (const TemplateError& e) {
    EXPECT_NE(std::string(e.what()).find("emo"), std::string::npos);
  }
  EXPECT_THROW(render(builtin_templates().at("bws_rank"), RenderContext{&r, {&r, &r}, Emotion::Joy}),
               TemplateError);
  EXPECT_THROW(render(builtin_templates().at("detect_base"), RenderContext{}), TemplateError);
}

TEST(Render, PlaceholderTextInsideValuesIsNotExpanded) {
  auto r = record("x", "He typed <emo|> twice.", "He");
  RenderContext ctx;
  ctx.record = &r;
  ctx.emotion = Emotion::Joy;
  EXPECT_EQ(render(PromptTemplate::make("t", "<sentence|>/<emo|>"), ctx), "He typed <emo|> twice./Joy");
}

class GoldenRender : public ::testing::TestWithParam<std::string> {};

TEST_P(GoldenRender, ByteMatch) {
  auto ds = load_dataset(testsupport::data_dir() / "golden" / "records.jsonl", DatasetFormat::Jsonl, false);
  RenderContext ctx;
  ctx.record = &ds[0];
  for (std::size_t i = 0; i < 4; ++i) ctx.records.push_back(&ds[i]);
  ctx.emotion = Emotion::Fear;
  const auto& tmpl = builtin_templates().at(GetParam());
  if (tmpl.record_arity == 1) ctx.records.clear();
  std::string want = read_file(testsupport::data_dir() / "golden" / (GetParam() + ".txt"));
  EXPECT_EQ(render(tmpl, ctx), want);
}

INSTANTIATE_TEST_SUITE_P(Builtins, GoldenRender,
                         ::testing::Values("detect_base", "detect_simple", "cot_2step", "cot_3step",
                                           "cot_2step_simple", "classify_zeroshot", "bws_rank"));

TEST(Registry, ManifestAddsTemplatesAndRejectsBuiltinNames) {
  testsupport::TempDir dir;
  testsupport::write_text(dir / "mine.txt", "Sentence: <sentence|>\nAnswer:");
  testsupport::write_text(dir / "manifest.cfg", "# custom\nmine = mine.txt\n\n");
  auto reg = TemplateRegistry::builtin();
  reg.load_manifest(dir / "manifest.cfg");
  ASSERT_NE(reg.find("mine"), nullptr);
  EXPECT_TRUE(reg.at("mine").is_bare_answer());

  testsupport::write_text(dir / "bad.cfg", "detect_base = mine.txt\n");
  auto reg2 = TemplateRegistry::builtin();
  EXPECT_THROW(reg2.load_manifest(dir / "bad.cfg"), TemplateError);

  testsupport::write_text(dir / "bogus.txt", "<nope|>");
  testsupport::write_text(dir / "bogus.cfg", "bogus = bogus.txt\n");
  auto reg3 = TemplateRegistry::builtin();
  EXPECT_THROW(reg3.load_manifest(dir / "bogus.cfg"), TemplateError);
}
