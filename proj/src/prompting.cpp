#include "bwsemo/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "bwsemo/errors.hpp"

namespace bwsemo {

namespace {

// Transcribed from the published prompt tables. Line breaks follow the
// typeset layout; trailing spaces are dropped.

constexpr std::string_view kDetectBase =
    R"(Please determine if a body part is involved in any embodied emotion. Specifically, a body part is involved in some embodied emotion if both conditions below are satisfied:
1) The physical movement or physiological arousal involving the body part is evoked by emotion.
2) The physical movement, if there is any, has no other purpose than emotion expression.
Answer "True" if the body part is involved in any embodied emotion, and "False" otherwise.

Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>
Answer:)";

constexpr std::string_view kDetectSimple =
    "Decide if a body part is used purely to express emotion. Ask:\n"
    "- Did emotion cause the body part’s movement/response?\n"
    "- Was the movement ONLY for expressing emotion (no other reason)?\n"
    "If both are true, say \"True.\" Else, say \"False.\"\n"
    "\n"
    "Preceding Context: <preceed|>\n"
    "Sentence: <sentence|>\n"
    "Body part: <bdypart|>\n"
    "Answer:";

constexpr std::string_view kCot2Step =
    R"(Please determine if a body part is involved in any embodied emotion.

First, answer Condition 1: Is the body part's movement/arousal caused by emotion?
Then, answer Condition 2: Does the movement lack non-emotional purposes?

If both of those conditions are true, answer "True." Otherwise, answer "False." Please reason step-by-step for your answer.
Here is the question:

Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>
)";

constexpr std::string_view kCot3Step =
    R"(Please determine if a body part is involved in any embodied emotion. Specifically, a body part is involved in some embodied emotion if both conditions below are satisfied: Before answering, reasoning step-by-step

1. Identify the body part mentioned.
2. Check if emotion directly caused its movement/arousal.
3. Verify if the movement has no functional purpose.

Only if all of the above are true, answer "True." Otherwise, answer "False."
Here is the question:

Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>
)";

constexpr std::string_view kCot2StepSimple =
    "Decide if a body part is used purely to express emotion. Ask:\n"
    "\n"
    "- Did emotion cause the body part’s movement/response?\n"
    "- Was the movement ONLY for expressing emotion (no other reason)?\n"
    "If both are true, say \"True.\" Else, say \"False.\" Before answering, give your reasoning "
    "step-by-step.\n"
    "\n"
    "Preceding Context: <preceed|>\n"
    "Sentence: <sentence|>\n"
    "Body part: <bdypart|>\n";

constexpr std::string_view kClassifyZeroShot =
    R"(Classify the emotion expressed by the body part in a sentence into one of six categories: "Joy", "Sadness", "Anger", "Fear", "Surprise", or "Disgust".

Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>
Answer:)";

constexpr std::string_view kBwsRank =
    R"(You are an expert annotator specializing in emotion recognition. Rank the following examples based on how much <emo|> the specified body part exudes in the text.

Instructions:
- Use only the Preceding Text for context.
- Identify which example conveys the MOST <emo|> and which conveys the LEAST <emo|> based on the body part mentioned.
- Do not repeat the text. Only provide the Example numbers in the specified format.

Example: <textid|>
Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>

Example: <textid|>
Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>

Example: <textid|>
Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>

Example: <textid|>
Preceding Context: <preceed|>
Sentence: <sentence|>
Body part: <bdypart|>

Format your response as:
Most <emo|> Example:
Least <emo|> Example:
)";

struct Token {
  std::size_t pos;
  std::size_t len;
  std::string name;
};

std::vector<Token> scan_tokens(std::string_view body) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while ((i = body.find('<', i)) != std::string_view::npos) {
    std::size_t j = i + 1;
    while (j < body.size() &&
           (std::isalnum(static_cast<unsigned char>(body[j])) || body[j] == '_')) {
      ++j;
    }
    if (j > i + 1 && j + 1 < body.size() && body[j] == '|' && body[j + 1] == '>') {
      tokens.push_back({i, j + 2 - i, std::string(body.substr(i + 1, j - i - 1))});
      i = j + 2;
    } else {
      ++i;
    }
  }
  return tokens;
}

bool is_record_placeholder(const std::string& name) { return name != "emo"; }

std::string join_preceding(const std::vector<std::string>& preceding) {
  std::string out;
  for (std::size_t i = 0; i < preceding.size(); ++i) {
    if (i) out.push_back(' ');
    out += preceding[i];
  }
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::set<std::string> validate_template(std::string_view body) {
  std::set<std::string> names;
  for (const auto& t : scan_tokens(body)) {
    if (!placeholder_vocabulary().count(t.name)) {
      throw TemplateError("unknown placeholder: " + t.name);
    }
    names.insert(t.name);
  }
  return names;
}

PromptTemplate PromptTemplate::make(std::string name, std::string body) {
  PromptTemplate t;
  t.required_placeholders = validate_template(body);
  std::map<std::string, std::size_t> occurrences;
  for (const auto& tok : scan_tokens(body)) {
    if (is_record_placeholder(tok.name)) ++occurrences[tok.name];
  }
  for (const auto& [n, count] : occurrences) t.record_arity = std::max(t.record_arity, count);
  t.name = std::move(name);
  t.body = std::move(body);
  return t;
}

bool PromptTemplate::is_bare_answer() const {
  std::string_view b = body;
  while (!b.empty() && std::isspace(static_cast<unsigned char>(b.back()))) b.remove_suffix(1);
  return b.ends_with("Answer:");
}

std::string render(const PromptTemplate& tmpl, const RenderContext& ctx) {
  std::vector<const InstanceRecord*> records;
  if (tmpl.record_arity > 1) {
    if (ctx.records.size() != tmpl.record_arity) {
      throw TemplateError("template '" + tmpl.name + "' needs " +
                          std::to_string(tmpl.record_arity) + " records, got " +
                          std::to_string(ctx.records.size()));
    }
    records = ctx.records;
  } else if (tmpl.record_arity == 1) {
    if (ctx.record) {
      records.push_back(ctx.record);
    } else if (ctx.records.size() == 1) {
      records.push_back(ctx.records.front());
    } else if (ctx.records.size() > 1) {
      throw TemplateError("template '" + tmpl.name + "' needs 1 record, got " +
                          std::to_string(ctx.records.size()));
    }
  }

  std::string out;
  out.reserve(tmpl.body.size() * 2);
  std::map<std::string, std::size_t> seen;
  std::size_t cursor = 0;
  for (const auto& tok : scan_tokens(tmpl.body)) {
    out.append(tmpl.body, cursor, tok.pos - cursor);
    cursor = tok.pos + tok.len;
    if (tok.name == "emo") {
      if (!ctx.emotion) throw TemplateError("missing value for placeholder: emo");
      out += to_string(*ctx.emotion);
      continue;
    }
    std::size_t k = seen[tok.name]++;
    if (k >= records.size() || records[k] == nullptr) {
      throw TemplateError("missing value for placeholder: " + tok.name);
    }
    const InstanceRecord& r = *records[k];
    if (tok.name == "sentence") {
      out += r.sentence;
    } else if (tok.name == "bdypart") {
      out += r.body_part;
    } else if (tok.name == "preceed") {
      out += join_preceding(r.preceding);
    } else if (tok.name == "textid") {
      out += r.id;
    } else {
      throw TemplateError("unknown placeholder: " + tok.name);
    }
  }
  out.append(tmpl.body, cursor, std::string::npos);
  return out;
}

TemplateRegistry TemplateRegistry::builtin() {
  TemplateRegistry reg;
  auto put = [&](std::string name, std::string_view body) {
    reg.templates_.emplace(name, PromptTemplate::make(name, std::string(body)));
  };
  put("detect_base", kDetectBase);
  put("detect_simple", kDetectSimple);
  put("cot_2step", kCot2Step);
  put("cot_3step", kCot3Step);
  put("cot_2step_simple", kCot2StepSimple);
  put("classify_zeroshot", kClassifyZeroShot);
  put("bws_rank", kBwsRank);
  return reg;
}

const PromptTemplate* TemplateRegistry::find(std::string_view name) const {
  auto it = templates_.find(name);
  return it == templates_.end() ? nullptr : &it->second;
}

const PromptTemplate& TemplateRegistry::at(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw TemplateError("unknown template: " + std::string(name));
}

std::vector<std::string> TemplateRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : templates_) out.push_back(name);
  return out;
}

void TemplateRegistry::add(PromptTemplate tmpl) {
  if (is_builtin_template(tmpl.name)) {
    throw TemplateError("template name '" + tmpl.name + "' is reserved for a builtin");
  }
  if (templates_.count(tmpl.name)) throw TemplateError("duplicate template '" + tmpl.name + "'");
  std::string name = tmpl.name;
  templates_.emplace(std::move(name), std::move(tmpl));
}

void TemplateRegistry::add_file(const std::string& name, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TemplateError("cannot read template file '" + path.string() + "'");
  std::ostringstream body;
  body << in.rdbuf();
  add(PromptTemplate::make(name, body.str()));
}

void TemplateRegistry::load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw TemplateError("cannot read template manifest '" + manifest.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw TemplateError(manifest.string() + ":" + std::to_string(lineno) +
                          ": expected 'name = path'");
    }
    std::string name = trim(line.substr(0, eq));
    std::filesystem::path path = trim(line.substr(eq + 1));
    if (path.is_relative()) path = manifest.parent_path() / path;
    add_file(name, path);
  }
}

const TemplateRegistry& builtin_templates() {
  static const TemplateRegistry reg = TemplateRegistry::builtin();
  return reg;
}

bool is_builtin_template(std::string_view name) {
  static constexpr std::string_view kNames[] = {"detect_base",      "detect_simple",
                                                "cot_2step",        "cot_3step",
                                                "cot_2step_simple", "classify_zeroshot",
                                                "bws_rank"};
  return std::find(std::begin(kNames), std::end(kNames), name) != std::end(kNames);
}

bool is_logit_detection_template(std::string_view name) {
  return name == "detect_base" || name == "detect_simple";
}

bool is_cot_template(std::string_view name) {
  return name == "cot_2step" || name == "cot_3step" || name == "cot_2step_simple";
}

}  // namespace bwsemo
