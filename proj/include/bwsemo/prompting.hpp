#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "bwsemo/corpus.hpp"
#include "bwsemo/emotion.hpp"

namespace bwsemo {

/// Placeholder names understood by the renderer. Tokens are written `<name|>`.
inline const std::set<std::string>& placeholder_vocabulary() {
  static const std::set<std::string> vocab = {"sentence", "bdypart", "preceed", "textid", "emo"};
  return vocab;
}

/// Extracts the placeholder names used in `body`. Throws TemplateError
/// ("unknown placeholder: <name>") for a token outside the vocabulary.
std::set<std::string> validate_template(std::string_view body);

struct PromptTemplate {
  std::string name;
  std::string body;
  std::set<std::string> required_placeholders;
  /// Number of records the template consumes. Record placeholders that occur
  /// more than once are filled from successive records, in order.
  std::size_t record_arity = 0;

  /// Validates `body` and derives the placeholder set and arity.
  static PromptTemplate make(std::string name, std::string body);

  bool requires_emotion() const { return required_placeholders.count("emo") > 0; }
  /// Bare-answer templates end with "Answer:" and expect a one-token reply.
  bool is_bare_answer() const;
};

struct RenderContext {
  const InstanceRecord* record = nullptr;
  std::vector<const InstanceRecord*> records;
  std::optional<Emotion> emotion;
};

/// Fills every placeholder of `tmpl` from `ctx`. Preceding sentences are
/// joined with single spaces; no preceding context renders as "".
std::string render(const PromptTemplate& tmpl, const RenderContext& ctx);

/// Name -> template map. Builtin names are reserved; user templates may be
/// added from files.
class TemplateRegistry {
 public:
  static TemplateRegistry builtin();

  const PromptTemplate* find(std::string_view name) const;
  const PromptTemplate& at(std::string_view name) const;
  std::vector<std::string> names() const;

  void add(PromptTemplate tmpl);
  void add_file(const std::string& name, const std::filesystem::path& path);
  /// Manifest lines are `name = path`; lines starting with `#` are comments. Relative paths
  /// resolve against the manifest's directory.
  void load_manifest(const std::filesystem::path& manifest);

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// Returns the builtin registry (constructed once).
const TemplateRegistry& builtin_templates();

bool is_builtin_template(std::string_view name);
bool is_logit_detection_template(std::string_view name);
bool is_cot_template(std::string_view name);

}  // namespace bwsemo
