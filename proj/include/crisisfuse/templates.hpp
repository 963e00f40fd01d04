#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace crisisfuse {

struct RenderedPrompt {
  std::string system;
  std::string user;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// A prompt asset: front matter (id, placeholders, free-form metadata)
/// followed by `[system]` and `[user]` sections. Placeholders are `{name}`
/// with name in [a-z][a-z0-9_]*.
struct PromptTemplate {
  std::string id;
  std::set<std::string, std::less<>> placeholders;
  std::map<std::string, std::string, std::less<>> metadata;
  std::string system_text;
  std::string user_text;

  /// Substitutes every placeholder in one pass; substituted values are not
  /// rescanned. Throws TemplateError for an unbound placeholder.
  RenderedPrompt render(const Bindings& bindings) const;
  std::string_view meta(std::string_view key, std::string_view fallback = {}) const;
};

/// Sorted set of `{name}` markers found in `text`.
std::set<std::string, std::less<>> find_placeholders(std::string_view text);

/// Parses the asset format; `origin` is used in error messages.
PromptTemplate parse_template(std::string_view source, std::string_view origin = "<memory>");

class TemplateLibrary {
 public:
  TemplateLibrary() = default;

  /// Loads every *.tmpl under `dir` recursively.
  static TemplateLibrary load(const std::filesystem::path& dir);

  void add(PromptTemplate tmpl);
  const PromptTemplate& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

}  // namespace crisisfuse
