#include "crisisfuse/templates.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse {

namespace fs = std::filesystem;

namespace {

bool is_name_start(char c) { return c >= 'a' && c <= 'z'; }
bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9') || c == '_'; }

/// Length of a `{name}` marker starting at text[i], or 0.
std::size_t marker_length(std::string_view text, std::size_t i) {
  if (text[i] != '{' || i + 2 >= text.size() || !is_name_start(text[i + 1])) return 0;
  std::size_t j = i + 1;
  while (j < text.size() && is_name_char(text[j])) ++j;
  if (j < text.size() && text[j] == '}') return j - i + 1;
  return 0;
}

std::string substitute(std::string_view text, const PromptTemplate& tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (auto len = marker_length(text, i)) {
      auto name = text.substr(i + 1, len - 2);
      if (tmpl.placeholders.contains(name)) {
        auto it = bindings.find(name);
        if (it == bindings.end()) {
          fail(ErrorKind::TemplateError, fmt::format("template '{}': placeholder {{{}}} is unbound", tmpl.id, name));
        }
        out += it->second;
        i += len;
        continue;
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

std::set<std::string, std::less<>> find_placeholders(std::string_view text) {
  std::set<std::string, std::less<>> names;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (auto len = marker_length(text, i)) names.emplace(text.substr(i + 1, len - 2));
  }
  return names;
}

RenderedPrompt PromptTemplate::render(const Bindings& bindings) const {
  for (const auto& name : placeholders) {
    if (!bindings.contains(name)) {
      fail(ErrorKind::TemplateError, fmt::format("template '{}': placeholder {{{}}} is unbound", id, name));
    }
  }
  return {substitute(system_text, *this, bindings), substitute(user_text, *this, bindings)};
}

std::string_view PromptTemplate::meta(std::string_view key, std::string_view fallback) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? fallback : std::string_view(it->second);
}

PromptTemplate parse_template(std::string_view source, std::string_view origin) {
  std::istringstream in{std::string(source)};
  std::string line;
  auto error = [&](const std::string& what) { fail(ErrorKind::TemplateError, fmt::format("{}: {}", origin, what)); };

  if (!std::getline(in, line) || text::trim(line) != "---") error("missing front matter");
  PromptTemplate tmpl;
  bool declared = false;
  bool closed = false;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t == "---") {
      closed = true;
      break;
    }
    if (t.empty() || t.front() == '#') continue;
    auto colon = t.find(':');
    if (colon == std::string::npos) error(fmt::format("bad front matter line '{}'", t));
    auto key = text::trim(t.substr(0, colon));
    auto value = text::trim(t.substr(colon + 1));
    if (key == "id") {
      tmpl.id = value;
    } else if (key == "placeholders") {
      declared = true;
      std::istringstream names(value);
      for (std::string name; std::getline(names, name, ',');) {
        auto n = text::trim(name);
        if (!n.empty()) tmpl.placeholders.insert(n);
      }
    } else {
      tmpl.metadata[key] = value;
    }
  }
  if (!closed) error("unterminated front matter");
  if (tmpl.id.empty()) error("front matter lacks an id");
  if (!declared) error("front matter lacks a placeholders line");

  std::string* section = nullptr;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "[system]") {
      section = &tmpl.system_text;
      continue;
    }
    if (line == "[user]") {
      section = &tmpl.user_text;
      continue;
    }
    if (section == nullptr) {
      if (text::trim(line).empty()) continue;
      error("text before the first [system] or [user] section");
    }
    *section += line;
    *section += '\n';
  }
  tmpl.system_text = strip_trailing_newlines(tmpl.system_text);
  tmpl.user_text = strip_trailing_newlines(tmpl.user_text);
  if (tmpl.user_text.empty()) error("template has no [user] text");

  auto used = find_placeholders(tmpl.system_text);
  used.merge(find_placeholders(tmpl.user_text));
  if (used != tmpl.placeholders) {
    std::string found;
    for (const auto& n : used) found += (found.empty() ? "" : ", ") + n;
    error(fmt::format("declared placeholders do not match the body (body uses: {})", found));
  }
  return tmpl;
}

TemplateLibrary TemplateLibrary::load(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    fail(ErrorKind::TemplateError, fmt::format("template directory {} does not exist", dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tmpl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  TemplateLibrary lib;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    lib.add(parse_template(ss.str(), f.string()));
  }
  return lib;
}

void TemplateLibrary::add(PromptTemplate tmpl) {
  auto id = tmpl.id;
  if (!templates_.emplace(id, std::move(tmpl)).second) {
    fail(ErrorKind::TemplateError, fmt::format("duplicate template id '{}'", id));
  }
}

const PromptTemplate& TemplateLibrary::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) fail(ErrorKind::TemplateError, fmt::format("no template with id '{}'", id));
  return it->second;
}

bool TemplateLibrary::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

std::vector<std::string> TemplateLibrary::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : templates_) out.push_back(id);
  return out;
}

}  // namespace crisisfuse
