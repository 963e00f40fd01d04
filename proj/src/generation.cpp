#include "crisisfuse/generation.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse {

std::string_view to_string(Detailedness v) noexcept {
  switch (v) {
    case Detailedness::vague: return "vague";
    case Detailedness::medium: return "medium";
    case Detailedness::specific: return "specific";
  }
  return "vague";
}

std::string_view to_string(Sentiment v) noexcept { return v == Sentiment::neutral ? "neutral" : "emotional"; }
std::string_view to_string(Formality v) noexcept { return v == Formality::casual ? "casual" : "formal"; }

Detailedness parse_detailedness(std::string_view s) {
  if (s == "vague") return Detailedness::vague;
  if (s == "medium") return Detailedness::medium;
  if (s == "specific") return Detailedness::specific;
  fail(ErrorKind::InvalidArgument, fmt::format("detailedness '{}' not in {{vague, medium, specific}}", s));
}

Sentiment parse_sentiment(std::string_view s) {
  if (s == "neutral") return Sentiment::neutral;
  if (s == "emotional") return Sentiment::emotional;
  fail(ErrorKind::InvalidArgument, fmt::format("sentiment '{}' not in {{neutral, emotional}}", s));
}

Formality parse_formality(std::string_view s) {
  if (s == "casual") return Formality::casual;
  if (s == "formal") return Formality::formal;
  fail(ErrorKind::InvalidArgument, fmt::format("formality '{}' not in {{casual, formal}}", s));
}

void NeedQuery::validate() const {
  if (text::trim(text).empty()) fail(ErrorKind::InvalidArgument, fmt::format("need '{}' has empty text", id));
}

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::instructional_prompt: return "instructional_prompt";
    case Strategy::rag: return "rag";
    case Strategy::rag_pe: return "rag_pe";
    case Strategy::few_shot: return "few_shot";
    case Strategy::fused: return "fused";
  }
  return "fused";
}

Strategy parse_strategy(std::string_view s) {
  for (auto v : {Strategy::instructional_prompt, Strategy::rag, Strategy::rag_pe, Strategy::few_shot, Strategy::fused}) {
    if (s == to_string(v)) return v;
  }
  fail(ErrorKind::InvalidArgument, fmt::format("unknown strategy '{}'", s));
}

// ---------------------------------------------------------------------------
// Exemplars

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, fmt::format("cannot read exemplars {}", path.string()));
  std::vector<Exemplar> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.value("need_category", ""), j.at("need").get<std::string>(), j.at("response").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::IoError, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

std::string render_exemplars(std::span<const Exemplar> exemplars) {
  std::string out;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    if (i) out += "\n\n";
    out += fmt::format("Example {}\nTweet: {}\nResponse: {}", i + 1, exemplars[i].need, exemplars[i].response);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Refusals

namespace {

std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    // U+2019 RIGHT SINGLE QUOTATION MARK
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
        static_cast<unsigned char>(s[i + 2]) == 0x99) {
      out.push_back('\'');
      i += 2;
      continue;
    }
    out.push_back(s[i]);
  }
  return text::to_lower_ascii(out);
}

std::string strip_reply(std::string_view s) {
  auto t = text::trim(fold(s));
  auto is_edge = [](char c) { return c == '.' || c == '!' || c == '?' || c == '"' || c == '\'' || c == ' '; };
  while (!t.empty() && is_edge(t.back())) t.pop_back();
  std::size_t start = 0;
  while (start < t.size() && (t[start] == '"' || t[start] == '\'')) ++start;
  return t.substr(start);
}

}  // namespace

RefusalDetector::RefusalDetector(std::vector<RefusalPattern> patterns) : patterns_(std::move(patterns)) {}

RefusalDetector RefusalDetector::defaults() {
  return RefusalDetector({{RefusalPattern::Match::contains, "I can't assist"},
                          {RefusalPattern::Match::contains, "I cannot help"},
                          {RefusalPattern::Match::contains, "I won't provide"},
                          {RefusalPattern::Match::exact, "I don't know"}});
}

RefusalDetector RefusalDetector::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, fmt::format("cannot read refusal patterns {}", path.string()));
  std::vector<RefusalPattern> patterns;
  for (std::string line; std::getline(in, line);) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto colon = t.find(':');
    auto kind = colon == std::string::npos ? std::string() : text::trim(t.substr(0, colon));
    if (kind != "contains" && kind != "exact") {
      fail(ErrorKind::ConfigError, fmt::format("{}: bad refusal pattern line '{}'", path.string(), t));
    }
    patterns.push_back({kind == "exact" ? RefusalPattern::Match::exact : RefusalPattern::Match::contains,
                        text::trim(t.substr(colon + 1))});
  }
  return RefusalDetector(std::move(patterns));
}

bool RefusalDetector::matches(std::string_view reply) const {
  auto folded = fold(reply);
  auto stripped = strip_reply(reply);
  for (const auto& p : patterns_) {
    if (p.match == RefusalPattern::Match::contains) {
      if (folded.find(fold(p.text)) != std::string::npos) return true;
    } else if (stripped == strip_reply(p.text)) {
      return true;
    }
  }
  return false;
}

bool detect_refusal(std::string_view reply, const RefusalDetector& detector) { return detector.matches(reply); }

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(ChatProvider& provider, const TemplateLibrary& templates, DecodingParams decoding,
                     RefusalDetector refusal)
    : provider_(provider), templates_(templates), decoding_(decoding), refusal_(std::move(refusal)) {
  decoding_.validate();
}

RenderedPrompt Generator::render_ip(const NeedQuery& need) const {
  need.validate();
  return templates_.get("instructional_prompt").render({{"event", need.event}, {"need", need.text}});
}

RenderedPrompt Generator::render_rag(const NeedQuery& need, const std::string& context, bool prompt_engineered) const {
  need.validate();
  return templates_.get(prompt_engineered ? "rag_pe" : "rag")
      .render({{"event", need.event}, {"need", need.text}, {"context", context}});
}

RenderedPrompt Generator::render_fewshot(const NeedQuery& need, std::span<const Exemplar> exemplars) const {
  need.validate();
  if (exemplars.empty()) fail(ErrorKind::InvalidArgument, "few-shot generation needs at least one exemplar");
  return templates_.get("few_shot").render(
      {{"event", need.event}, {"need", need.text}, {"exemplars", render_exemplars(exemplars)}});
}

CandidateResponse Generator::run(const RenderedPrompt& prompt, Strategy strategy, std::vector<ChunkId> chunk_ids) {
  auto reply = provider_.complete(provider_.make_request(prompt.system, prompt.user, decoding_));
  CandidateResponse c;
  c.text = text::trim(reply.text);
  c.strategy = strategy;
  c.decoding = decoding_;
  c.retrieved_chunk_ids = std::move(chunk_ids);
  c.refusal = refusal_.matches(c.text);
  return c;
}

CandidateResponse Generator::generate_ip(const NeedQuery& need) {
  return run(render_ip(need), Strategy::instructional_prompt, {});
}

CandidateResponse Generator::generate_retrieval(const NeedQuery& need, const HybridRetriever& retriever,
                                                std::size_t top_n, bool prompt_engineered) {
  need.validate();
  auto hits = retriever.hybrid(need.text, top_n);
  if (hits.empty()) fail(ErrorKind::EmptyCorpus, "retrieval returned no chunks");
  std::vector<ChunkId> ids;
  ids.reserve(hits.size());
  for (const auto& h : hits) ids.push_back(h.chunk_id);
  auto context = build_context(hits, retriever.corpus());
  return run(render_rag(need, context, prompt_engineered), prompt_engineered ? Strategy::rag_pe : Strategy::rag,
             std::move(ids));
}

CandidateResponse Generator::generate_rag(const NeedQuery& need, const HybridRetriever& retriever, std::size_t top_n) {
  return generate_retrieval(need, retriever, top_n, false);
}

CandidateResponse Generator::generate_rag_pe(const NeedQuery& need, const HybridRetriever& retriever,
                                             std::size_t top_n) {
  return generate_retrieval(need, retriever, top_n, true);
}

CandidateResponse Generator::generate_fewshot(const NeedQuery& need, std::span<const Exemplar> exemplars) {
  return run(render_fewshot(need, exemplars), Strategy::few_shot, {});
}

}  // namespace crisisfuse
