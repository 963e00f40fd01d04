#include "crisisfuse/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

#include "crisisfuse/digest.hpp"
#include "crisisfuse/error.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset

namespace {

template <class T, class Parse>
std::optional<T> optional_tag(const json& j, const char* key, Parse parse) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return parse(j[key].get<std::string>());
}

}  // namespace

DatasetRecord parse_dataset_record(const json& j, std::string_view default_event) {
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, "record is not a JSON object");
  if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer())) {
    fail(ErrorKind::InvalidArgument, "missing id");
  }
  if (!j.contains("text") || !j["text"].is_string()) fail(ErrorKind::InvalidArgument, "missing text");

  DatasetRecord r;
  r.need.id = j["id"].is_string() ? j["id"].get<std::string>() : std::to_string(j["id"].get<long long>());
  if (text::trim(r.need.id).empty()) fail(ErrorKind::InvalidArgument, "empty id");
  r.need.text = j["text"].get<std::string>();
  r.need.event = j.contains("event") && j["event"].is_string() ? j["event"].get<std::string>()
                                                                : std::string(default_event);
  if (j.contains("need_category") && j["need_category"].is_string()) {
    r.need.tags.need_category = j["need_category"].get<std::string>();
  }
  r.need.tags.detailedness = optional_tag<Detailedness>(j, "detailedness", parse_detailedness);
  r.need.tags.sentiment = optional_tag<Sentiment>(j, "sentiment", parse_sentiment);
  r.need.tags.formality = optional_tag<Formality>(j, "formality", parse_formality);
  if (j.contains("gold_need") && !j["gold_need"].is_null()) {
    if (!j["gold_need"].is_boolean()) fail(ErrorKind::InvalidArgument, "gold_need must be a boolean");
    r.gold_need = j["gold_need"].get<bool>();
  }
  r.need.validate();
  return r;
}

json to_json(const DatasetRecord& r) {
  json j{{"id", r.need.id}, {"text", r.need.text}, {"event", r.need.event}};
  if (!r.need.tags.need_category.empty()) j["need_category"] = r.need.tags.need_category;
  if (r.need.tags.detailedness) j["detailedness"] = to_string(*r.need.tags.detailedness);
  if (r.need.tags.sentiment) j["sentiment"] = to_string(*r.need.tags.sentiment);
  if (r.need.tags.formality) j["formality"] = to_string(*r.need.tags.formality);
  if (r.gold_need) j["gold_need"] = *r.gold_need;
  return j;
}

Dataset load_dataset(const std::filesystem::path& path, std::string_view default_event) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, fmt::format("cannot read dataset {}", path.string()));
  Dataset ds;
  std::set<std::string> seen;
  std::size_t line_no = 0, nonblank = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ++nonblank;
    DatasetRecord rec;
    try {
      rec = parse_dataset_record(json::parse(line), default_event);
    } catch (const std::exception& e) {
      ds.rejects.push_back({line_no, e.what(), line});
      continue;
    }
    if (!seen.insert(rec.need.id).second) {
      fail(ErrorKind::DatasetError, fmt::format("{}:{}: duplicate id '{}'", path.string(), line_no, rec.need.id));
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.rejects.size() * 10 > nonblank) {
    fail(ErrorKind::DatasetError, fmt::format("{}: {} of {} lines malformed (limit 10%)", path.string(),
                                              ds.rejects.size(), nonblank));
  }
  for (const auto& r : ds.rejects) spdlog::warn("{}:{}: rejected: {}", path.string(), r.line, r.reason);
  return ds;
}

// ---------------------------------------------------------------------------
// Need gating

bool ensemble_detect(const DatasetRecord& record, std::span<const NeedClassifier> classifiers) {
  if (classifiers.size() != 3) {
    fail(ErrorKind::InvalidArgument, fmt::format("need gating takes exactly 3 classifiers, got {}", classifiers.size()));
  }
  bool all = true;
  for (std::size_t i = 0; i < classifiers.size(); ++i) {
    bool vote = false;
    try {
      vote = classifiers[i](record);
    } catch (const std::exception& e) {
      fail(ErrorKind::DetectorError, fmt::format("classifier {} failed on '{}': {}", i + 1, record.need.id, e.what()));
    }
    all = all && vote;
  }
  return all;
}

NeedClassifier keyword_classifier() {
  static const std::set<std::string, std::less<>> cues{
      "help",    "need",     "needs",     "needed",   "where",    "how",     "anyone",  "please", "shelter",
      "shelters", "food",    "water",     "rescue",   "evacuate", "evacuation", "trapped", "stranded", "supplies",
      "medicine", "medical", "insulin",   "generator", "donate",  "volunteer", "open",   "missing"};
  return [](const DatasetRecord& r) {
    if (r.need.text.find('?') != std::string::npos) return true;
    for (const auto& t : text::tokenize(r.need.text)) {
      if (cues.contains(t)) return true;
    }
    return false;
  };
}

NeedClassifier gold_classifier() {
  return [](const DatasetRecord& r) {
    if (!r.gold_need) fail(ErrorKind::DetectorError, fmt::format("record '{}' has no gold_need", r.need.id));
    return *r.gold_need;
  };
}

NeedClassifier command_classifier(std::string command) {
  return [command = std::move(command)](const DatasetRecord& r) {
    static std::atomic<unsigned> counter{0};
    auto tmp = std::filesystem::temp_directory_path() /
               fmt::format("crisisfuse-detect-{}-{}.json", ::getpid(), counter.fetch_add(1));
    {
      std::ofstream out(tmp);
      out << to_json(r).dump() << '\n';
    }
    std::string shell = fmt::format("({}) < '{}'", command, tmp.string());
    std::string output;
    FILE* pipe = ::popen(shell.c_str(), "r");
    if (!pipe) {
      std::filesystem::remove(tmp);
      fail(ErrorKind::DetectorError, fmt::format("cannot start '{}'", command));
    }
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe)) output += buf;
    int status = ::pclose(pipe);
    std::filesystem::remove(tmp);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      fail(ErrorKind::DetectorError, fmt::format("'{}' exited with status {}", command, status));
    }
    auto answer = text::to_lower_ascii(text::trim(output));
    if (answer == "true" || answer == "1" || answer == "yes") return true;
    if (answer == "false" || answer == "0" || answer == "no") return false;
    fail(ErrorKind::DetectorError, fmt::format("'{}' printed '{}', expected true or false", command, answer));
  };
}

NeedClassifier make_classifier(std::string_view spec) {
  if (spec == "keyword") return keyword_classifier();
  if (spec == "gold") return gold_classifier();
  if (spec.starts_with("command:") && spec.size() > 8) return command_classifier(std::string(spec.substr(8)));
  fail(ErrorKind::ConfigError, fmt::format("unknown classifier '{}' (keyword, gold, command:<cmd>)", spec));
}

// ---------------------------------------------------------------------------
// Methods

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::instructional_prompt: return "instructional_prompt";
    case Method::rag: return "rag";
    case Method::rag_pe: return "rag_pe";
    case Method::few_shot: return "few_shot";
    case Method::prompt_and_select: return "prompt_and_select";
    case Method::fuse_plain: return "fuse_plain";
    case Method::fuse_eval: return "fuse_eval";
    case Method::fuse_eval_instruct: return "fuse_eval_instruct";
    case Method::fuse_eval_weight: return "fuse_eval_weight";
  }
  return "instructional_prompt";
}

std::vector<Method> all_methods() {
  return {Method::instructional_prompt, Method::rag,       Method::rag_pe,
          Method::few_shot,             Method::prompt_and_select, Method::fuse_plain,
          Method::fuse_eval,            Method::fuse_eval_instruct, Method::fuse_eval_weight};
}

Method parse_method(std::string_view s) {
  for (auto m : all_methods()) {
    if (s == to_string(m)) return m;
  }
  fail(ErrorKind::InvalidArgument, fmt::format("unknown method '{}'", s));
}

std::optional<FusionMethod> fusion_method(Method m) noexcept {
  switch (m) {
    case Method::prompt_and_select: return FusionMethod::prompt_and_select;
    case Method::fuse_plain: return FusionMethod::fuse_plain;
    case Method::fuse_eval: return FusionMethod::fuse_eval;
    case Method::fuse_eval_instruct: return FusionMethod::fuse_eval_instruct;
    case Method::fuse_eval_weight: return FusionMethod::fuse_eval_weight;
    default: return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Result rows

namespace {

json scores_json(const ScoreVector& s) {
  return {{"professionalism", s.professionalism}, {"actionability", s.actionability}, {"relevance", s.relevance}};
}

ScoreVector scores_from_json(const json& j) {
  return {j.at("professionalism").get<double>(), j.at("actionability").get<double>(), j.at("relevance").get<double>()};
}

json tags_json(const NeedTags& t) {
  auto opt = [](const auto& v) { return v ? json(std::string(to_string(*v))) : json(nullptr); };
  return {{"need_category", t.need_category},
          {"detailedness", opt(t.detailedness)},
          {"sentiment", opt(t.sentiment)},
          {"formality", opt(t.formality)}};
}

NeedTags tags_from_json(const json& j) {
  NeedTags t;
  t.need_category = j.value("need_category", "");
  t.detailedness = optional_tag<Detailedness>(j, "detailedness", parse_detailedness);
  t.sentiment = optional_tag<Sentiment>(j, "sentiment", parse_sentiment);
  t.formality = optional_tag<Formality>(j, "formality", parse_formality);
  return t;
}

}  // namespace

json to_json(const ResultRow& row) {
  json trace = json::array();
  for (const auto& t : row.trace) {
    trace.push_back({{"iteration", t.iteration}, {"scores", scores_json(t.scores)}, {"response", t.response_digest}});
  }
  return {{"need_id", row.need_id},
          {"method", to_string(row.method)},
          {"status", row.status},
          {"error", row.error},
          {"strategy", to_string(row.strategy)},
          {"scores", scores_json(row.scores)},
          {"raw", {{"professionalism", row.raw_professionalism}, {"actionability", row.raw_actionability}}},
          {"judge_attempts", row.judge_attempts},
          {"refusal", row.refusal},
          {"trace", trace},
          {"artifacts", row.artifacts},
          {"tags", tags_json(row.tags)}};
}

ResultRow result_row_from_json(const json& j) {
  ResultRow r;
  r.need_id = j.at("need_id").get<std::string>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", "");
  r.strategy = parse_strategy(j.at("strategy").get<std::string>());
  r.scores = scores_from_json(j.at("scores"));
  r.raw_professionalism = j.at("raw").at("professionalism").get<int>();
  r.raw_actionability = j.at("raw").at("actionability").get<int>();
  r.judge_attempts = j.value("judge_attempts", 0);
  r.refusal = j.value("refusal", false);
  for (const auto& t : j.value("trace", json::array())) {
    r.trace.push_back({t.at("iteration").get<int>(), scores_from_json(t.at("scores")), t.at("response").get<std::string>()});
  }
  r.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
  r.tags = tags_from_json(j.value("tags", json::object()));
  return r;
}

void write_results(const std::filesystem::path& path, std::span<const ResultRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, fmt::format("cannot write {}", path.string()));
  for (const auto& r : rows) out << to_json(r).dump() << '\n';
  if (!out) fail(ErrorKind::IoError, fmt::format("write to {} failed", path.string()));
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, fmt::format("cannot read results {}", path.string()));
  std::vector<ResultRow> rows;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      rows.push_back(result_row_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      fail(ErrorKind::IoError, fmt::format("{}:{}: bad result row: {}", path.string(), line_no, e.what()));
    }
  }
  return rows;
}

ArtifactStore::ArtifactStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) fail(ErrorKind::IoError, fmt::format("cannot create {}: {}", dir_.string(), ec.message()));
}

std::string ArtifactStore::put(const std::string& content) {
  auto digest = sha256_hex(content);
  if (dir_.empty()) return digest;
  auto path = dir_ / (digest + ".txt");
  std::lock_guard lock(mutex_);
  if (std::filesystem::exists(path)) return digest;
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << content;
    if (!out) fail(ErrorKind::IoError, fmt::format("cannot write artifact {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
  return digest;
}

std::optional<std::string> ArtifactStore::get(const std::string& digest) const {
  if (dir_.empty()) return std::nullopt;
  std::ifstream in(dir_ / (digest + ".txt"), std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool ArtifactStore::contains(const std::string& digest) const {
  return !dir_.empty() && std::filesystem::exists(dir_ / (digest + ".txt"));
}

// ---------------------------------------------------------------------------
// Manifest

json RunManifest::to_json() const {
  json methods_json = json::array();
  for (auto m : methods) methods_json.push_back(to_string(m));
  return {{"dataset", dataset},
          {"event", event},
          {"methods", methods_json},
          {"weights", {weights.professionalism, weights.actionability, weights.relevance}},
          {"max_iter", max_iter},
          {"provider_digest", provider_digest},
          {"mode", mode},
          {"settings", settings}};
}

std::string RunManifest::digest() const { return sha256_hex(to_json().dump()); }
std::string RunManifest::run_id() const { return digest().substr(0, 16); }

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct Scored {
  CandidateResponse candidate;
  EvaluationRecord eval;
  std::string digest;
};

class RecordRun {
 public:
  RecordRun(const DatasetRecord& record, const PipelineContext& ctx, const PipelineOptions& opt)
      : record_(record), ctx_(ctx), opt_(opt) {}

  ResultRow run(Method method) {
    ResultRow row;
    row.need_id = record_.need.id;
    row.method = method;
    row.tags = record_.need.tags;
    try {
      if (auto fm = fusion_method(method)) {
        run_fusion(*fm, row);
      } else {
        const auto& s = candidate(base_strategy(method));
        fill(row, s.candidate, s.eval, s.digest);
      }
    } catch (const std::exception& e) {
      row.status = "failed";
      row.error = e.what();
      row.trace.clear();
      spdlog::warn("need {} method {} failed: {}", record_.need.id, to_string(method), e.what());
    }
    return row;
  }

 private:
  static Strategy base_strategy(Method m) {
    switch (m) {
      case Method::rag: return Strategy::rag;
      case Method::rag_pe: return Strategy::rag_pe;
      case Method::few_shot: return Strategy::few_shot;
      default: return Strategy::instructional_prompt;
    }
  }

  const HybridRetriever& retriever() const {
    if (!ctx_.retriever) fail(ErrorKind::IndexNotReady, "this method needs a knowledge-base index");
    return *ctx_.retriever;
  }

  std::string store(const std::string& content) {
    return ctx_.artifacts ? ctx_.artifacts->put(content) : sha256_hex(content);
  }

  const Scored& candidate(Strategy s) {
    if (auto it = errors_.find(s); it != errors_.end()) std::rethrow_exception(it->second);
    if (auto it = cache_.find(s); it != cache_.end()) return it->second;
    try {
      const auto& need = record_.need;
      CandidateResponse c;
      switch (s) {
        case Strategy::instructional_prompt: c = ctx_.generator.generate_ip(need); break;
        case Strategy::rag: c = ctx_.generator.generate_rag(need, retriever(), opt_.top_n); break;
        case Strategy::rag_pe: c = ctx_.generator.generate_rag_pe(need, retriever(), opt_.top_n); break;
        case Strategy::few_shot: c = ctx_.generator.generate_fewshot(need, ctx_.exemplars); break;
        case Strategy::fused: fail(ErrorKind::InvalidArgument, "fused is not a base strategy");
      }
      auto eval = ctx_.evaluator.evaluate(need.text, c.text);
      auto digest = store(c.text);
      return cache_.emplace(s, Scored{std::move(c), std::move(eval), std::move(digest)}).first->second;
    } catch (...) {
      errors_.emplace(s, std::current_exception());
      throw;
    }
  }

  static void fill(ResultRow& row, const CandidateResponse& c, const EvaluationRecord& e, const std::string& digest) {
    row.strategy = c.strategy;
    row.scores = e.scores;
    row.raw_professionalism = e.professionalism.score.raw;
    row.raw_actionability = e.actionability.score.raw;
    row.judge_attempts = e.professionalism.attempts + e.actionability.attempts;
    row.refusal = c.refusal;
    row.artifacts["response"] = digest;
  }

  void run_fusion(FusionMethod fm, ResultRow& row) {
    const auto& ip = candidate(Strategy::instructional_prompt);
    const auto& rag = candidate(Strategy::rag);
    row.artifacts["ip"] = ip.digest;
    row.artifacts["rag"] = rag.digest;

    if (fm == FusionMethod::prompt_and_select) {
      auto chosen = ctx_.fuser.prompt_and_select({ip.candidate, rag.candidate, ip.eval.scores, rag.eval.scores, opt_.weights});
      const auto& src = chosen.text == ip.candidate.text ? ip : rag;
      fill(row, src.candidate, src.eval, src.digest);
      return;
    }

    EvaluationRecord last;
    auto scorer = [&](const CandidateResponse& c) {
      last = ctx_.evaluator.evaluate(record_.need.text, c.text);
      return last.scores;
    };
    auto trace = iterative_fuse(record_.need, ip.candidate, ip.eval.scores, rag.candidate, rag.eval.scores, fm,
                                opt_.weights, ctx_.fuser, scorer, opt_.schedule);
    for (const auto& step : trace.steps) row.trace.push_back({step.iteration, step.scores, store(step.candidate.text)});
    fill(row, trace.steps.back().candidate, last, row.trace.back().response_digest);
  }

  const DatasetRecord& record_;
  const PipelineContext& ctx_;
  const PipelineOptions& opt_;
  std::map<Strategy, Scored> cache_;
  std::map<Strategy, std::exception_ptr> errors_;
};

}  // namespace

PipelineResult run_pipeline(std::span<const DatasetRecord> records, const PipelineContext& ctx,
                            const PipelineOptions& options) {
  if (options.methods.empty()) fail(ErrorKind::InvalidArgument, "no methods selected");
  if (options.parallelism < 1) fail(ErrorKind::InvalidArgument, "parallelism must be >= 1");
  options.weights.validate();

  std::vector<std::vector<ResultRow>> per_record(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
      RecordRun run(records[i], ctx, options);
      for (auto m : options.methods) per_record[i].push_back(run.run(m));
    }
  };
  std::size_t n_threads = std::min(options.parallelism, std::max<std::size_t>(records.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  PipelineResult result;
  for (auto& rows : per_record) {
    for (auto& r : rows) {
      if (!r.ok()) ++result.failed;
      result.rows.push_back(std::move(r));
    }
  }
  result.failure_rate = result.rows.empty() ? 0.0 : static_cast<double>(result.failed) / result.rows.size();
  result.budget_exceeded = result.failure_rate > options.failure_budget;
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation

std::string_view to_string(GroupBy g) noexcept {
  switch (g) {
    case GroupBy::method: return "method";
    case GroupBy::need_category: return "need_category";
    case GroupBy::tags: return "tags";
  }
  return "method";
}

GroupBy parse_group_by(std::string_view s) {
  if (s == "method") return GroupBy::method;
  if (s == "need_category") return GroupBy::need_category;
  if (s == "tags") return GroupBy::tags;
  fail(ErrorKind::InvalidArgument, fmt::format("group-by '{}' not in {{method, need_category, tags}}", s));
}

std::string tag_key(const NeedTags& t) {
  auto opt = [](const auto& v) { return v ? std::string(to_string(*v)) : std::string("-"); };
  return fmt::format("{}/{}/{}/{}", t.need_category.empty() ? "-" : t.need_category, opt(t.detailedness),
                     opt(t.sentiment), opt(t.formality));
}

std::vector<ReportRow> aggregate(std::span<const ResultRow> rows, GroupBy group_by, const DimensionWeights& weights) {
  weights.validate();
  struct Bucket {
    std::vector<ScoreVector> samples;
    std::size_t refusals = 0;
    std::size_t failures = 0;
  };
  std::map<std::string, Bucket> buckets;
  for (const auto& r : rows) {
    std::string key;
    switch (group_by) {
      case GroupBy::method: key = to_string(r.method); break;
      case GroupBy::need_category: key = r.tags.need_category.empty() ? "-" : r.tags.need_category; break;
      case GroupBy::tags: key = tag_key(r.tags); break;
    }
    auto& b = buckets[key];
    if (!r.ok()) {
      ++b.failures;
      continue;
    }
    b.samples.push_back(r.scores);
    if (r.refusal) ++b.refusals;
  }

  std::vector<ReportRow> out;
  for (auto& [key, b] : buckets) {
    if (b.samples.empty()) {
      spdlog::warn("group '{}' has no successful rows ({} failed); omitted", key, b.failures);
      continue;
    }
    out.push_back({key, consistency_report(key, b.samples, weights), b.samples.size(), b.refusals, b.failures});
  }
  if (out.empty()) fail(ErrorKind::EmptyAggregate, "no successful rows to aggregate");
  return out;
}

IterationCurve iteration_curve(std::span<const ResultRow> rows, const DimensionWeights& weights) {
  weights.validate();
  std::vector<const ResultRow*> traced;
  std::size_t longest = 0;
  for (const auto& r : rows) {
    if (r.ok() && !r.trace.empty()) {
      traced.push_back(&r);
      longest = std::max(longest, r.trace.size());
    }
  }
  if (traced.empty()) fail(ErrorKind::EmptyAggregate, "no traced rows for an iteration curve");

  IterationCurve curve;
  for (std::size_t k = 0; k < longest; ++k) {
    std::vector<ScoreVector> samples;
    for (const auto* r : traced) {
      if (k < r->trace.size()) {
        samples.push_back(r->trace[k].scores);
      } else {
        ++curve.excluded;
      }
    }
    auto rep = consistency_report(fmt::format("iteration {}", k + 1), samples, weights);
    curve.points.push_back({static_cast<int>(k + 1), rep.stats.means(), rep.consistency, rep.overall_quality,
                            samples.size()});
  }
  return curve;
}

}  // namespace crisisfuse
