#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crisisfuse/evaluation.hpp"
#include "crisisfuse/fusion.hpp"
#include "crisisfuse/generation.hpp"
#include "crisisfuse/knowledge_base.hpp"
#include "crisisfuse/metrics.hpp"

namespace crisisfuse {

// ---------------------------------------------------------------------------
// Dataset

struct DatasetRecord {
  NeedQuery need;
  std::optional<bool> gold_need;
};

struct DatasetReject {
  std::size_t line = 0;
  std::string reason;
  std::string content;
};

struct Dataset {
  std::vector<DatasetRecord> records;
  std::vector<DatasetReject> rejects;
};

/// JSON lines with id, text, and optional event, need_category, detailedness,
/// sentiment, formality, gold_need. Bad lines go to `rejects`. Throws IoError
/// when unreadable, DatasetError on a duplicate id or when more than 10% of
/// non-blank lines are rejected.
Dataset load_dataset(const std::filesystem::path& path, std::string_view default_event = "hurricane");

DatasetRecord parse_dataset_record(const nlohmann::json& j, std::string_view default_event = "hurricane");
nlohmann::json to_json(const DatasetRecord& r);

// ---------------------------------------------------------------------------
// Need gating

using NeedClassifier = std::function<bool(const DatasetRecord&)>;

/// True iff all three classifiers say the record expresses a need. Throws
/// InvalidArgument unless exactly three are given; a throwing classifier
/// surfaces as DetectorError.
bool ensemble_detect(const DatasetRecord& record, std::span<const NeedClassifier> classifiers);

/// Request-cue heuristic over the tweet text.
NeedClassifier keyword_classifier();
/// Reads the record's gold_need annotation; DetectorError when absent.
NeedClassifier gold_classifier();
/// Runs `sh -c command` with the record as one JSON line on stdin; stdout
/// must be true/false/1/0/yes/no.
NeedClassifier command_classifier(std::string command);
/// "keyword", "gold" or "command:<shell command>".
NeedClassifier make_classifier(std::string_view spec);

// ---------------------------------------------------------------------------
// Methods and results

enum class Method {
  instructional_prompt,
  rag,
  rag_pe,
  few_shot,
  prompt_and_select,
  fuse_plain,
  fuse_eval,
  fuse_eval_instruct,
  fuse_eval_weight,
};
std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view s);
std::vector<Method> all_methods();
std::optional<FusionMethod> fusion_method(Method m) noexcept;

struct TraceEntry {
  int iteration = 0;
  ScoreVector scores;
  std::string response_digest;
};

struct ResultRow {
  std::string need_id;
  Method method = Method::instructional_prompt;
  std::string status = "ok";  // ok | failed
  std::string error;
  Strategy strategy = Strategy::instructional_prompt;
  ScoreVector scores;
  int raw_professionalism = 0;
  int raw_actionability = 0;
  int judge_attempts = 0;
  bool refusal = false;
  std::vector<TraceEntry> trace;
  std::map<std::string, std::string> artifacts;  // role -> digest
  NeedTags tags;

  bool ok() const noexcept { return status == "ok"; }
};

nlohmann::json to_json(const ResultRow& row);
ResultRow result_row_from_json(const nlohmann::json& j);
void write_results(const std::filesystem::path& path, std::span<const ResultRow> rows);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

/// Content-addressed text store: `<dir>/<sha256>.txt`. Without a directory
/// it only computes digests.
class ArtifactStore {
 public:
  ArtifactStore() = default;
  explicit ArtifactStore(std::filesystem::path dir);

  std::string put(const std::string& text);
  std::optional<std::string> get(const std::string& digest) const;
  bool contains(const std::string& digest) const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Runs

struct RunManifest {
  std::string dataset;
  std::string event;
  std::vector<Method> methods;
  DimensionWeights weights;
  int max_iter = 3;
  std::string provider_digest;
  std::string mode = "replay";
  nlohmann::json settings;

  /// Digest of every field; stable for identical configurations.
  std::string digest() const;
  std::string run_id() const;
  nlohmann::json to_json() const;
};

struct PipelineContext {
  Generator& generator;
  Evaluator& evaluator;
  Fuser& fuser;
  const HybridRetriever* retriever = nullptr;  // required by rag, rag_pe and every fusion method
  std::span<const Exemplar> exemplars;         // required by few_shot
  ArtifactStore* artifacts = nullptr;
};

struct PipelineOptions {
  std::vector<Method> methods;
  DimensionWeights weights;
  IterationSchedule schedule;
  std::size_t top_n = 5;
  std::size_t parallelism = 8;
  double failure_budget = 0.05;
};

struct PipelineResult {
  std::vector<ResultRow> rows;  // input order, then method order
  std::size_t failed = 0;
  double failure_rate = 0.0;
  bool budget_exceeded = false;
};

/// One row per (record, method). A failing row never affects other rows; the
/// run is flagged when the failed fraction exceeds the budget.
PipelineResult run_pipeline(std::span<const DatasetRecord> records, const PipelineContext& ctx,
                            const PipelineOptions& options);

// ---------------------------------------------------------------------------
// Aggregation

enum class GroupBy { method, need_category, tags };
std::string_view to_string(GroupBy g) noexcept;
GroupBy parse_group_by(std::string_view s);

/// "category/detailedness/sentiment/formality", "-" for a missing field.
std::string tag_key(const NeedTags& tags);

struct ReportRow {
  std::string group;
  ConsistencyReport report;
  std::size_t n = 0;
  std::size_t refusals = 0;
  std::size_t failures = 0;
};

/// Successful rows only (refusals included) feed the statistics; failures are
/// counted per group. Rows come back sorted by group. Throws EmptyAggregate
/// when no group has a successful row.
std::vector<ReportRow> aggregate(std::span<const ResultRow> rows, GroupBy group_by, const DimensionWeights& weights);

struct CurvePoint {
  int iteration = 0;
  ScoreVector means;
  double consistency = 1.0;
  double overall_quality = 0.0;
  std::size_t n = 0;
};

struct IterationCurve {
  std::vector<CurvePoint> points;
  /// Missing (trace, iteration) cells from traces shorter than the longest one.
  std::size_t excluded = 0;
};

/// Per-iteration aggregation over successful rows that carry a trace.
IterationCurve iteration_curve(std::span<const ResultRow> rows, const DimensionWeights& weights);

}  // namespace crisisfuse
