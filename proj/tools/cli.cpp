#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "crisisfuse/error.hpp"
#include "crisisfuse/evaluation.hpp"
#include "crisisfuse/fusion.hpp"
#include "crisisfuse/generation.hpp"
#include "crisisfuse/harness.hpp"
#include "crisisfuse/knowledge_base.hpp"
#include "crisisfuse/report.hpp"
#include "crisisfuse/templates.hpp"
#include "crisisfuse/text.hpp"

namespace crisisfuse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration file (section.key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set run.max_iter=2 (repeatable)");
}

RunConfig load_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  cfg.apply_overrides(o.overrides);
  return cfg;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, fmt::format("cannot write {}", path.string()));
  out << content;
  if (!out) fail(ErrorKind::IoError, fmt::format("write to {} failed", path.string()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, fmt::format("cannot read {}", path.string()));
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Providers, embedder and assets for one invocation.
class Backends {
 public:
  Backends(const RunConfig& cfg, ProviderMode mode, const Hooks& hooks) : cfg_(cfg) {
    cache_ = std::make_shared<ResponseCache>(cfg.cache_dir);
    generator_ = make_chat(cfg.generator, mode, hooks);
    judge_ = make_chat(cfg.judge, mode, hooks);
    if (cfg.embedder.kind == "hashing") {
      embedder_ = std::make_unique<HashingEmbedder>(cfg.embedder.dimension);
    } else {
      std::shared_ptr<EmbeddingTransport> t =
          hooks.embedding_transport
              ? hooks.embedding_transport(cfg.embedder)
              : std::make_shared<HttpEmbeddingTransport>(HttpEndpoint{cfg.embedder.endpoint, cfg.embedder.api_key_env});
      embedder_ = std::make_unique<CachingEmbedder>(cfg.embedder.id, cfg.embedder.model, std::move(t), cache_, mode,
                                                    cfg.retry);
    }
  }

  ChatProvider& generator() { return *generator_; }
  ChatProvider& judge() { return *judge_; }
  Embedder& embedder() { return *embedder_; }

  const TemplateLibrary& templates() {
    if (!templates_) templates_ = TemplateLibrary::load(cfg_.asset_dir);
    return *templates_;
  }

  RefusalDetector refusal() const {
    auto path = cfg_.asset_dir / "refusal_patterns.txt";
    return fs::exists(path) ? RefusalDetector::load(path) : RefusalDetector::defaults();
  }

  const std::vector<Exemplar>& exemplars() {
    if (!exemplars_) exemplars_ = load_exemplars(cfg_.asset_dir / "fewshot_exemplars.jsonl");
    return *exemplars_;
  }

 private:
  std::unique_ptr<ChatProvider> make_chat(const ChatBackendSettings& s, ProviderMode mode, const Hooks& hooks) {
    std::shared_ptr<ChatTransport> t = hooks.chat_transport
                                           ? hooks.chat_transport(s)
                                           : std::make_shared<HttpChatTransport>(HttpEndpoint{s.endpoint, s.api_key_env, s.timeout});
    return std::make_unique<ChatProvider>(s.id, s.model, std::move(t), cache_, mode, cfg_.retry);
  }

  const RunConfig& cfg_;
  std::shared_ptr<ResponseCache> cache_;
  std::unique_ptr<ChatProvider> generator_;
  std::unique_ptr<ChatProvider> judge_;
  std::unique_ptr<Embedder> embedder_;
  std::optional<TemplateLibrary> templates_;
  std::optional<std::vector<Exemplar>> exemplars_;
};

Corpus open_index(const fs::path& dir, Embedder& embedder) {
  auto corpus = Corpus::load(dir);
  if (!corpus.embeddings_ready()) {
    corpus.attach_embeddings(embedder);
  } else if (corpus.embedder_id() != embedder.id()) {
    fail(ErrorKind::ConfigError, fmt::format("index {} was embedded with '{}' but the configured embedder is '{}'",
                                             dir.string(), corpus.embedder_id(), embedder.id()));
  }
  return corpus;
}

bool needs_index(const std::vector<Method>& methods) {
  for (auto m : methods) {
    if (m != Method::instructional_prompt && m != Method::few_shot) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestArgs {
  CommonOptions common;
  std::string dir;
  std::string out;
  std::string mode = "live";
};

int cmd_ingest(const IngestArgs& a, const Hooks& hooks, Streams io) {
  auto cfg = load_config(a.common);
  auto corpus = ingest_directory(a.dir, cfg.chunking);
  Backends backends(cfg, parse_provider_mode(a.mode), hooks);
  corpus.attach_embeddings(backends.embedder());
  corpus.save(a.out);
  io.out << fmt::format("indexed {} documents into {} chunks -> {}\n", corpus.documents().size(), corpus.size(), a.out);
  return kExitOk;
}

struct DetectArgs {
  CommonOptions common;
  std::string dataset;
  std::vector<std::string> classifiers;
  std::string out;
};

int cmd_detect(const DetectArgs& a, Streams io) {
  auto cfg = load_config(a.common);
  auto specs = a.classifiers.empty() ? cfg.classifiers : a.classifiers;
  std::vector<NeedClassifier> classifiers;
  for (const auto& s : specs) classifiers.push_back(make_classifier(s));
  if (classifiers.size() != 3) {
    fail(ErrorKind::ConfigError, fmt::format("need gating takes exactly 3 classifiers, got {}", classifiers.size()));
  }
  auto ds = load_dataset(a.dataset, cfg.event);

  std::string lines;
  std::size_t positives = 0;
  for (const auto& r : ds.records) {
    json votes = json::array();
    for (const auto& c : classifiers) votes.push_back(c(r));
    bool need = ensemble_detect(r, classifiers);
    positives += need;
    lines += json{{"id", r.need.id}, {"votes", votes}, {"need", need}}.dump() + "\n";
  }
  if (a.out.empty()) {
    io.out << lines;
  } else {
    write_text(a.out, lines);
  }
  io.err << fmt::format("{} of {} records flagged as needs ({} rejected lines)\n", positives, ds.records.size(),
                        ds.rejects.size());
  return kExitOk;
}

struct RunArgs {
  CommonOptions common;
  std::string dataset;
  std::vector<std::string> methods;
  std::string mode = "live";
  std::string out;
  std::string index;
  std::optional<int> max_iter;
  std::optional<std::size_t> parallelism;
  bool gate = false;
};

int cmd_run(const RunArgs& a, const Hooks& hooks, Streams io) {
  auto cfg = load_config(a.common);
  if (a.max_iter) cfg.max_iter = *a.max_iter;
  if (a.parallelism) cfg.parallelism = *a.parallelism;
  cfg.validate();
  auto mode = parse_provider_mode(a.mode);

  std::vector<Method> methods;
  for (const auto& m : a.methods) methods.push_back(parse_method(m));

  auto ds = load_dataset(a.dataset, cfg.event);
  std::vector<DatasetRecord> records;
  std::size_t gated_out = 0;
  if (a.gate) {
    std::vector<NeedClassifier> classifiers;
    for (const auto& s : cfg.classifiers) classifiers.push_back(make_classifier(s));
    for (auto& r : ds.records) {
      if (ensemble_detect(r, classifiers)) {
        records.push_back(std::move(r));
      } else {
        ++gated_out;
      }
    }
  } else {
    records = std::move(ds.records);
  }

  Backends backends(cfg, mode, hooks);
  const auto& templates = backends.templates();
  auto refusal = backends.refusal();

  std::optional<Corpus> corpus;
  std::optional<HybridRetriever> retriever;
  if (needs_index(methods)) {
    if (a.index.empty()) fail(ErrorKind::IndexNotReady, "selected methods need --index");
    corpus = open_index(a.index, backends.embedder());
    retriever.emplace(*corpus, backends.embedder());
  }
  std::span<const Exemplar> exemplars;
  if (std::find(methods.begin(), methods.end(), Method::few_shot) != methods.end()) exemplars = backends.exemplars();

  Generator generator(backends.generator(), templates, cfg.generator.decoding, refusal);
  Evaluator evaluator(backends.judge(), templates, backends.embedder(),
                      {cfg.judge.decoding, cfg.judge_retries, {cfg.relevance}});
  Fuser fuser(backends.generator(), templates, {cfg.generator.decoding, cfg.selection, cfg.selection_threshold, refusal});

  fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  ArtifactStore artifacts(out_dir / "artifacts");

  RunManifest manifest{fs::path(a.dataset).filename().string(), cfg.event, methods, cfg.weights, cfg.max_iter,
                       cfg.provider_digest(), std::string(to_string(mode)), cfg.to_json()};
  PipelineContext ctx{generator, evaluator, fuser, retriever ? &*retriever : nullptr, exemplars, &artifacts};
  PipelineOptions opts{methods, cfg.weights, {cfg.max_iter, true}, cfg.top_n, cfg.parallelism, cfg.failure_budget};
  auto result = run_pipeline(records, ctx, opts);

  write_results(out_dir / "results.jsonl", result.rows);
  std::string rejects;
  for (const auto& r : ds.rejects) rejects += json{{"line", r.line}, {"reason", r.reason}, {"content", r.content}}.dump() + "\n";
  write_text(out_dir / "rejects.jsonl", rejects);
  auto mj = manifest.to_json();
  mj["run_id"] = manifest.run_id();
  mj["digest"] = manifest.digest();
  write_text(out_dir / "manifest.json", mj.dump(2) + "\n");

  json failed = json::array();
  for (const auto& r : result.rows) {
    if (!r.ok()) failed.push_back({{"need_id", r.need_id}, {"method", to_string(r.method)}, {"error", r.error}});
  }
  json summary{{"run_id", manifest.run_id()},
               {"records", records.size()},
               {"rejected_lines", ds.rejects.size()},
               {"gated_out", gated_out},
               {"rows", result.rows.size()},
               {"failed", result.failed},
               {"failure_rate", result.failure_rate},
               {"failure_budget", cfg.failure_budget},
               {"budget_exceeded", result.budget_exceeded},
               {"failures", failed}};
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");

  for (const auto& f : failed) {
    io.err << fmt::format("failed: need {} method {}: {}\n", f["need_id"].get<std::string>(),
                          f["method"].get<std::string>(), f["error"].get<std::string>());
  }
  io.out << fmt::format("run {}: {} rows, {} failed -> {}\n", manifest.run_id(), result.rows.size(), result.failed,
                        out_dir.string());
  if (result.budget_exceeded) {
    io.err << fmt::format("failure rate {:.3f} exceeds budget {:.3f}\n", result.failure_rate, cfg.failure_budget);
    return kExitFailure;
  }
  return kExitOk;
}

struct ReportArgs {
  CommonOptions common;
  std::string results;
  std::string group_by = "method";
  std::vector<std::string> methods;
  std::string format = "text";
  std::string out;
  bool curve = false;
};

int cmd_report(const ReportArgs& a, Streams io) {
  auto cfg = load_config(a.common);
  auto rows = read_results(a.results);
  if (!a.methods.empty()) {
    std::set<Method> keep;
    for (const auto& m : a.methods) keep.insert(parse_method(m));
    std::erase_if(rows, [&](const ResultRow& r) { return !keep.contains(r.method); });
  }
  auto report = aggregate(rows, parse_group_by(a.group_by), cfg.weights);

  std::vector<ReportFormat> formats;
  if (a.format == "all") {
    formats = {ReportFormat::text, ReportFormat::csv, ReportFormat::json};
  } else {
    formats = {parse_report_format(a.format)};
  }

  std::optional<IterationCurve> curve;
  if (a.curve) curve = iteration_curve(rows, cfg.weights);

  if (a.out.empty()) {
    for (auto f : formats) io.out << render_report(report, f);
    if (curve) io.out << render_curve(*curve);
  } else {
    fs::create_directories(a.out);
    for (auto f : formats) emit_report(report, f, fs::path(a.out) / report_file_name(f));
    if (curve) write_text(fs::path(a.out) / "curve.csv", render_curve(*curve));
  }
  if (curve && curve->excluded) io.err << fmt::format("{} trace cells missing from shorter traces\n", curve->excluded);
  return kExitOk;
}

struct FuseOneArgs {
  CommonOptions common;
  std::string need_file;
  std::string method = "fuse_eval_weight";
  std::string mode = "live";
  std::string index;
  std::optional<int> max_iter;
};

int cmd_fuse_one(const FuseOneArgs& a, const Hooks& hooks, Streams io) {
  auto cfg = load_config(a.common);
  if (a.max_iter) cfg.max_iter = *a.max_iter;
  cfg.validate();
  auto method = parse_fusion_method(a.method);

  auto raw = read_text(a.need_file);
  DatasetRecord record;
  try {
    record = parse_dataset_record(json::parse(raw), cfg.event);
  } catch (const json::exception&) {
    record.need = {fs::path(a.need_file).stem().string(), text::trim(raw), cfg.event, {}};
    record.need.validate();
  }

  Backends backends(cfg, parse_provider_mode(a.mode), hooks);
  if (a.index.empty()) fail(ErrorKind::IndexNotReady, "fuse-one needs --index");
  auto corpus = open_index(a.index, backends.embedder());
  HybridRetriever retriever(corpus, backends.embedder());
  auto refusal = backends.refusal();
  Generator generator(backends.generator(), backends.templates(), cfg.generator.decoding, refusal);
  Evaluator evaluator(backends.judge(), backends.templates(), backends.embedder(),
                      {cfg.judge.decoding, cfg.judge_retries, {cfg.relevance}});
  Fuser fuser(backends.generator(), backends.templates(),
              {cfg.generator.decoding, cfg.selection, cfg.selection_threshold, refusal});

  auto ip = generator.generate_ip(record.need);
  auto rag = generator.generate_rag(record.need, retriever, cfg.top_n);
  auto s_ip = evaluator.score_vector(record.need.text, ip.text);
  auto s_rag = evaluator.score_vector(record.need.text, rag.text);
  auto scores = [](const ScoreVector& s) {
    return json{{"professionalism", s.professionalism}, {"actionability", s.actionability}, {"relevance", s.relevance}};
  };
  json out{{"need", to_json(record)},
           {"instructional_prompt", {{"text", ip.text}, {"scores", scores(s_ip)}, {"refusal", ip.refusal}}},
           {"rag", {{"text", rag.text}, {"scores", scores(s_rag)}, {"chunks", rag.retrieved_chunk_ids}}}};

  if (method == FusionMethod::prompt_and_select) {
    auto chosen = fuser.prompt_and_select({ip, rag, s_ip, s_rag, cfg.weights});
    out["selected"] = to_string(chosen.strategy);
  } else {
    auto scorer = [&](const CandidateResponse& c) { return evaluator.score_vector(record.need.text, c.text); };
    auto trace = iterative_fuse(record.need, ip, s_ip, rag, s_rag, method, cfg.weights, fuser, scorer,
                                {cfg.max_iter, true});
    json steps = json::array();
    for (const auto& s : trace.steps) {
      steps.push_back({{"iteration", s.iteration},
                       {"text", s.candidate.text},
                       {"scores", scores(s.scores)},
                       {"overall_quality", overall_quality(s.scores, cfg.weights)}});
    }
    out["trace"] = steps;
  }
  io.out << out.dump(2) << "\n";
  return kExitOk;
}

bool is_usage_error(ErrorKind k) {
  return k == ErrorKind::ConfigError || k == ErrorKind::InvalidArgument;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, const Hooks& hooks) {
  Streams io{hooks.out ? *hooks.out : std::cout, hooks.err ? *hooks.err : std::cerr};

  CLI::App app{"Crisis response generation with score-guided fusion", "crisisfuse"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::vector<std::string> method_names;
  for (auto m : all_methods()) method_names.emplace_back(to_string(m));
  std::vector<std::string> fusion_names;
  for (auto m : all_methods()) {
    if (fusion_method(m)) fusion_names.emplace_back(to_string(m));
  }

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Chunk and index a directory of .txt/.md documents");
  c_ingest->add_option("dir", ingest.dir, "Document directory")->required();
  c_ingest->add_option("--out", ingest.out, "Index directory to write")->required();
  c_ingest->add_option("--mode", ingest.mode, "Embedding backend mode")->check(CLI::IsMember({"live", "replay"}));
  add_common(c_ingest, ingest.common);

  DetectArgs detect;
  auto* c_detect = app.add_subcommand("detect", "Flag records that express an information need (unanimous vote)");
  c_detect->add_option("dataset", detect.dataset, "Dataset (JSON lines)")->required();
  c_detect->add_option("--classifiers", detect.classifiers, "Three of keyword, gold, command:<cmd>")
      ->delimiter(',')
      ->expected(3);
  c_detect->add_option("--out", detect.out, "Write flags here instead of stdout");
  add_common(c_detect, detect.common);

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Generate, score and fuse responses for every record");
  c_run->add_option("dataset", run.dataset, "Dataset (JSON lines)")->required();
  c_run->add_option("--method", run.methods, "Comma-separated methods")
      ->required()
      ->delimiter(',')
      ->check(CLI::IsMember(method_names));
  c_run->add_option("--mode", run.mode, "live calls backends and records; replay serves the cache only")
      ->check(CLI::IsMember({"live", "replay"}));
  c_run->add_option("--out", run.out, "Output directory")->required();
  c_run->add_option("--index", run.index, "Knowledge-base index from `ingest`");
  c_run->add_option("--max-iter", run.max_iter, "Fusion iterations")->check(CLI::PositiveNumber);
  c_run->add_option("--parallelism", run.parallelism, "Records processed concurrently")->check(CLI::PositiveNumber);
  c_run->add_flag("--gate", run.gate, "Drop records the classifier ensemble does not flag as needs");
  add_common(c_run, run.common);

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Aggregate a results file into mean (sd) tables");
  c_report->add_option("results", report.results, "results.jsonl from `run`")->required()->check(CLI::ExistingFile);
  c_report->add_option("--group-by", report.group_by, "Grouping key")
      ->check(CLI::IsMember({"method", "tags", "need_category"}));
  c_report->add_option("--method", report.methods, "Only these methods")->delimiter(',')->check(CLI::IsMember(method_names));
  c_report->add_option("--format", report.format, "Output format")->check(CLI::IsMember({"text", "csv", "json", "all"}));
  c_report->add_option("--out", report.out, "Write report files into this directory");
  c_report->add_flag("--curve", report.curve, "Also emit the per-iteration series");
  add_common(c_report, report.common);

  FuseOneArgs fuse_one;
  auto* c_fuse = app.add_subcommand("fuse-one", "Run IP, RAG and one fusion method on a single need, printing everything");
  c_fuse->add_option("need-file", fuse_one.need_file, "JSON record or plain-text need")->required()->check(CLI::ExistingFile);
  c_fuse->add_option("--method", fuse_one.method, "Fusion method")->check(CLI::IsMember(fusion_names));
  c_fuse->add_option("--mode", fuse_one.mode, "Backend mode")->check(CLI::IsMember({"live", "replay"}));
  c_fuse->add_option("--index", fuse_one.index, "Knowledge-base index")->required();
  c_fuse->add_option("--max-iter", fuse_one.max_iter, "Fusion iterations")->check(CLI::PositiveNumber);
  add_common(c_fuse, fuse_one.common);

  std::vector<const char*> argv{"crisisfuse"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    io.err << sub->help();
    return kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, hooks, io);
    if (c_detect->parsed()) return cmd_detect(detect, io);
    if (c_run->parsed()) return cmd_run(run, hooks, io);
    if (c_report->parsed()) return cmd_report(report, io);
    if (c_fuse->parsed()) return cmd_fuse_one(fuse_one, hooks, io);
  } catch (const Error& e) {
    io.err << "error: " << e.what() << "\n";
    return is_usage_error(e.kind()) ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv, const Hooks& hooks) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, hooks);
}

}  // namespace crisisfuse::cli
