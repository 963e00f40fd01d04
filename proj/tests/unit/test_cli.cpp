#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "crisisfuse/harness.hpp"
#include "scripted_backend.hpp"
#include "test_util.hpp"

using namespace crisisfuse;
using nlohmann::json;
namespace tu = crisisfuse::test_support;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

/// Runs the CLI with a transport that fails on any backend call.
CliRun invoke(std::vector<std::string> args, std::shared_ptr<ChatTransport> transport = nullptr) {
  if (!transport) transport = std::make_shared<tu::CountingTransport>();
  std::ostringstream out, err;
  cli::Hooks hooks;
  hooks.chat_transport = [transport](const ChatBackendSettings&) { return transport; };
  hooks.out = &out;
  hooks.err = &err;
  CliRun r;
  r.code = cli::run_cli(args, hooks);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string conf() { return (tu::fixture_dir() / "replay.conf").string(); }

}  // namespace

TEST(Cli, HelpListsSubcommands) {
  auto r = invoke({"--help"});
  EXPECT_EQ(r.code, cli::kExitOk);
  for (const char* sub : {"ingest", "detect", "run", "report", "fuse-one"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitUsage);
  tu::TempDir dir;
  auto r = invoke({"run", (tu::fixture_dir() / "needs.jsonl").string(), "--method", "fusion", "--out",
                (dir / "run").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  tu::write_file(dir / "bad.conf", "run.speed = fast\n");
  r = invoke({"ingest", (tu::fixture_dir() / "kb_docs").string(), "--out", (dir / "idx").string(), "--config",
           (dir / "bad.conf").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("run.speed"), std::string::npos);
}

TEST(Cli, EmptyCorpusExitsTwo) {
  tu::TempDir dir;
  fs::create_directories(dir / "empty");
  auto r = invoke({"ingest", (dir / "empty").string(), "--out", (dir / "idx").string(), "--config", conf()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("EmptyCorpus"), std::string::npos) << r.err;
}

TEST(Cli, ReplayRunReproducesGoldenReports) {
  tu::TempDir dir;
  auto transport = std::make_shared<tu::CountingTransport>();
  auto index = (dir / "index").string();
  ASSERT_EQ(invoke({"ingest", (tu::fixture_dir() / "kb_docs").string(), "--out", index, "--config", conf()}).code, 0);
  auto run = invoke({"run", (tu::fixture_dir() / "needs.jsonl").string(), "--method",
                  "instructional_prompt,rag,rag_pe,few_shot,prompt_and_select,fuse_plain,fuse_eval,fuse_eval_instruct,"
                  "fuse_eval_weight",
                  "--mode", "replay", "--out", (dir / "run").string(), "--index", index, "--config", conf()},
                 transport);
  ASSERT_EQ(run.code, 0) << run.err;
  EXPECT_EQ(transport->calls(), 0u);
  const auto golden = tu::fixture_dir() / "golden";
  EXPECT_EQ(tu::read_file(dir / "run/results.jsonl"), tu::read_file(golden / "results.jsonl"));

  auto results = (dir / "run/results.jsonl").string();
  ASSERT_EQ(invoke({"report", results, "--group-by", "method", "--format", "all", "--out", (dir / "method").string()}).code,
            0);
  for (const char* f : {"report.txt", "report.csv", "report.json"}) {
    EXPECT_EQ(tu::read_file(dir / "method" / f), tu::read_file(golden / "method" / f)) << f;
  }

  auto summary = json::parse(tu::read_file(dir / "run/summary.json"));
  EXPECT_EQ(summary["rows"], 108);
  EXPECT_EQ(summary["failed"], 0);
  auto manifest = json::parse(tu::read_file(dir / "run/manifest.json"));
  EXPECT_EQ(manifest["dataset"], "needs.jsonl");
  EXPECT_EQ(manifest["mode"], "replay");
  EXPECT_EQ(manifest["run_id"].get<std::string>().size(), 16u);
}

TEST(Cli, ReplayMissFailsRowsAndBudget) {
  tu::TempDir dir;
  auto index = (dir / "index").string();
  ASSERT_EQ(invoke({"ingest", (tu::fixture_dir() / "kb_docs").string(), "--out", index, "--config", conf()}).code, 0);
  tu::write_file(dir / "new.jsonl", R"({"id":"z1","text":"A question nobody recorded an answer for?"})" "\n");
  auto r = invoke({"run", (dir / "new.jsonl").string(), "--method", "instructional_prompt", "--mode", "replay", "--out",
                (dir / "run").string(), "--config", conf()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("z1"), std::string::npos);
  auto rows = read_results(dir / "run/results.jsonl");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].ok());
  EXPECT_NE(rows[0].error.find("no recorded response"), std::string::npos);
}

TEST(Cli, ReportFiltersAndCurve) {
  tu::TempDir dir;
  const auto golden = tu::fixture_dir() / "golden";
  auto results = (golden / "results.jsonl").string();
  auto r = invoke({"report", results, "--group-by", "need_category", "--method", "instructional_prompt", "--format", "all",
                "--out", (dir / "cat").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(tu::read_file(dir / "cat/report.csv"), tu::read_file(golden / "need_category/report.csv"));
  r = invoke({"report", results, "--group-by", "tags", "--format", "all", "--out", (dir / "tags").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(tu::read_file(dir / "tags/report.txt"), tu::read_file(golden / "tags/report.txt"));
  r = invoke({"report", results, "--method", "fuse_eval_weight", "--curve", "--out", (dir / "curve").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(tu::read_file(dir / "curve/curve.csv"), tu::read_file(golden / "curve/curve.csv"));
  r = invoke({"report", results, "--format", "csv"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, tu::read_file(golden / "method/report.csv"));
}

TEST(Cli, DetectWritesVotes) {
  auto r = invoke({"detect", (tu::fixture_dir() / "needs.jsonl").string(), "--config", conf()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  int n = 0;
  for (std::string line; std::getline(lines, line);) {
    auto j = json::parse(line);
    ASSERT_EQ(j["votes"].size(), 3u);
    bool all = j["votes"][0] && j["votes"][1] && j["votes"][2];
    EXPECT_EQ(j["need"].get<bool>(), all);
    ++n;
  }
  EXPECT_EQ(n, 12);
}

TEST(Cli, FuseOnePrintsTrace) {
  tu::TempDir dir;
  auto index = (dir / "index").string();
  ASSERT_EQ(invoke({"ingest", (tu::fixture_dir() / "kb_docs").string(), "--out", index, "--config", conf()}).code, 0);
  std::ifstream in(tu::fixture_dir() / "needs.jsonl");
  std::string first;
  std::getline(in, first);
  tu::write_file(dir / "need.json", first);
  auto r = invoke({"fuse-one", (dir / "need.json").string(), "--method", "fuse_eval_weight", "--mode", "replay",
                "--index", index, "--config", conf()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["trace"].size(), 3u);
  EXPECT_EQ(j["need"]["id"], "n01");
}
