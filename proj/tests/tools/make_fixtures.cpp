// Regenerates tests/fixtures/cache and tests/fixtures/golden by running the
// full pipeline live against the scripted backend.
//
//   make_fixtures <fixtures dir>

#include <filesystem>
#include <iostream>

#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "scripted_backend.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <fixtures dir>\n";
    return 1;
  }
  fs::path root = fs::absolute(argv[1]);
  auto conf = (root / "replay.conf").string();
  auto work = fs::temp_directory_path() / "crisisfuse-make-fixtures";
  fs::remove_all(work);
  fs::remove_all(root / "cache");
  fs::remove_all(root / "golden");
  fs::create_directories(root / "golden");

  auto backend = std::make_shared<crisisfuse::test_support::ScriptedChat>();
  crisisfuse::cli::Hooks hooks;
  hooks.chat_transport = [&](const crisisfuse::ChatBackendSettings&) { return backend; };

  auto step = [&](std::vector<std::string> args) {
    int rc = crisisfuse::cli::run_cli(args, hooks);
    if (rc != 0) {
      std::cerr << "step failed (" << rc << "): " << args.front() << "\n";
      std::exit(rc);
    }
  };
  auto index = (work / "index").string();
  auto run = work / "run";
  step({"ingest", (root / "kb_docs").string(), "--out", index, "--config", conf});
  step({"run", (root / "needs.jsonl").string(), "--method",
        "instructional_prompt,rag,rag_pe,few_shot,prompt_and_select,fuse_plain,fuse_eval,fuse_eval_instruct,fuse_eval_weight",
        "--mode", "live", "--out", run.string(), "--index", index, "--config", conf});
  fs::copy_file(run / "results.jsonl", root / "golden" / "results.jsonl");
  auto results = (run / "results.jsonl").string();
  step({"report", results, "--group-by", "method", "--format", "all", "--out", (root / "golden" / "method").string(),
        "--config", conf});
  step({"report", results, "--group-by", "tags", "--format", "all", "--out",
        (root / "golden" / "tags").string(), "--config", conf});
  step({"report", results, "--group-by", "need_category", "--method", "instructional_prompt", "--format", "all",
        "--out", (root / "golden" / "need_category").string(), "--config", conf});
  step({"report", results, "--group-by", "method", "--method", "fuse_eval_weight", "--curve", "--out",
        (root / "golden" / "curve").string(), "--config", conf});
  std::cout << "backend calls: " << backend->calls() << "\n";
  fs::remove_all(work);
  return 0;
}
