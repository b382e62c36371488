// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "drax/config.hpp"

using namespace drax;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

const char* kCli = DRAX_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("drax_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string operator/(const std::string& name) const {
    return (path / name).string();
  }
};

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd =
      env + std::string(kCli) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// Tiny fast-training configuration shared by the CLI tests.
std::string tiny_overrides() {
  return "--set task.d=6 --set task.length=5 --set train.steps=400 "
         "--set train.time_buckets=4 --set sampler.utterances=4 "
         "--set eval.utterances=6 ";
}

}  // namespace

TEST_CASE("config files parse, validate and round-trip") {
  TempDir dir;
  {
    std::ofstream out(dir / "run.cfg");
    out << "# a comment\n\n"
        << "task.d = 6\n"
        << "sampler.nfe = 4\n";
  }
  const RunConfig cfg = RunConfig::from_file(dir / "run.cfg");
  CHECK(cfg.get_int("task.d") == 6);
  CHECK(cfg.get_int("sampler.nfe") == 4);
  CHECK(cfg.get_int("train.batch") == 8);  // defaults fill the rest

  cfg.write(dir / "resolved.cfg");
  const RunConfig again = RunConfig::from_file(dir / "resolved.cfg");
  CHECK(again.values() == cfg.values());

  {
    std::ofstream out(dir / "bad.cfg");
    out << "task.bogus = 1\n";
  }
  CHECK_THROWS_AS(RunConfig::from_file(dir / "bad.cfg"), UsageError);
}

TEST_CASE("tabulated schedules load from config rows") {
  RunConfig cfg = RunConfig::defaults();
  cfg.set("sched.kind", "custom_tabulated");
  cfg.set("sched.table", "0:1:0;0.25:0.75:0.25;0.5:0.5:0.5;0.75:0.25:0.75;1:0:1");
  const Schedule s = cfg.schedule();
  CHECK(s.kind == ScheduleKind::custom_tabulated);
  CHECK(kappa(s, 0.5)[1] == doctest::Approx(0.5).epsilon(1e-9));

  cfg.set("sched.table", "0:1:0:0;0.5:0.3:0.45:0.25;1:0:0:1");
  CHECK(cfg.schedule().components() == 3);

  cfg.set("sched.table", "");
  CHECK_THROWS_AS(cfg.schedule(), UsageError);
}

TEST_CASE("exit codes: usage errors report 1") {
  TempDir dir;
  CHECK(run("--out " + (dir / "x") + " frobnicate") == 1);
  CHECK(run("--config /nonexistent.cfg --out " + (dir / "x") + " gen-data") ==
        1);
  CHECK(run("--set bogus.key=1 --out " + (dir / "x") + " gen-data") == 1);
  CHECK(run("--out " + (dir / "x") + " sample --model /nonexistent.ckpt") ==
        1);
}

TEST_CASE("gen-data is deterministic and re-runnable from its config") {
  TempDir dir;
  REQUIRE(run("--out " + (dir / "a") + " --set data.count=8 gen-data") == 0);
  REQUIRE(run("--config " + (dir / "a") + "/config.resolved --out " +
              (dir / "b") + " gen-data") == 0);
  CHECK(slurp(dir / "a/dataset.tsv") == slurp(dir / "b/dataset.tsv"));
}

TEST_CASE("train writes a checkpoint, loss curve and resolved config") {
  TempDir dir;
  REQUIRE(run(tiny_overrides() + "--out " + (dir / "m") + " train") == 0);
  CHECK(fs::exists(dir.path / "m/model.ckpt"));
  CHECK(fs::exists(dir.path / "m/loss_curve.csv"));
  CHECK(fs::exists(dir.path / "m/config.resolved"));
  // Two-way default: no middle checkpoint.
  CHECK(!fs::exists(dir.path / "m/mid.ckpt"));

  // A tri schedule produces one.
  REQUIRE(run(tiny_overrides() + "--set sched.kind=tri_factorized --out " +
              (dir / "t") + " train") == 0);
  CHECK(fs::exists(dir.path / "t/mid.ckpt"));
}

TEST_CASE("identical configs train byte-identical checkpoints") {
  TempDir dir;
  REQUIRE(run(tiny_overrides() + "--out " + (dir / "a") + " train") == 0);
  REQUIRE(run("--config " + (dir / "a") + "/config.resolved --out " +
              (dir / "b") + " train") == 0);
  CHECK(slurp(dir / "a/model.ckpt") == slurp(dir / "b/model.ckpt"));
  CHECK(slurp(dir / "a/loss_curve.csv") == slurp(dir / "b/loss_curve.csv"));
}

TEST_CASE("sample emits transcripts and a full trace") {
  TempDir dir;
  REQUIRE(run(tiny_overrides() + "--out " + (dir / "m") + " train") == 0);
  REQUIRE(run(tiny_overrides() + "--out " + (dir / "s") +
              " sample --model " + (dir / "m") + "/model.ckpt --trace --nfe 16") ==
          0);
  const std::string transcripts = slurp(dir / "s/transcripts.tsv");
  CHECK(count_lines(transcripts) == 1 + 4);  // header + utterances

  // 16 steps x 5 positions per utterance.
  const std::string trace = slurp(dir / "s/trace.tsv");
  std::istringstream in(trace);
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, int> rows_per_utt;
  while (std::getline(in, line)) {
    rows_per_utt[line.substr(0, line.find('\t'))]++;
  }
  for (const auto& [utt, rows] : rows_per_utt) CHECK(rows == 16 * 5);

  // Re-running from the resolved config reproduces the transcripts.
  REQUIRE(run("--config " + (dir / "s") + "/config.resolved --out " +
              (dir / "s2") + " sample --model " + (dir / "m") +
              "/model.ckpt --trace") == 0);
  CHECK(slurp(dir / "s2/transcripts.tsv") == transcripts);

  // Checkpoint/config shape mismatch is a usage error.
  CHECK(run("--out " + (dir / "bad") + " sample --model " + (dir / "m") +
            "/model.ckpt") == 1);
}

TEST_CASE("eval sweeps cells with the oracle at the bottom") {
  TempDir dir;
  REQUIRE(run(tiny_overrides() + "--out " + (dir / "m") + " train") == 0);
  REQUIRE(run(tiny_overrides() + "--out " + (dir / "e") +
              " --set eval.nfe_list=4 --set eval.candidate_list=1,4" +
              " --set eval.scoring_list=none,mode,mbr,elbo eval --model " +
              (dir / "m") + "/model.ckpt") == 0);
  std::istringstream in(slurp(dir / "e/eval.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "nfe,candidates,scoring,mean_wer,mean_cer,oracle_wer,rtfx");
  std::map<int, std::map<std::string, double>> wer_by_cands;
  std::map<int, double> oracle_by_cands;
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string nfe, cands, scoring, wer, cer, oracle, rtfx;
    std::getline(ls, nfe, ',');
    std::getline(ls, cands, ',');
    std::getline(ls, scoring, ',');
    std::getline(ls, wer, ',');
    std::getline(ls, cer, ',');
    std::getline(ls, oracle, ',');
    std::getline(ls, rtfx, ',');
    wer_by_cands[std::stoi(cands)][scoring] = std::stod(wer);
    oracle_by_cands[std::stoi(cands)] = std::stod(oracle);
    ++rows;
  }
  CHECK(rows == 2 * 4);  // two candidate counts x four methods
  // The oracle lower-bounds every method on the shared candidate sets.
  for (const auto& [cands, methods] : wer_by_cands) {
    for (const auto& [name, wer] : methods) {
      CHECK(oracle_by_cands[cands] <= wer + 1e-12);
    }
  }
  // A single candidate collapses all methods onto the lone sample.
  const auto& single = wer_by_cands[1];
  for (const auto& [name, wer] : single) {
    CHECK(wer == doctest::Approx(single.at("none")).epsilon(1e-12));
  }
}

TEST_CASE("speculate verifies the greedy-equality invariant") {
  TempDir dir;
  // The target is a direct conditional model; reuse a tri training's middle.
  REQUIRE(run(tiny_overrides() + "--set sched.kind=tri_factorized --out " +
              (dir / "t") + " train") == 0);
  REQUIRE(run(tiny_overrides() + "--out " + (dir / "d") + " train") == 0);
  REQUIRE(run(tiny_overrides() + "--set spec.utterances=16 --out " +
              (dir / "s") + " speculate --draft " + (dir / "d") +
              "/model.ckpt --target " + (dir / "t") + "/mid.ckpt") == 0);
  const std::string csv = slurp(dir / "s/speculate.csv");
  CHECK(count_lines(csv) == 1 + 16);

  REQUIRE(run(tiny_overrides() + "--set spec.utterances=16 --out " +
              (dir / "r") + " speculate --random-draft --target " +
              (dir / "t") + "/mid.ckpt") == 0);
}

TEST_CASE("theory writes trial records and a summary") {
  TempDir dir;
  // Worker threads fall back to DRAX_THREADS; results do not depend on it.
  REQUIRE(run("--out " + (dir / "th") +
              " --set theory.trials=2 --set theory.grid=400 theory",
              "DRAX_THREADS=2 ") == 0);
  CHECK(count_lines(slurp(dir / "th/theory_trials.jsonl")) == 2);
  CHECK(count_lines(slurp(dir / "th/theory_summary.csv")) == 3);
  REQUIRE(run("--config " + (dir / "th") + "/config.resolved --out " +
              (dir / "th2") + " theory") == 0);
  CHECK(slurp(dir / "th/theory_summary.csv") ==
        slurp(dir / "th2/theory_summary.csv"));
}

TEST_CASE("ablate-paths reports one row per arm and seed") {
  TempDir dir;
  REQUIRE(run("--threads 4 --set task.d=6 --set task.length=5 "
              "--set train.steps=300 --set train.time_buckets=4 "
              "--set ablate.seeds=2 --set ablate.utterances=8 --out " +
              (dir / "ab") + " ablate-paths") == 0);
  const std::string runs = slurp(dir / "ab/ablate_runs.csv");
  CHECK(count_lines(runs) == 1 + 4 * 2);
  const std::string summary = slurp(dir / "ab/ablate_summary.csv");
  CHECK(count_lines(summary) == 1 + 4);
}

TEST_SUITE_END();
