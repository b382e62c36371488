// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0
//
// drax: discrete-flow-matching engine for conditional sequence generation.
// Subcommands: train, sample, eval, ablate-paths, speculate, theory, gen-data.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "drax/config.hpp"
#include "drax/parallel.hpp"
#include "drax/sampling.hpp"
#include "drax/theory.hpp"

namespace fs = std::filesystem;
using namespace drax;

namespace {

// Fixed stream ids; every data and training stream is a pure function of the
// config seed, which is what makes re-runs byte-identical.
constexpr std::uint64_t kTrainStream = 1000;
constexpr std::uint64_t kEvalDataStream = 2000;
constexpr std::uint64_t kSpecDataStream = 2100;
constexpr std::uint64_t kSampleStream = 2200;
constexpr std::uint64_t kAblateTestStream = 2400;
constexpr std::uint64_t kDatasetStream = 2500;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string join_tokens(const TokenSeq& seq) {
  std::string s;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(seq[i]);
  }
  return s;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw UsageError("empty integer list: " + s);
  return out;
}

std::vector<std::string> parse_str_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int threads = 0;
  std::vector<std::string> overrides;
};

RunConfig resolve_config(const GlobalArgs& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig::defaults()
                                        : RunConfig::from_file(g.config_path);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--set expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed >= 0) cfg.set("seed", std::to_string(g.seed));
  if (!g.out_dir.empty()) cfg.set("out_dir", g.out_dir);
  return cfg;
}

int resolve_threads(const GlobalArgs& g, const RunConfig& cfg) {
  if (g.threads > 0) return g.threads;
  if (const char* env = std::getenv("DRAX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const int n = cfg.get_int("threads");
  return n > 0 ? n : 1;
}

fs::path ensure_out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get("out_dir");
  fs::create_directories(dir);
  return dir;
}

struct TrainedBundle {
  TabularModel model;
  std::unique_ptr<MidModel> aux;  // middle or conditioned source, if any
  bool aux_is_source = false;
  TrainResult result;
};

/// Trains the configured path end to end: a tri schedule gets a learnable
/// middle distribution, a conditioned source gets a learnable source model.
TrainedBundle train_from_config(const Task& task, const RunConfig& cfg,
                                RngHandle rng) {
  const Schedule sched = cfg.schedule();
  const SourceKind source = cfg.source_kind();
  TrainedBundle out{TabularModel(task.vocab(), task.length(),
                                 cfg.get_int("train.time_buckets")),
                    nullptr, false, {}};

  PathSpec spec;
  spec.schedule = sched;
  spec.vocab = task.vocab();
  spec.source = source;
  const int mid_features = cfg.get_int("train.mid_features");
  if (sched.mid_index() >= 0) {
    out.aux = std::make_unique<MidModel>(task.vocab(), task.length(), mid_features);
    spec.mid = out.aux.get();
  } else if (source == SourceKind::conditioned) {
    out.aux = std::make_unique<MidModel>(task.vocab(), task.length(), mid_features);
    out.aux_is_source = true;
    spec.source_model = out.aux.get();
  }
  out.result =
      train_toy(task, spec, out.model, out.aux.get(), cfg.train_config(), rng);
  return out;
}

SamplerConfig sampler_from_config(const RunConfig& cfg, const Task& task,
                                  const MidModel* aux, bool aux_is_source) {
  SamplerConfig sc;
  sc.nfe = cfg.get_int("sampler.nfe");
  sc.temperature = cfg.get_double("sampler.temperature");
  sc.include_mid = cfg.get_bool("sampler.include_mid");
  sc.gen_length = task.length();
  // Inference runs on the plain linear schedule; the training schedule is
  // used only when the middle term is explicitly kept in the velocity.
  sc.schedule = sc.include_mid ? cfg.schedule() : Schedule::two_way_linear();
  if (aux != nullptr && aux_is_source) {
    sc.source = SourceKind::conditioned;
    sc.source_model = aux;
  }
  return sc;
}

double utterance_wer(const TokenSeq& hyp, const TokenSeq& ref, Token eot) {
  const TokenSeq h = truncate_at_eot(hyp, eot);
  TokenSeq r = truncate_at_eot(ref, eot);
  if (r.empty()) r.push_back(eot);  // degenerate all-pad reference
  return wer(h, r);
}

void check_compatible(const TabularModel& model, const Task& task) {
  if (model.vocab() != task.vocab() || model.length() != task.length()) {
    throw UsageError("checkpoint shape (" + std::to_string(model.vocab()) +
                     "," + std::to_string(model.length()) +
                     ") does not match the configured task");
  }
}

// --- train ---------------------------------------------------------------------

void cmd_train(const RunConfig& cfg) {
  const fs::path dir = ensure_out_dir(cfg);
  const Task task = Task::build(cfg.task_config());
  TrainedBundle bundle = train_from_config(
      task, cfg, RngHandle(cfg.get_u64("seed"), kTrainStream));

  save_tabular((dir / "model.ckpt").string(), bundle.model);
  if (bundle.aux) {
    save_mid(
        (dir / (bundle.aux_is_source ? "source.ckpt" : "mid.ckpt")).string(),
        *bundle.aux);
  }
  {
    std::ofstream curve(dir / "loss_curve.csv");
    curve << "step,loss\n";
    for (std::size_t i = 0; i < bundle.result.loss_curve.size(); ++i) {
      curve << i << ',' << fmt(bundle.result.loss_curve[i]) << '\n';
    }
  }
  cfg.write((dir / "config.resolved").string());
  std::cout << "final smoothed loss " << fmt(bundle.result.smoothed_end)
            << " (start " << fmt(bundle.result.smoothed_start) << ")\n"
            << "wrote " << (dir / "model.ckpt").string() << "\n";
}

// --- sample --------------------------------------------------------------------

void cmd_sample(const RunConfig& cfg, const std::string& model_path,
                const std::string& aux_path, bool aux_is_source, bool trace) {
  const fs::path dir = ensure_out_dir(cfg);
  const Task task = Task::build(cfg.task_config());
  const TabularModel model = load_tabular(model_path);
  check_compatible(model, task);
  std::unique_ptr<MidModel> aux;
  if (!aux_path.empty()) {
    aux = std::make_unique<MidModel>(load_mid(aux_path));
  }

  SamplerConfig sc = sampler_from_config(cfg, task, aux.get(), aux_is_source);
  if (sc.include_mid && !aux) {
    throw UsageError("--include-mid needs --mid with a middle checkpoint");
  }

  const int n = cfg.get_int("sampler.utterances");
  const RngHandle data_rng(cfg.get_u64("seed"), kEvalDataStream);
  const std::vector<DatasetEntry> data = make_dataset(task, n, data_rng);

  std::ofstream out(dir / "transcripts.tsv");
  out << "utt\toutput\twer\treference\tcondition\n";
  std::ofstream trace_out;
  if (trace) {
    trace_out.open(dir / "trace.tsv");
    trace_out << "utt\tstep\tposition\ttoken\tchanged\n";
  }

  const RngHandle gen_rng(cfg.get_u64("seed"), kSampleStream);
  for (const DatasetEntry& e : data) {
    RngHandle rng = gen_rng.split(e.id);
    const GenerationResult g = generate(
        model, aux_is_source ? nullptr : aux.get(), e.condition, sc, rng, trace);
    out << e.id << '\t' << join_tokens(g.tokens) << '\t'
        << fmt(utterance_wer(g.tokens, e.reference, task.eot())) << '\t'
        << join_tokens(e.reference) << '\t' << join_tokens(e.condition)
        << '\n';
    if (trace) {
      TokenSeq prev = g.initial;
      for (const StepTrace& st : g.trace) {
        for (std::size_t i = 0; i < st.state.size(); ++i) {
          trace_out << e.id << '\t' << st.step << '\t' << i << '\t';
          if (st.state[i] == g.initial[i]) {
            trace_out << '_';  // unchanged from the initial noise
          } else {
            trace_out << st.state[i];
          }
          trace_out << '\t' << (st.state[i] != prev[i] ? 1 : 0) << '\n';
        }
        prev = st.state;
      }
    }
  }
  cfg.write((dir / "config.resolved").string());
  std::cout << "wrote " << (dir / "transcripts.tsv").string() << "\n";
}

// --- eval ----------------------------------------------------------------------

struct EvalCell {
  int nfe = 0;
  int cands = 0;
  std::string scoring;
  double mean_wer = 0.0;
  double mean_cer = 0.0;
  double oracle_wer = 0.0;
  double rtfx_analog = 0.0;
};

void cmd_eval(const RunConfig& cfg, const std::string& model_path,
              const std::string& aux_path, bool aux_is_source,
              const std::string& external_path, int threads) {
  const fs::path dir = ensure_out_dir(cfg);
  const Task task = Task::build(cfg.task_config());
  const TabularModel model = load_tabular(model_path);
  check_compatible(model, task);
  std::unique_ptr<MidModel> aux;
  if (!aux_path.empty()) aux = std::make_unique<MidModel>(load_mid(aux_path));
  std::unique_ptr<MidModel> external;
  if (!external_path.empty()) {
    external = std::make_unique<MidModel>(load_mid(external_path));
  }

  const std::vector<int> nfes = parse_int_list(cfg.get("eval.nfe_list"));
  const std::vector<int> counts = parse_int_list(cfg.get("eval.candidate_list"));
  const std::vector<std::string> methods =
      parse_str_list(cfg.get("eval.scoring_list"));
  for (const std::string& m : methods) {
    if (m == "external" && !external) {
      throw UsageError("scoring method 'external' needs --external CKPT");
    }
  }

  const int n_utt = cfg.get_int("eval.utterances");
  const std::vector<DatasetEntry> data = make_dataset(
      task, n_utt, RngHandle(cfg.get_u64("seed"), kEvalDataStream));

  std::vector<EvalCell> cells;
  for (int nfe : nfes) {
    for (int cands : counts) {
      for (const std::string& m : methods) {
        cells.push_back({nfe, cands, m, 0, 0, 0, 0});
      }
    }
  }

  // Candidate sets are shared by every scoring method of one (nfe, count)
  // block, so the oracle comparison is on the same set the methods pick from.
  struct BlockResult {
    std::map<std::string, double> wer_sum;
    double oracle_sum = 0.0;
  };
  std::map<std::pair<int, int>, BlockResult> blocks;

  const RngHandle cand_rng(cfg.get_u64("seed"), kSampleStream);
  for (int nfe : nfes) {
    for (int cands : counts) {
      SamplerConfig sc = sampler_from_config(cfg, task, aux.get(), aux_is_source);
      sc.nfe = nfe;
      sc.temperature = cands == 1
                           ? cfg.get_double("sampler.temperature")
                           : cfg.get_double("eval.candidate_temperature");
      BlockResult block;
      for (const std::string& m : methods) block.wer_sum[m] = 0.0;

      std::vector<std::map<std::string, double>> wers(data.size());
      std::vector<double> oracles(data.size());
      parallel_for(static_cast<int>(data.size()), threads, [&](int u) {
        const DatasetEntry& e = data[u];
        const RngHandle rng =
            cand_rng.split((static_cast<std::uint64_t>(nfe) << 32) ^
                           (static_cast<std::uint64_t>(cands) << 16) ^ e.id);
        const CandidateSet set =
            generate_candidates(model, aux_is_source ? nullptr : aux.get(),
                                e.condition, sc, cands, rng);
        double oracle = std::numeric_limits<double>::infinity();
        for (const Candidate& c : set.candidates) {
          oracle = std::min(oracle,
                            utterance_wer(c.tokens, e.reference, task.eot()));
        }
        oracles[u] = oracle;
        for (const std::string& m : methods) {
          TokenSeq pick;
          if (m == "none") {
            pick = set.candidates.front().tokens;
          } else if (m == "mode") {
            pick = select_mode(set);
          } else if (m == "mbr") {
            pick = select_mbr(set, ErrorMetric::wer);
          } else if (m == "external") {
            pick = select_external(set, MidScorer(*external), e.condition);
          } else if (m == "elbo") {
            pick = select_elbo(set);
          } else {
            throw UsageError("unknown scoring method: " + m);
          }
          wers[u][m] = utterance_wer(pick, e.reference, task.eot());
        }
      });
      for (std::size_t u = 0; u < data.size(); ++u) {
        block.oracle_sum += oracles[u];
        for (const std::string& m : methods) block.wer_sum[m] += wers[u][m];
      }
      blocks[{nfe, cands}] = std::move(block);
    }
  }

  std::ofstream out(dir / "eval.csv");
  out << "nfe,candidates,scoring,mean_wer,mean_cer,oracle_wer,rtfx\n";
  for (EvalCell& c : cells) {
    const BlockResult& block = blocks[{c.nfe, c.cands}];
    c.mean_wer = block.wer_sum.at(c.scoring) / data.size();
    c.mean_cer = c.mean_wer;  // desk tokens are single symbols
    c.oracle_wer = block.oracle_sum / data.size();
    const double evals = static_cast<double>(c.nfe) * c.cands;
    c.rtfx_analog = rtfx(task.length() * 0.25, evals * kSecondsPerModelEval);
    out << c.nfe << ',' << c.cands << ',' << c.scoring << ','
        << fmt(c.mean_wer) << ',' << fmt(c.mean_cer) << ','
        << fmt(c.oracle_wer) << ',' << fmt(c.rtfx_analog) << '\n';
  }
  cfg.write((dir / "config.resolved").string());
  std::cout << "wrote " << (dir / "eval.csv").string() << "\n";
}

// --- ablate-paths --------------------------------------------------------------

struct AblateArm {
  std::string name;
  std::string sched_kind;
  std::string source;
};

void cmd_ablate_paths(const RunConfig& cfg, int threads) {
  const fs::path dir = ensure_out_dir(cfg);
  const Task task = Task::build(cfg.task_config());
  const int seeds = cfg.get_int("ablate.seeds");
  const int n_test = cfg.get_int("ablate.utterances");

  // The four path designs under test. "uniform_mid" fixes the middle at the
  // uniform distribution; "cond_mid" learns it from the condition;
  // "cond_source" moves the conditioning into the source; "baseline" is the
  // plain two-way path.
  const std::vector<AblateArm> arms = {
      {"uniform_mid", "tri_factorized", "uniform"},
      {"cond_mid", "tri_factorized", "uniform"},
      {"cond_source", "two_way_linear", "conditioned"},
      {"baseline", "two_way_linear", "uniform"},
  };

  const std::vector<DatasetEntry> test = make_dataset(
      task, n_test, RngHandle(cfg.get_u64("seed"), kAblateTestStream));

  struct Run {
    int arm = 0;
    int seed = 0;
    double wer = 0.0;
  };
  std::vector<Run> runs(arms.size() * seeds);

  parallel_for(static_cast<int>(runs.size()), threads, [&](int idx) {
    const int a = idx / seeds;
    const int s = idx % seeds;
    const AblateArm& arm = arms[a];

    RunConfig local = cfg;
    local.set("sched.kind", arm.sched_kind);
    local.set("path.source", arm.source);

    // Matched budgets: every arm trains with the same step/batch counts, on
    // its own stream per seed. The uniform-middle arm pins the middle to the
    // fixed uniform distribution instead of learning it.
    const RngHandle train_rng(cfg.get_u64("seed") + s, kTrainStream + 7 * a);
    TrainedBundle bundle{TabularModel(task.vocab(), task.length(),
                                      cfg.get_int("train.time_buckets")),
                         nullptr, false, {}};
    const FixedDist uniform_mid = FixedDist::uniform(task.vocab());
    if (arm.name == "uniform_mid") {
      PathSpec spec;
      spec.schedule = local.schedule();
      spec.vocab = task.vocab();
      spec.source = SourceKind::uniform;
      spec.mid = &uniform_mid;
      bundle.result = train_toy(task, spec, bundle.model, nullptr,
                                local.train_config(), train_rng);
    } else {
      bundle = train_from_config(task, local, train_rng);
    }

    SamplerConfig sc =
        sampler_from_config(local, task, bundle.aux.get(), bundle.aux_is_source);
    sc.nfe = 8;
    sc.temperature = 0.01;
    sc.include_mid = false;
    sc.schedule = Schedule::two_way_linear();

    const RngHandle gen_rng(cfg.get_u64("seed") + s, kSampleStream + 7 * a);
    double total = 0.0;
    for (const DatasetEntry& e : test) {
      RngHandle rng = gen_rng.split(e.id);
      const GenerationResult g =
          generate(bundle.model, bundle.aux_is_source ? nullptr : bundle.aux.get(),
                   e.condition, sc, rng);
      total += utterance_wer(g.tokens, e.reference, task.eot());
    }
    runs[idx] = {a, s, total / test.size()};
  });

  std::ofstream out(dir / "ablate_runs.csv");
  out << "config,seed,wer\n";
  for (const Run& r : runs) {
    out << arms[r.arm].name << ',' << r.seed << ',' << fmt(r.wer) << '\n';
  }
  std::ofstream summary(dir / "ablate_summary.csv");
  summary << "config,mean_wer\n";
  for (std::size_t a = 0; a < arms.size(); ++a) {
    double mean = 0.0;
    for (const Run& r : runs) {
      if (r.arm == static_cast<int>(a)) mean += r.wer;
    }
    summary << arms[a].name << ',' << fmt(mean / seeds) << '\n';
  }
  cfg.write((dir / "config.resolved").string());
  std::cout << "wrote " << (dir / "ablate_summary.csv").string() << "\n";
}

// --- speculate -------------------------------------------------------------------

void cmd_speculate(const RunConfig& cfg, const std::string& draft_path,
                   const std::string& draft_aux_path,
                   const std::string& target_path, bool random_draft,
                   int threads) {
  const fs::path dir = ensure_out_dir(cfg);
  const Task task = Task::build(cfg.task_config());
  const MidModel target_model = load_mid(target_path);
  const MidTopOne target(target_model);

  std::unique_ptr<TabularModel> draft;
  std::unique_ptr<MidModel> draft_aux;
  if (!random_draft) {
    draft = std::make_unique<TabularModel>(load_tabular(draft_path));
    check_compatible(*draft, task);
    if (!draft_aux_path.empty()) {
      draft_aux = std::make_unique<MidModel>(load_mid(draft_aux_path));
    }
  }
  const UniformPosterior uniform_draft(task.vocab(), task.length());

  SamplerConfig sc;
  sc.nfe = cfg.get_int("spec.draft_nfe");
  sc.temperature = cfg.get_double("spec.draft_temperature");
  sc.gen_length = task.length();
  const int block = cfg.get_int("spec.block");

  const int n = cfg.get_int("spec.utterances");
  const std::vector<DatasetEntry> data =
      make_dataset(task, n, RngHandle(cfg.get_u64("seed"), kSpecDataStream));

  struct Row {
    int id = 0;
    int rounds = 0;
    int matched = 0;
    int len = 0;
    double rtfx_analog = 0.0;
  };
  std::vector<Row> rows(data.size());
  const RngHandle spec_rng(cfg.get_u64("seed"), kSampleStream);
  const auto wall0 = std::chrono::steady_clock::now();

  parallel_for(static_cast<int>(data.size()), threads, [&](int u) {
    const DatasetEntry& e = data[u];
    const PosteriorModel& d =
        random_draft ? static_cast<const PosteriorModel&>(uniform_draft)
                     : *draft;
    const SpeculativeResult res =
        speculative_decode(d, draft_aux.get(), target, e.condition, block, sc,
                           task.eot(), spec_rng.split(e.id));
    const TokenSeq greedy =
        greedy_decode(target, e.condition, task.length(), task.eot());
    if (res.tokens != greedy) {
      throw InvariantViolationError(
          "speculative output differs from the target greedy decode at "
          "utterance " +
          std::to_string(e.id));
    }
    // Cost model: one draft generation costs draft_nfe evaluations per round;
    // each emitted token costs one target evaluation.
    const double compute =
        (static_cast<double>(res.rounds) * sc.nfe +
         static_cast<double>(res.tokens.size())) *
        kSecondsPerModelEval;
    rows[u] = {e.id, res.rounds, res.matched_total,
               static_cast<int>(res.tokens.size()),
               rtfx(e.duration_seconds, compute)};
  });

  const std::chrono::duration<double> wall =
      std::chrono::steady_clock::now() - wall0;

  std::ofstream out(dir / "speculate.csv");
  out << "utt,rounds,matched_total,mean_matches,output_len,rtfx\n";
  double mean_matches = 0.0;
  for (const Row& r : rows) {
    const double mm = r.rounds > 0 ? static_cast<double>(r.matched) / r.rounds : 0.0;
    mean_matches += mm;
    out << r.id << ',' << r.rounds << ',' << r.matched << ',' << fmt(mm) << ','
        << r.len << ',' << fmt(r.rtfx_analog) << '\n';
  }
  cfg.write((dir / "config.resolved").string());
  std::cerr << "wall clock: " << wall.count() << " s\n";
  std::cout << "mean matched tokens per round "
            << fmt(mean_matches / rows.size()) << "\n"
            << "wrote " << (dir / "speculate.csv").string() << "\n";
}

// --- theory ----------------------------------------------------------------------

void cmd_theory(const RunConfig& cfg, int threads) {
  const fs::path dir = ensure_out_dir(cfg);
  const std::vector<TheoryTrialResult> results = run_theory_trials(
      cfg.get_int("theory.trials"), cfg.get_int("theory.grid"),
      cfg.get_double("theory.epsilon_max"), cfg.get_u64("seed"), threads);
  write_theory_jsonl((dir / "theory_trials.jsonl").string(), results);
  write_theory_csv((dir / "theory_summary.csv").string(), results);
  cfg.write((dir / "config.resolved").string());

  int failures = 0;
  for (const TheoryTrialResult& r : results) {
    if (!r.pass) ++failures;
  }
  std::cout << results.size() - failures << "/" << results.size()
            << " trials passed\n"
            << "wrote " << (dir / "theory_summary.csv").string() << "\n";
  if (failures > 0) {
    throw InvariantViolationError(std::to_string(failures) +
                                  " theory trials violated a bound");
  }
}

// --- gen-data ---------------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg) {
  const fs::path dir = ensure_out_dir(cfg);
  const Task task = Task::build(cfg.task_config());
  const std::vector<DatasetEntry> data = make_dataset(
      task, cfg.get_int("data.count"),
      RngHandle(cfg.get_u64("seed"), kDatasetStream));
  write_dataset((dir / "dataset.tsv").string(), data);
  cfg.write((dir / "config.resolved").string());
  std::cout << "wrote " << (dir / "dataset.tsv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete-flow-matching sequence generation engine"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "run configuration file");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--threads", g.threads,
                 "worker threads (falls back to DRAX_THREADS)");
  app.add_option("--set", g.overrides, "override a config key (key=value)");

  CLI::App* c_train = app.add_subcommand("train", "train a model");

  std::string model_path, aux_path, external_path, target_path, draft_aux_path;
  bool aux_is_source = false, trace = false, random_draft = false;
  int nfe_override = 0;
  bool include_mid = false;

  CLI::App* c_sample = app.add_subcommand("sample", "generate transcripts");
  c_sample->add_option("--model", model_path, "tabular checkpoint")->required();
  c_sample->add_option("--mid", aux_path, "middle/source checkpoint");
  c_sample->add_flag("--aux-is-source", aux_is_source,
                     "the --mid checkpoint is a conditioned source");
  c_sample->add_flag("--trace", trace, "emit the per-step generation trace");
  c_sample->add_option("--nfe", nfe_override, "override sampler.nfe");
  c_sample->add_flag("--include-mid", include_mid,
                     "keep the middle term in the sampling velocity");

  CLI::App* c_eval = app.add_subcommand("eval", "sweep nfe/candidates/scoring");
  c_eval->add_option("--model", model_path, "tabular checkpoint")->required();
  c_eval->add_option("--mid", aux_path, "middle/source checkpoint");
  c_eval->add_flag("--aux-is-source", aux_is_source,
                   "the --mid checkpoint is a conditioned source");
  c_eval->add_option("--external", external_path,
                     "external rescoring model checkpoint");

  CLI::App* c_ablate =
      app.add_subcommand("ablate-paths", "compare the four path designs");

  CLI::App* c_spec = app.add_subcommand("speculate", "draft-and-verify decoding");
  c_spec->add_option("--draft", model_path, "draft tabular checkpoint");
  c_spec->add_option("--draft-mid", draft_aux_path, "draft middle checkpoint");
  c_spec->add_option("--target", target_path, "target model checkpoint")
      ->required();
  c_spec->add_flag("--random-draft", random_draft,
                   "use the uniform random drafter baseline");

  CLI::App* c_theory = app.add_subcommand("theory", "randomized bound checks");
  CLI::App* c_data = app.add_subcommand("gen-data", "write a dataset file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = resolve_config(g);
    if (nfe_override > 0) cfg.set("sampler.nfe", std::to_string(nfe_override));
    if (include_mid) cfg.set("sampler.include_mid", "true");
    const int threads = resolve_threads(g, cfg);

    if (c_train->parsed()) {
      cmd_train(cfg);
    } else if (c_sample->parsed()) {
      cmd_sample(cfg, model_path, aux_path, aux_is_source, trace);
    } else if (c_eval->parsed()) {
      cmd_eval(cfg, model_path, aux_path, aux_is_source, external_path,
               threads);
    } else if (c_ablate->parsed()) {
      cmd_ablate_paths(cfg, threads);
    } else if (c_spec->parsed()) {
      if (!random_draft && model_path.empty()) {
        throw UsageError("speculate needs --draft or --random-draft");
      }
      cmd_speculate(cfg, model_path, draft_aux_path, target_path, random_draft,
                    threads);
    } else if (c_theory->parsed()) {
      cmd_theory(cfg, threads);
    } else if (c_data->parsed()) {
      cmd_gen_data(cfg);
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InvariantViolationError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
}
