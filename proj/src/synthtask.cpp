// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/synthtask.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "drax/core.hpp"

namespace drax {

namespace {

constexpr double kSecondsPerToken = 0.25;

void check_rates(const TaskConfig& cfg) {
  for (double r : {cfg.sub_rate, cfg.del_rate, cfg.ins_rate}) {
    if (!(r >= 0.0 && r <= 0.5)) {
      throw DomainError("channel rates must lie in [0, 0.5]");
    }
  }
}

}  // namespace

Task Task::build(const TaskConfig& cfg_in) {
  TaskConfig cfg = cfg_in;
  if (cfg.vocab < 2) throw DomainError("task vocabulary must be at least 2");
  if (cfg.length < 1) throw DomainError("task length must be positive");
  check_rates(cfg);

  Task task;
  task.content_alphabet = cfg.eot_reserved ? cfg.vocab - 1 : cfg.vocab;
  if (cfg.eot_reserved) {
    if (cfg.len_min == 0) cfg.len_min = std::max(1, (2 * cfg.length) / 3);
    if (cfg.len_max == 0) cfg.len_max = std::max(1, cfg.length - 1);
  } else {
    if (cfg.del_rate != 0.0 || cfg.ins_rate != 0.0) {
      throw DomainError(
          "insertions and deletions need the reserved EOT pad token");
    }
    cfg.len_min = cfg.length;
    cfg.len_max = cfg.length;
  }
  if (cfg.len_min < 1 || cfg.len_max > cfg.length ||
      cfg.len_min > cfg.len_max) {
    throw DomainError("content length range is inconsistent");
  }
  if (cfg.eot_reserved && cfg.sub_rate > 0.0 && task.content_alphabet < 2) {
    throw DomainError("substitution needs at least two content tokens");
  }
  task.cfg = cfg;

  // The Markov table is a pure function of the task seed.
  RngHandle rng(cfg.seed, 0x7461736bULL);  // "task"
  const int a = task.content_alphabet;
  task.trans.resize(a, a);
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < a; ++j) {
      const double u = rng.next_double();
      task.trans(i, j) = 0.15 + u * u;
    }
    task.trans.row(i) /= task.trans.row(i).sum();
  }
  task.init.resize(a);
  for (int i = 0; i < a; ++i) {
    const double u = rng.next_double();
    task.init[i] = 0.15 + u * u;
  }
  task.init /= task.init.sum();
  return task;
}

double Task::reference_prob(const TokenSeq& x1) const {
  const int L = cfg.length;
  if (static_cast<int>(x1.size()) != L) return 0.0;
  int lc = L;
  if (cfg.eot_reserved) {
    lc = 0;
    while (lc < L && x1[lc] != eot()) ++lc;
    for (int i = lc; i < L; ++i) {
      if (x1[i] != eot()) return 0.0;  // content after the first pad
    }
    if (lc < cfg.len_min || lc > cfg.len_max) return 0.0;
  }
  for (int i = 0; i < lc; ++i) {
    if (x1[i] < 0 || x1[i] >= content_alphabet) return 0.0;
  }
  double p = 1.0 / (cfg.len_max - cfg.len_min + 1);
  p *= init[x1[0]];
  for (int i = 1; i < lc; ++i) p *= trans(x1[i - 1], x1[i]);
  return p;
}

double Task::channel_likelihood(const TokenSeq& condition,
                                const TokenSeq& reference) const {
  if (cfg.del_rate != 0.0 || cfg.ins_rate != 0.0) {
    throw PreconditionError(
        "closed-form channel likelihood requires a substitution-only channel");
  }
  if (condition.size() != reference.size()) {
    throw DimensionError("condition and reference lengths differ");
  }
  double lik = 1.0;
  const double rho = cfg.sub_rate;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const Token r = reference[i];
    const Token c = condition[i];
    if (cfg.eot_reserved && r == eot()) {
      lik *= (c == eot()) ? 1.0 : 0.0;
    } else if (c == r) {
      lik *= 1.0 - rho;
    } else if (!cfg.eot_reserved || c != eot()) {
      lik *= rho / (content_alphabet - 1);
    } else {
      return 0.0;  // channel never substitutes content into the pad
    }
  }
  return lik;
}

SamplePair sample_pair(const Task& task, RngHandle& rng, int ref_id) {
  const TaskConfig& cfg = task.cfg;
  const int L = cfg.length;
  const int span = cfg.len_max - cfg.len_min + 1;
  const int lc = cfg.len_min + static_cast<int>(rng.next_below(span));

  TokenSeq ref;
  ref.reserve(L);
  Token prev = sample_index(task.init, rng);
  ref.push_back(prev);
  for (int i = 1; i < lc; ++i) {
    prev = sample_index(task.trans.row(prev).transpose(), rng);
    ref.push_back(prev);
  }
  while (static_cast<int>(ref.size()) < L) ref.push_back(task.eot());

  // Insertions duplicate a neighbor, deletions drop a token; the pad keeps
  // the observation at exactly L positions either way.
  TokenSeq cond;
  cond.reserve(L + 4);
  for (int i = 0; i < lc; ++i) {
    const bool del = rng.next_double() < cfg.del_rate;
    if (!del) cond.push_back(ref[i]);
    if (rng.next_double() < cfg.ins_rate) cond.push_back(ref[i]);
  }
  while (static_cast<int>(cond.size()) < L) cond.push_back(task.eot());
  cond.resize(L);

  const int others = task.content_alphabet - 1;
  for (int i = 0; i < L; ++i) {
    if (cfg.eot_reserved && cond[i] == task.eot()) continue;
    if (rng.next_double() < cfg.sub_rate) {
      Token r = static_cast<Token>(rng.next_below(others));
      if (r >= cond[i]) ++r;  // uniform over the other content tokens
      cond[i] = r;
    }
  }

  SamplePair out;
  out.reference = std::move(ref);
  out.condition.tokens = std::move(cond);
  out.condition.ref_id = ref_id;
  out.condition.duration_seconds = L * kSecondsPerToken;
  return out;
}

std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double wer(const TokenSeq& hyp, const TokenSeq& ref) {
  if (ref.empty()) throw DomainError("error rate undefined for empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) /
         static_cast<double>(ref.size());
}

double cer(const TokenSeq& hyp, const TokenSeq& ref) { return wer(hyp, ref); }

double rtfx(double audio_seconds, double compute_seconds) {
  if (!(compute_seconds > 0.0)) {
    throw DomainError("compute seconds must be positive");
  }
  return audio_seconds / compute_seconds;
}

TokenSeq truncate_at_eot(const TokenSeq& x, Token eot) {
  TokenSeq out;
  for (Token t : x) {
    if (t == eot) break;
    out.push_back(t);
  }
  return out;
}

std::vector<DatasetEntry> make_dataset(const Task& task, int n, RngHandle rng) {
  std::vector<DatasetEntry> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    RngHandle sub = rng.split(i);
    SamplePair pair = sample_pair(task, sub, i);
    DatasetEntry e;
    e.id = i;
    e.reference = std::move(pair.reference);
    e.condition = std::move(pair.condition.tokens);
    e.duration_seconds = pair.condition.duration_seconds;
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

std::string join_tokens(const TokenSeq& seq) {
  std::string s;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(seq[i]);
  }
  return s;
}

TokenSeq parse_tokens(const std::string& s) {
  TokenSeq out;
  std::istringstream in(s);
  int v;
  while (in >> v) out.push_back(static_cast<Token>(v));
  return out;
}

}  // namespace

void write_dataset(const std::string& path,
                   const std::vector<DatasetEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open dataset file for writing: " + path);
  char buf[64];
  for (const DatasetEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), "%.6g", e.duration_seconds);
    out << e.id << '\t' << join_tokens(e.reference) << '\t'
        << join_tokens(e.condition) << '\t' << buf << '\n';
  }
}

std::vector<DatasetEntry> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset file: " + path);
  std::vector<DatasetEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id_s, ref_s, cond_s, dur_s;
    if (!std::getline(ls, id_s, '\t') || !std::getline(ls, ref_s, '\t') ||
        !std::getline(ls, cond_s, '\t') || !std::getline(ls, dur_s)) {
      throw UsageError("malformed dataset line: " + line);
    }
    DatasetEntry e;
    e.id = std::stoi(id_s);
    e.reference = parse_tokens(ref_s);
    e.condition = parse_tokens(cond_s);
    e.duration_seconds = std::stod(dur_s);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace drax
