// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace drax {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"task.d", "16"},
      {"task.length", "12"},
      {"task.sub_rate", "0.2"},
      {"task.del_rate", "0.05"},
      {"task.ins_rate", "0.05"},
      {"task.len_min", "0"},
      {"task.len_max", "0"},
      {"task.eot", "true"},
      {"task.seed", "1"},
      {"sched.kind", "two_way_linear"},
      {"sched.p", "2"},
      {"sched.q", "0.6666666666666666"},
      {"sched.table", ""},
      {"path.source", "uniform"},
      {"train.steps", "30000"},
      {"train.lr", "0.5"},
      {"train.batch", "8"},
      {"train.gumbel_temperature", "0.3"},
      {"train.dropout", "0.1"},
      {"train.prefix_prob", "0.1"},
      {"train.time_buckets", "8"},
      {"train.mid_features", "0"},
      {"sampler.nfe", "16"},
      {"sampler.temperature", "0.01"},
      {"sampler.candidates", "1"},
      {"sampler.include_mid", "false"},
      {"sampler.scoring", "none"},
      {"sampler.utterances", "50"},
      {"sampler.trace", "false"},
      {"eval.nfe_list", "4,8,16"},
      {"eval.candidate_list", "1,8,16"},
      {"eval.scoring_list", "none,mode,mbr,external,elbo"},
      {"eval.utterances", "100"},
      {"eval.candidate_temperature", "0.1"},
      {"spec.block", "8"},
      {"spec.draft_nfe", "2"},
      {"spec.draft_temperature", "0.01"},
      {"spec.utterances", "200"},
      {"theory.trials", "50"},
      {"theory.grid", "2000"},
      {"theory.epsilon_max", "0.5"},
      {"ablate.seeds", "5"},
      {"ablate.utterances", "200"},
      {"data.count", "100"},
      {"seed", "1"},
      {"out_dir", "out"},
      {"threads", "0"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.values_ = default_values();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  RunConfig cfg = defaults();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": expected key = value");
    }
    cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (default_values().find(key) == default_values().end()) {
    throw UsageError("unknown config key: " + key);
  }
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("missing config key: " + key);
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoi(get(key));
  } catch (const std::exception&) {
    throw UsageError("config key " + key + " is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw UsageError("config key " + key + " is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key " + key + " is not a boolean: " + v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw UsageError("config key " + key + " is not an integer: " + get(key));
  }
}

void RunConfig::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write config file: " + path);
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
}

TaskConfig RunConfig::task_config() const {
  TaskConfig tc;
  tc.vocab = get_int("task.d");
  tc.length = get_int("task.length");
  tc.sub_rate = get_double("task.sub_rate");
  tc.del_rate = get_double("task.del_rate");
  tc.ins_rate = get_double("task.ins_rate");
  tc.len_min = get_int("task.len_min");
  tc.len_max = get_int("task.len_max");
  tc.eot_reserved = get_bool("task.eot");
  tc.seed = get_u64("task.seed");
  return tc;
}

Schedule RunConfig::schedule() const {
  const std::string& kind = get("sched.kind");
  if (kind == "two_way_linear") return Schedule::two_way_linear();
  if (kind == "tri_factorized") {
    return Schedule::tri_factorized(get_double("sched.p"),
                                    get_double("sched.q"));
  }
  if (kind == "custom_tabulated") {
    // Rows "t:kappa_0[:kappa_mid]:kappa_1" separated by ';'.
    const std::string& table = get("sched.table");
    if (table.empty()) {
      throw UsageError("custom_tabulated needs sched.table rows");
    }
    std::vector<std::vector<double>> rows;
    std::istringstream in(table);
    std::string row;
    while (std::getline(in, row, ';')) {
      if (row.empty()) continue;
      std::vector<double> vals;
      std::istringstream rs(row);
      std::string cell;
      while (std::getline(rs, cell, ':')) vals.push_back(std::stod(cell));
      if (!rows.empty() && vals.size() != rows.front().size()) {
        throw UsageError("sched.table rows have inconsistent widths");
      }
      rows.push_back(std::move(vals));
    }
    if (rows.empty() || rows.front().size() < 3 || rows.front().size() > 4) {
      throw UsageError("sched.table rows must be t plus 2 or 3 weights");
    }
    std::vector<double> knots;
    Eigen::MatrixXd kappas(rows.size(), rows.front().size() - 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      knots.push_back(rows[r][0]);
      for (std::size_t c = 1; c < rows[r].size(); ++c) {
        kappas(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) =
            rows[r][c];
      }
    }
    return Schedule::tabulated(std::move(knots), std::move(kappas));
  }
  throw UsageError("unknown schedule kind: " + kind);
}

SourceKind RunConfig::source_kind() const {
  const std::string& s = get("path.source");
  if (s == "uniform") return SourceKind::uniform;
  if (s == "delta") return SourceKind::delta;
  if (s == "conditioned") return SourceKind::conditioned;
  throw UsageError("unknown path source: " + s);
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tr;
  tr.steps = get_int("train.steps");
  tr.lr = get_double("train.lr");
  tr.batch = get_int("train.batch");
  tr.gumbel_temperature = get_double("train.gumbel_temperature");
  tr.condition_dropout = get_double("train.dropout");
  tr.prefix_prob = get_double("train.prefix_prob");
  return tr;
}

}  // namespace drax
