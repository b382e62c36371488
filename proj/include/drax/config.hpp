// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "drax/posterior.hpp"
#include "drax/scheduler.hpp"
#include "drax/synthtask.hpp"

namespace drax {

/// Flat key = value run configuration with dotted section prefixes. Every
/// command resolves its configuration against the defaults and writes the
/// result next to its outputs; re-running from that file reproduces the
/// outputs byte for byte.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  void write(const std::string& path) const;

  TaskConfig task_config() const;
  Schedule schedule() const;
  SourceKind source_kind() const;
  TrainConfig train_config() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Deterministic compute-cost model: reported runtimes count model
/// evaluations at a fixed rate instead of wall clock, so command outputs are
/// reproducible byte for byte. Wall-clock timings go to stderr only.
inline constexpr double kSecondsPerModelEval = 1e-3;

}  // namespace drax
