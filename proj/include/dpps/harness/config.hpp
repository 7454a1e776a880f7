//
// Copyright 2026 The DPPS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPPS_HARNESS_CONFIG_HPP_
#define DPPS_HARNESS_CONFIG_HPP_

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "dpps/error.hpp"
#include "dpps/partition.hpp"
#include "dpps/protocol.hpp"
#include "dpps/topology.hpp"

namespace dpps {

struct TopologyConfig {
  TopologyKind kind = TopologyKind::kExp;
  std::size_t n_nodes = 10;
  std::size_t d = 2;
  std::string rounds_file;
};

struct PrivacyConfig {
  double b = 5.0;
  double gamma_n = 0.01;
  double c_prime = 0.78;
  double lambda = 0.55;
  bool enabled = true;
};

struct ProtocolConfig {
  std::uint64_t sync_interval = 5;
  SyncResetMode sync_reset_mode = SyncResetMode::kZeroed;
  SensitivitySource sensitivity_source = SensitivitySource::kEstimate;
};

struct OptimizerSection {
  double gamma_l = 0.05;
  double gamma_s = 0.05;
  double clip_threshold = 10.0;
  std::uint64_t rounds = 200;
  std::uint64_t epochs = 0;  // when > 0, overrides rounds
  std::size_t batch_size = 32;
  std::uint64_t metrics_interval = 10;  // 0 disables the delta metrics
  std::size_t eval_batch_size = 0;  // 0 probes the whole shard
};

enum class TaskKind { kSynthetic, kMnist };

struct TaskConfig {
  TaskKind kind = TaskKind::kSynthetic;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t n_examples = 4000;
  std::size_t n_test = 1000;
  std::size_t n_features = 40;
  std::size_t n_classes = 4;
  std::size_t hidden = 4;
  double separation = 3.0;
  bool identical_init = false;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 2024;
  std::string output_dir = "out";
  TopologyConfig topology;
  PrivacyConfig privacy;
  ProtocolConfig protocol;
  OptimizerSection optimizer;
  PartitionSpec partition;
  TaskConfig task;
};

namespace internal {

using RawConfig = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Strips a trailing comment that is not inside a quoted string.
inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '"') quoted = !quoted;
    if (line[k] == '#' && !quoted) return line.substr(0, k);
  }
  return line;
}

inline std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

inline RawConfig parse_raw(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ValidationError("config line " + std::to_string(line_no) +
                              ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    raw[full] = unquote(trim(line.substr(eq + 1)));
  }
  return raw;
}

class RawReader {
 public:
  explicit RawReader(RawConfig raw) : raw_(std::move(raw)) {}

  bool has(const std::string& key) const { return raw_.count(key) != 0; }

  void read(const std::string& key, std::string& out) {
    if (auto it = take(key)) out = **it;
  }

  void read(const std::string& key, double& out) {
    if (auto it = take(key)) {
      const std::string& v = **it;
      char* end = nullptr;
      errno = 0;
      const double x = std::strtod(v.c_str(), &end);
      if (v.empty() || *end != '\0' || errno == ERANGE) fail(key, v, "a number");
      out = x;
    }
  }

  template <class Unsigned>
    requires std::is_unsigned_v<Unsigned>
  void read(const std::string& key, Unsigned& out) {
    if (auto it = take(key)) {
      const std::string& v = **it;
      char* end = nullptr;
      errno = 0;
      const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
      if (v.empty() || v[0] == '-' || *end != '\0' || errno == ERANGE) {
        fail(key, v, "a non-negative integer");
      }
      out = static_cast<Unsigned>(x);
    }
  }

  void read(const std::string& key, bool& out) {
    if (auto it = take(key)) {
      if (**it == "true") {
        out = true;
      } else if (**it == "false") {
        out = false;
      } else {
        fail(key, **it, "true or false");
      }
    }
  }

  template <class Enum>
  void read_enum(const std::string& key, Enum& out,
                 const std::vector<std::pair<std::string, Enum>>& names) {
    if (auto it = take(key)) {
      for (const auto& [name, value] : names) {
        if (**it == name) {
          out = value;
          return;
        }
      }
      std::string allowed;
      for (const auto& [name, value] : names) {
        allowed += (allowed.empty() ? "" : "|") + name;
      }
      fail(key, **it, allowed);
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : raw_) {
      if (!used_.count(key)) throw ValidationError("unknown config key: " + key);
    }
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& v,
                                const std::string& expected) {
    throw ValidationError("config key " + key + ": expected " + expected +
                          ", got '" + v + "'");
  }

 private:
  std::optional<const std::string*> take(const std::string& key) {
    const auto it = raw_.find(key);
    if (it == raw_.end()) return std::nullopt;
    used_[key] = true;
    return &it->second;
  }

  RawConfig raw_;
  std::map<std::string, bool> used_;
};

inline const std::vector<std::pair<std::string, TopologyKind>> kTopologyNames = {
    {"d_out", TopologyKind::kDOut},
    {"exp", TopologyKind::kExp},
    {"custom", TopologyKind::kCustom}};
inline const std::vector<std::pair<std::string, SyncResetMode>> kResetNames = {
    {"zeroed", SyncResetMode::kZeroed},
    {"conservative", SyncResetMode::kConservative}};
inline const std::vector<std::pair<std::string, SensitivitySource>> kSourceNames = {
    {"estimate", SensitivitySource::kEstimate},
    {"real", SensitivitySource::kReal}};
inline const std::vector<std::pair<std::string, PartitionScheme>> kSchemeNames = {
    {"share_first_k", PartitionScheme::kShareFirstK},
    {"share_all", PartitionScheme::kShareAll},
    {"custom", PartitionScheme::kCustom}};
inline const std::vector<std::pair<std::string, TaskKind>> kTaskNames = {
    {"synthetic", TaskKind::kSynthetic},
    {"mnist", TaskKind::kMnist}};

template <class Enum>
std::string enum_name(Enum value,
                      const std::vector<std::pair<std::string, Enum>>& names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "?";
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::vector<BlockRole> parse_roles(const std::string& text) {
  std::vector<BlockRole> roles;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item == "shared") {
      roles.push_back(BlockRole::kShared);
    } else if (item == "local") {
      roles.push_back(BlockRole::kLocal);
    } else {
      RawReader::fail("partition.tags", text, "comma-separated shared|local");
    }
  }
  return roles;
}

}  // namespace internal

// Rejects inconsistent configs with a message naming the key; returns
// non-fatal warnings.
inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> warnings;
  const auto& t = c.topology;
  if (t.n_nodes == 0) throw ValidationError("topology.n_nodes must be > 0");
  if (t.kind == TopologyKind::kDOut && (t.d < 2 || t.d > t.n_nodes)) {
    throw ValidationError("topology.d must satisfy 2 <= d <= n_nodes");
  }
  if (t.kind == TopologyKind::kExp && t.n_nodes < 2) {
    throw ValidationError("topology.n_nodes must be >= 2 for exp");
  }
  if (t.kind == TopologyKind::kCustom && t.rounds_file.empty()) {
    throw ValidationError("topology.rounds_file is required for custom");
  }
  const auto& p = c.privacy;
  if (!(p.b > 0.0)) throw ValidationError("privacy.b must be > 0");
  if (!(p.gamma_n > 0.0)) throw ValidationError("privacy.gamma_n must be > 0");
  if (!(p.c_prime > 0.0)) throw ValidationError("privacy.c_prime must be > 0");
  if (!(p.lambda > 0.0 && p.lambda < 1.0)) {
    throw ValidationError("privacy.lambda must lie in (0, 1)");
  }
  const auto& o = c.optimizer;
  if (!(o.gamma_l > 0.0)) throw ValidationError("optimizer.gamma_l must be > 0");
  if (!(o.gamma_s >= 0.0)) throw ValidationError("optimizer.gamma_s must be >= 0");
  if (!(o.clip_threshold > 0.0)) {
    throw ValidationError("optimizer.clip_threshold must be > 0");
  }
  if (o.rounds == 0 && o.epochs == 0) {
    throw ValidationError("optimizer.rounds must be > 0");
  }
  if (o.batch_size == 0) throw ValidationError("optimizer.batch_size must be > 0");
  if (c.partition.scheme == PartitionScheme::kShareFirstK && c.partition.k == 0) {
    throw ValidationError("partition.k must be >= 1");
  }
  if (c.partition.scheme == PartitionScheme::kCustom) {
    if (c.partition.roles.empty()) {
      throw ValidationError("partition.tags is required for custom");
    }
    bool any_shared = false;
    for (auto r : c.partition.roles) any_shared |= r == BlockRole::kShared;
    if (!any_shared) throw ValidationError("partition.tags shares no block");
  }
  const auto& task = c.task;
  if (task.kind == TaskKind::kSynthetic) {
    if (task.n_classes < 2) throw ValidationError("task.n_classes must be >= 2");
    if (task.n_classes > task.n_features) {
      throw ValidationError("task.n_classes must be <= task.n_features");
    }
    if (task.n_examples < t.n_nodes) {
      throw ValidationError("task.n_examples must be >= topology.n_nodes");
    }
    if (task.n_test == 0) throw ValidationError("task.n_test must be > 0");
  } else if (task.train_images.empty() || task.train_labels.empty() ||
             task.test_images.empty() || task.test_labels.empty()) {
    throw ValidationError(
        "task.train_images/train_labels/test_images/test_labels are required "
        "for mnist");
  }
  if (task.hidden == 0) throw ValidationError("task.hidden must be > 0");
  if (p.enabled && !(p.gamma_n < o.gamma_s / 2.0)) {
    warnings.push_back("privacy.gamma_n >= optimizer.gamma_s / 2; the "
                       "convergence step-size condition does not hold");
  }
  return warnings;
}

// Parses the sectioned key = value format. Values may be quoted strings,
// numbers or true/false. Unknown keys are errors.
inline ExperimentConfig parse_config(
    const std::string& text,
    const std::vector<std::string>& overrides = {}) {
  internal::RawConfig raw = internal::parse_raw(text);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("--set expects key=value, got '" + kv + "'");
    }
    const std::string key = internal::trim(kv.substr(0, eq));
    const std::string value = internal::unquote(internal::trim(kv.substr(eq + 1)));
    if (key == "optimizer.gamma_n" || key == "privacy.gamma_n") {
      raw["optimizer.gamma_n"] = value;
      raw["privacy.gamma_n"] = value;
    } else {
      raw[key] = value;
    }
  }
  const bool optimizer_gamma_n = raw.count("optimizer.gamma_n") != 0;
  const bool privacy_gamma_n = raw.count("privacy.gamma_n") != 0;
  if (optimizer_gamma_n && privacy_gamma_n &&
      raw["optimizer.gamma_n"] != raw["privacy.gamma_n"]) {
    throw ValidationError(
        "config keys privacy.gamma_n and optimizer.gamma_n disagree");
  }
  if (optimizer_gamma_n && !privacy_gamma_n) {
    raw["privacy.gamma_n"] = raw["optimizer.gamma_n"];
  }
  raw.erase("optimizer.gamma_n");

  ExperimentConfig c;
  internal::RawReader r(std::move(raw));
  r.read("experiment.master_seed", c.master_seed);
  r.read("experiment.output_dir", c.output_dir);

  r.read_enum("topology.kind", c.topology.kind, internal::kTopologyNames);
  r.read("topology.n_nodes", c.topology.n_nodes);
  r.read("topology.d", c.topology.d);
  r.read("topology.rounds_file", c.topology.rounds_file);

  r.read("privacy.b", c.privacy.b);
  r.read("privacy.gamma_n", c.privacy.gamma_n);
  r.read("privacy.c_prime", c.privacy.c_prime);
  r.read("privacy.lambda", c.privacy.lambda);
  r.read("privacy.enabled", c.privacy.enabled);

  r.read("protocol.sync_interval", c.protocol.sync_interval);
  r.read_enum("protocol.sync_reset_mode", c.protocol.sync_reset_mode,
              internal::kResetNames);
  r.read_enum("protocol.sensitivity_source", c.protocol.sensitivity_source,
              internal::kSourceNames);

  r.read("optimizer.gamma_l", c.optimizer.gamma_l);
  r.read("optimizer.gamma_s", c.optimizer.gamma_s);
  r.read("optimizer.clip_threshold", c.optimizer.clip_threshold);
  r.read("optimizer.rounds", c.optimizer.rounds);
  r.read("optimizer.epochs", c.optimizer.epochs);
  r.read("optimizer.batch_size", c.optimizer.batch_size);
  r.read("optimizer.metrics_interval", c.optimizer.metrics_interval);
  r.read("optimizer.eval_batch_size", c.optimizer.eval_batch_size);

  r.read_enum("partition.scheme", c.partition.scheme, internal::kSchemeNames);
  r.read("partition.k", c.partition.k);
  std::string tags;
  r.read("partition.tags", tags);
  if (!tags.empty()) c.partition.roles = internal::parse_roles(tags);

  r.read_enum("task.kind", c.task.kind, internal::kTaskNames);
  r.read("task.train_images", c.task.train_images);
  r.read("task.train_labels", c.task.train_labels);
  r.read("task.test_images", c.task.test_images);
  r.read("task.test_labels", c.task.test_labels);
  r.read("task.n_examples", c.task.n_examples);
  r.read("task.n_test", c.task.n_test);
  r.read("task.n_features", c.task.n_features);
  r.read("task.n_classes", c.task.n_classes);
  r.read("task.hidden", c.task.hidden);
  r.read("task.separation", c.task.separation);
  r.read("task.identical_init", c.task.identical_init);
  r.reject_unknown();
  return c;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

// Writes every key, defaults included, so a run is fully described by the
// emitted file.
inline std::string serialize_config(const ExperimentConfig& c) {
  using internal::enum_name;
  using internal::format_double;
  const auto quote = [](const std::string& s) { return "\"" + s + "\""; };
  const auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  std::ostringstream out;
  out << "[experiment]\n"
      << "master_seed = " << c.master_seed << "\n"
      << "output_dir = " << quote(c.output_dir) << "\n\n";
  out << "[topology]\n"
      << "kind = " << quote(enum_name(c.topology.kind, internal::kTopologyNames)) << "\n"
      << "n_nodes = " << c.topology.n_nodes << "\n"
      << "d = " << c.topology.d << "\n"
      << "rounds_file = " << quote(c.topology.rounds_file) << "\n\n";
  out << "[privacy]\n"
      << "b = " << format_double(c.privacy.b) << "\n"
      << "gamma_n = " << format_double(c.privacy.gamma_n) << "\n"
      << "c_prime = " << format_double(c.privacy.c_prime) << "\n"
      << "lambda = " << format_double(c.privacy.lambda) << "\n"
      << "enabled = " << flag(c.privacy.enabled) << "\n\n";
  out << "[protocol]\n"
      << "sync_interval = " << c.protocol.sync_interval << "\n"
      << "sync_reset_mode = "
      << quote(enum_name(c.protocol.sync_reset_mode, internal::kResetNames)) << "\n"
      << "sensitivity_source = "
      << quote(enum_name(c.protocol.sensitivity_source, internal::kSourceNames))
      << "\n\n";
  out << "[optimizer]\n"
      << "gamma_l = " << format_double(c.optimizer.gamma_l) << "\n"
      << "gamma_s = " << format_double(c.optimizer.gamma_s) << "\n"
      << "clip_threshold = " << format_double(c.optimizer.clip_threshold) << "\n"
      << "rounds = " << c.optimizer.rounds << "\n"
      << "epochs = " << c.optimizer.epochs << "\n"
      << "batch_size = " << c.optimizer.batch_size << "\n"
      << "metrics_interval = " << c.optimizer.metrics_interval << "\n"
      << "eval_batch_size = " << c.optimizer.eval_batch_size << "\n\n";
  std::string tags;
  for (auto role : c.partition.roles) {
    tags += (tags.empty() ? "" : ",") +
            std::string(role == BlockRole::kShared ? "shared" : "local");
  }
  out << "[partition]\n"
      << "scheme = " << quote(enum_name(c.partition.scheme, internal::kSchemeNames)) << "\n"
      << "k = " << c.partition.k << "\n"
      << "tags = " << quote(tags) << "\n\n";
  out << "[task]\n"
      << "kind = " << quote(enum_name(c.task.kind, internal::kTaskNames)) << "\n"
      << "train_images = " << quote(c.task.train_images) << "\n"
      << "train_labels = " << quote(c.task.train_labels) << "\n"
      << "test_images = " << quote(c.task.test_images) << "\n"
      << "test_labels = " << quote(c.task.test_labels) << "\n"
      << "n_examples = " << c.task.n_examples << "\n"
      << "n_test = " << c.task.n_test << "\n"
      << "n_features = " << c.task.n_features << "\n"
      << "n_classes = " << c.task.n_classes << "\n"
      << "hidden = " << c.task.hidden << "\n"
      << "separation = " << format_double(c.task.separation) << "\n"
      << "identical_init = " << flag(c.task.identical_init) << "\n";
  return out.str();
}

}  // namespace dpps

#endif  // DPPS_HARNESS_CONFIG_HPP_
