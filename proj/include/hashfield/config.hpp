#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hashfield/accel_sim.hpp"
#include "hashfield/common.hpp"
#include "hashfield/trace.hpp"
#include "hashfield/trainer.hpp"

namespace hashfield {

/// Bad or incomplete configuration; the CLI maps it to a usage exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneSource {
  std::string source;  ///< "toy:<preset>" or a manifest file / directory
  std::size_t views = 8;
  std::size_t test_views = 0;
  std::uint32_t image_size = 64;
};

struct RunConfig {
  std::uint64_t seed = 1;
  SceneSource scene;
  TrainConfig train;
  std::string trace_out;
  SimConfig sim;
  std::string report_dir = ".";
  std::vector<std::string> warnings;
};

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed"}},
      {"scene", {"source", "views", "test_views", "image_size"}},
      {"train",
       {"mode", "density_table", "color_table", "density_freq", "color_freq", "levels", "base_resolution",
        "growth_factor", "features", "learning_rate", "mlp_learning_rate", "iterations", "batch_size",
        "samples_per_ray", "stratified", "hidden_width", "hidden_layers", "eval_every", "allow_inverted"}},
      {"trace", {"out", "begin", "end"}},
      {"sim",
       {"row_width", "frm_window", "frm", "bum", "bum_capacity", "bum_evict_after", "bum_intake", "half_precision",
        "fusion", "pipeline_depth", "systolic_dim", "adder_width", "mlp_hidden_width", "mlp_hidden_layers",
        "clock_ghz", "dram_gbps", "host_cycles_per_iteration"}},
      {"report", {"dir"}},
  };
  return keys;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  std::istringstream in(v);
  T out{};
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v.front() == '-') throw ConfigError("config key " + key + ": expected a non-negative integer");
  }
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("config key " + key + ": cannot parse '" + v + "'");
  return out;
}

class Reader {
 public:
  explicit Reader(const ptree& tree) : tree_(tree) {}

  template <typename T>
  void get(const std::string& section, const std::string& key, T& out) const {
    const auto value = tree_.get_optional<std::string>(ptree::path_type(section + "." + key, '.'));
    if (!value) return;
    const std::string name = section + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      out = parse_bool(*value, name);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out = *value;
    } else {
      out = parse_number<T>(*value, name);
    }
  }

 private:
  const ptree& tree_;
};

}  // namespace detail

/// Parses a sectioned key/value config. Unknown sections and keys are rejected.
inline RunConfig parse_run_config(std::istream& in, const std::string& origin = "<config>") {
  detail::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    const auto it = detail::known_keys().find(section);
    if (it == detail::known_keys().end()) throw ConfigError(origin + ": unknown section [" + section + "]");
    if (!body.data().empty()) throw ConfigError(origin + ": key '" + section + "' outside any section");
    for (const auto& kv : body)
      if (!it->second.contains(kv.first)) throw ConfigError(origin + ": unknown key " + section + "." + kv.first);
  }

  RunConfig c;
  const detail::Reader r(tree);
  r.get("run", "seed", c.seed);
  c.train.seed = c.seed;

  r.get("scene", "source", c.scene.source);
  r.get("scene", "views", c.scene.views);
  r.get("scene", "test_views", c.scene.test_views);
  r.get("scene", "image_size", c.scene.image_size);

  TrainConfig& t = c.train;
  std::string mode;
  r.get("train", "mode", mode);
  if (!mode.empty()) {
    if (mode == "baseline") {
      t.mode = TrainConfig::Mode::Baseline;
    } else if (mode == "decomposed") {
      t.mode = TrainConfig::Mode::Decomposed;
    } else {
      throw ConfigError("config key train.mode: expected baseline or decomposed, got '" + mode + "'");
    }
  }
  HashConfig shape = t.density_table;
  r.get("train", "levels", shape.levels);
  r.get("train", "base_resolution", shape.base_resolution);
  r.get("train", "growth_factor", shape.growth_factor);
  r.get("train", "features", shape.features_per_entry);
  std::uint32_t density_size = t.density_table.table_size, color_size = t.color_table.table_size;
  r.get("train", "density_table", density_size);
  r.get("train", "color_table", color_size);
  if (t.mode == TrainConfig::Mode::Baseline && !tree.get_optional<std::string>("train.color_table")) color_size = density_size;
  t.density_table = shape;
  t.density_table.table_size = density_size;
  t.color_table = shape;
  t.color_table.table_size = color_size;
  for (const char* key : {"density_freq", "color_freq"}) {
    std::string text;
    r.get("train", key, text);
    if (text.empty()) continue;
    try {
      (std::string(key) == "density_freq" ? t.density_freq : t.color_freq) = Frequency::parse(text);
    } catch (const ContractError& e) {
      throw ConfigError(std::string("config key train.") + key + ": " + e.what());
    }
  }
  if (t.mode == TrainConfig::Mode::Baseline) {
    t.density_freq = {1, 1};
    t.color_freq = {1, 1};
  }
  r.get("train", "learning_rate", t.learning_rate);
  r.get("train", "mlp_learning_rate", t.mlp_learning_rate);
  r.get("train", "iterations", t.iterations);
  r.get("train", "batch_size", t.batch_size);
  r.get("train", "samples_per_ray", t.samples_per_ray);
  r.get("train", "stratified", t.stratified);
  r.get("train", "hidden_width", t.hidden_width);
  r.get("train", "hidden_layers", t.hidden_layers);
  r.get("train", "eval_every", t.eval_every);
  r.get("train", "allow_inverted", t.allow_inverted);

  r.get("trace", "out", c.trace_out);
  r.get("trace", "begin", t.trace_begin);
  r.get("trace", "end", t.trace_end);

  SimConfig& s = c.sim;
  r.get("sim", "row_width", s.row_width);
  r.get("sim", "frm_window", s.frm_window);
  r.get("sim", "frm", s.frm_enabled);
  r.get("sim", "bum", s.bum_enabled);
  r.get("sim", "bum_capacity", s.bum_capacity);
  r.get("sim", "bum_evict_after", s.bum_evict_after);
  r.get("sim", "bum_intake", s.bum_intake);
  r.get("sim", "half_precision", s.half_precision);
  std::string fusion;
  r.get("sim", "fusion", fusion);
  if (fusion == "Level0") s.force_fusion = FusionLevel::Level0;
  else if (fusion == "Level1") s.force_fusion = FusionLevel::Level1;
  else if (fusion == "Level2") s.force_fusion = FusionLevel::Level2;
  else if (!fusion.empty() && fusion != "auto")
    throw ConfigError("config key sim.fusion: expected auto, Level0, Level1 or Level2, got '" + fusion + "'");
  r.get("sim", "pipeline_depth", s.pipeline_depth);
  r.get("sim", "systolic_dim", s.mlp.systolic_dim);
  r.get("sim", "adder_width", s.mlp.adder_width);
  r.get("sim", "mlp_hidden_width", s.mlp_hidden_width);
  r.get("sim", "mlp_hidden_layers", s.mlp_hidden_layers);
  r.get("sim", "clock_ghz", s.clock_ghz);
  r.get("sim", "dram_gbps", s.dram_gbps);
  r.get("sim", "host_cycles_per_iteration", s.host_cycles_per_iteration);

  r.get("report", "dir", c.report_dir);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse_run_config(in, path.string());
}

/// Checks a config for a training run. Inverted size/frequency ratios fail unless train.allow_inverted is set,
/// in which case they are recorded as warnings.
inline void validate_for_training(RunConfig& c) {
  if (c.scene.source.empty()) throw ConfigError("config key scene.source: missing scene path");
  if (c.scene.source.rfind("toy:", 0) != 0 && !std::filesystem::exists(c.scene.source))
    throw ConfigError("config key scene.source: path does not exist: " + c.scene.source);
  if (c.scene.views == 0 || c.scene.image_size == 0) throw ConfigError("config keys scene.views/scene.image_size must be positive");
  const TrainConfig& t = c.train;
  if (t.mode == TrainConfig::Mode::Decomposed) {
    if (t.density_table.table_size < t.color_table.table_size)
      c.warnings.push_back("density table smaller than color table (S_D < S_C)");
    if (t.density_freq < t.color_freq) c.warnings.push_back("density updated less often than color (F_D < F_C)");
    if (!c.warnings.empty() && !t.allow_inverted)
      throw ConfigError("inverted decomposition: " + c.warnings.front() + "; set train.allow_inverted = true to override");
  }
  try {
    t.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid [train] section: ") + e.what());
  }
  try {
    c.sim.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid [sim] section: ") + e.what());
  }
}

inline void validate_for_simulation(const RunConfig& c) {
  try {
    c.sim.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid [sim] section: ") + e.what());
  }
}

/// Trace header describing the tables a training config produces.
inline TraceHeader trace_header_for(const TrainConfig& t) {
  TraceHeader h;
  h.density_table_size = t.density_table.table_size;
  h.color_table_size = t.color_table.table_size;
  h.density_levels = t.density_table.levels;
  h.color_levels = t.color_table.levels;
  h.features_per_entry = t.density_table.features_per_entry;
  return h;
}

}  // namespace hashfield
