// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uhead/eval.hpp"
#include "uhead/head.hpp"
#include "uhead/retrieval.hpp"
#include "uhead/synth.hpp"
#include "uhead/trainer.hpp"
#include "uhead/viz.hpp"

namespace uhead {

/// Allowed keys per section; anything else is rejected at parse time.
using ConfigSchema = std::map<std::string, std::set<std::string>>;

const ConfigSchema &run_config_schema();

/// Line-oriented "key = value" file with "[section]" headers and '#'
/// comments. Values are kept as strings and typed on access; every error
/// names the file, line and key.
class ConfigFile {
public:
  static ConfigFile parse(const std::string &text, const std::string &origin,
                          const ConfigSchema &schema = run_config_schema());
  static ConfigFile load(const std::filesystem::path &path,
                         const ConfigSchema &schema = run_config_schema());

  bool has(const std::string &section, const std::string &key) const;
  void set(const std::string &section, const std::string &key, const std::string &value);

  std::string get_string(const std::string &section, const std::string &key,
                         const std::string &fallback) const;
  std::string require_string(const std::string &section, const std::string &key) const;
  std::optional<std::string> find(const std::string &section, const std::string &key) const;
  double get_double(const std::string &section, const std::string &key, double fallback) const;
  std::uint64_t get_u64(const std::string &section, const std::string &key, std::uint64_t fallback) const;
  bool get_bool(const std::string &section, const std::string &key, bool fallback) const;
  std::vector<double> get_doubles(const std::string &section, const std::string &key,
                                  const std::vector<double> &fallback) const;
  std::vector<std::string> get_strings(const std::string &section, const std::string &key) const;

private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  std::string where(const std::string &section, const std::string &key) const;

  std::string origin_;
  std::map<std::string, std::map<std::string, Entry>> sections_;
  ConfigSchema schema_;
};

// Typed views of the sections. Defaults come from the default-constructed
// structs, so the documented defaults and the code cannot drift apart.
std::uint64_t run_seed(const ConfigFile &cfg);
SyntheticOracle synth_oracle(const ConfigFile &cfg, std::uint64_t seed);
/// The three oracles behind `uhead synth`: training set, held-out set and
/// an optional OOD set shifted orthogonally to the class axis.
struct SynthPlan {
  SyntheticOracle train, eval;
  std::optional<SyntheticOracle> ood;
  std::size_t n_samples = 4000;
  std::size_t eval_samples = 4000;
  std::size_t n_epochs = 4;
};
SynthPlan synth_plan(const ConfigFile &cfg, std::uint64_t seed);

HeadShape head_shape(const ConfigFile &cfg, std::uint32_t input_dim);
TrainConfig train_config(const ConfigFile &cfg, std::uint64_t seed);
RetrievalPolicy retrieval_policy(const ConfigFile &cfg);
TsneConfig tsne_config(const ConfigFile &cfg, std::uint64_t seed);
ScatterStyle scatter_style(const ConfigFile &cfg);

/// The defaults as a config file body, for --help and docs.
std::string default_config_text();

} // namespace uhead
