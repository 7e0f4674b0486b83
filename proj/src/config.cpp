// SPDX-License-Identifier: Apache-2.0
#include "uhead/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "uhead/binary_io.hpp"
#include "uhead/rng.hpp"

namespace uhead {
namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same value.
template <class T> std::string num(T v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, p);
}

} // namespace

const ConfigSchema &run_config_schema() {
  static const ConfigSchema schema = {
      {"run", {"seed"}},
      {"synth",
       {"n_classes", "embed_dim", "mean_scale", "sigma", "noise_max", "noise_width", "view_jitter",
        "n_samples", "n_epochs", "eval_samples", "train_cache", "eval_cache", "classifier",
        "train_bayes_risk", "eval_bayes_risk", "ood_shift", "ood_cache", "ood_bayes_risk"}},
      {"cache", {"inputs", "n_classes", "classifier", "out", "store_logits"}},
      {"head", {"hidden_dim", "leaky_slope", "softplus_beta", "softplus_threshold"}},
      {"train",
       {"cache", "classifier", "out", "log", "loss", "margin", "leeway", "batch_size", "optimizer",
        "beta1", "beta2", "eps", "weight_decay", "momentum", "lr_start", "lr_peak", "lr_final",
        "warmup_steps", "total_steps", "episode_size", "warmup_episodes", "total_episodes",
        "checkpoint_every", "loss_source"}},
      {"eval",
       {"cache", "head", "out", "json", "dataset", "bayes_risk", "ambiguity_threshold", "ood_cache",
        "sweep", "severities", "curve"}},
      {"retrieve",
       {"queries", "database", "head", "reject_fraction", "clean_fraction", "clean_mode", "out", "json"}},
      {"viz",
       {"cache", "head", "svg", "table", "perplexity", "iterations", "learning_rate", "max_points",
        "base_radius", "radius_scale"}},
  };
  return schema;
}

ConfigFile ConfigFile::parse(const std::string &text, const std::string &origin, const ConfigSchema &schema) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  cfg.schema_ = schema;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const std::string loc = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      require(line.back() == ']', ErrorCode::Config, loc + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      require(schema.count(section) == 1, ErrorCode::Config, loc + ": unknown section [" + section + "]");
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::Config, loc + ": expected 'key = value'");
    require(!section.empty(), ErrorCode::Config, loc + ": key outside of any section");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    require(schema.at(section).count(key) == 1, ErrorCode::Config,
            loc + ": unknown key '" + key + "' in [" + section + "]");
    require(cfg.sections_[section].count(key) == 0, ErrorCode::Config,
            loc + ": duplicate key '" + key + "' in [" + section + "]");
    cfg.sections_[section][key] = {value, lineno};
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path &path, const ConfigSchema &schema) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error &e) {
    fail(ErrorCode::Config, std::string("cannot read config: ") + e.what());
  }
  return parse(text, path.string(), schema);
}

std::string ConfigFile::where(const std::string &section, const std::string &key) const {
  auto s = sections_.find(section);
  if (s != sections_.end()) {
    auto k = s->second.find(key);
    if (k != s->second.end() && k->second.line > 0)
      return origin_ + ":" + std::to_string(k->second.line) + ": [" + section + "] " + key;
  }
  return origin_ + ": [" + section + "] " + key;
}

bool ConfigFile::has(const std::string &section, const std::string &key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) == 1;
}

void ConfigFile::set(const std::string &section, const std::string &key, const std::string &value) {
  require(schema_.count(section) == 1 && schema_.at(section).count(key) == 1, ErrorCode::Config,
          "override: unknown key '" + key + "' in [" + section + "]");
  sections_[section][key] = {value, 0};
}

std::optional<std::string> ConfigFile::find(const std::string &section, const std::string &key) const {
  if (!has(section, key))
    return std::nullopt;
  return sections_.at(section).at(key).value;
}

std::string ConfigFile::get_string(const std::string &section, const std::string &key,
                                   const std::string &fallback) const {
  return find(section, key).value_or(fallback);
}

std::string ConfigFile::require_string(const std::string &section, const std::string &key) const {
  auto v = find(section, key);
  require(v.has_value() && !v->empty(), ErrorCode::Config,
          origin_ + ": missing required key '" + key + "' in [" + section + "]");
  return *v;
}

double ConfigFile::get_double(const std::string &section, const std::string &key, double fallback) const {
  auto v = find(section, key);
  if (!v)
    return fallback;
  char *end = nullptr;
  errno = 0;
  const double d = std::strtod(v->c_str(), &end);
  require(!v->empty() && end && *end == '\0' && errno == 0 && std::isfinite(d), ErrorCode::Config,
          where(section, key) + ": expected a number, got '" + *v + "'");
  return d;
}

std::uint64_t ConfigFile::get_u64(const std::string &section, const std::string &key,
                                  std::uint64_t fallback) const {
  auto v = find(section, key);
  if (!v)
    return fallback;
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  require(!v->empty() && ec == std::errc() && p == v->data() + v->size(), ErrorCode::Config,
          where(section, key) + ": expected a nonnegative integer, got '" + *v + "'");
  return out;
}

bool ConfigFile::get_bool(const std::string &section, const std::string &key, bool fallback) const {
  auto v = find(section, key);
  if (!v)
    return fallback;
  if (*v == "true" || *v == "1" || *v == "yes")
    return true;
  if (*v == "false" || *v == "0" || *v == "no")
    return false;
  fail(ErrorCode::Config, where(section, key) + ": expected true/false, got '" + *v + "'");
}

std::vector<std::string> ConfigFile::get_strings(const std::string &section, const std::string &key) const {
  std::vector<std::string> out;
  auto v = find(section, key);
  if (!v)
    return out;
  std::istringstream in(*v);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty())
      out.push_back(tok);
  }
  return out;
}

std::vector<double> ConfigFile::get_doubles(const std::string &section, const std::string &key,
                                            const std::vector<double> &fallback) const {
  if (!has(section, key))
    return fallback;
  std::vector<double> out;
  for (const auto &tok : get_strings(section, key)) {
    char *end = nullptr;
    const double d = std::strtod(tok.c_str(), &end);
    require(end && *end == '\0' && std::isfinite(d), ErrorCode::Config,
            where(section, key) + ": bad number '" + tok + "' in list");
    out.push_back(d);
  }
  return out;
}

std::uint64_t run_seed(const ConfigFile &cfg) { return cfg.get_u64("run", "seed", 0); }

SyntheticOracle synth_oracle(const ConfigFile &cfg, std::uint64_t seed) {
  SyntheticOracle o;
  o.n_classes = static_cast<std::uint32_t>(cfg.get_u64("synth", "n_classes", o.n_classes));
  o.embed_dim = static_cast<std::uint32_t>(cfg.get_u64("synth", "embed_dim", o.embed_dim));
  o.mean_scale = cfg.get_double("synth", "mean_scale", o.mean_scale);
  o.sigma = cfg.get_double("synth", "sigma", o.sigma);
  o.noise_max = cfg.get_double("synth", "noise_max", o.noise_max);
  o.noise_width = cfg.get_double("synth", "noise_width", o.noise_width);
  o.view_jitter = cfg.get_double("synth", "view_jitter", o.view_jitter);
  o.seed = seed;
  try {
    validate(o);
  } catch (const Error &e) {
    fail(ErrorCode::Config, std::string("[synth]: ") + e.what());
  }
  return o;
}

SynthPlan synth_plan(const ConfigFile &cfg, std::uint64_t seed) {
  SynthPlan p;
  p.n_samples = cfg.get_u64("synth", "n_samples", p.n_samples);
  p.eval_samples = cfg.get_u64("synth", "eval_samples", p.n_samples);
  p.n_epochs = cfg.get_u64("synth", "n_epochs", p.n_epochs);
  p.train = synth_oracle(cfg, derive_seed(seed, "synth"));
  p.eval = synth_oracle(cfg, derive_seed(seed, "synth-eval"));
  if (cfg.has("synth", "ood_shift")) {
    auto o = synth_oracle(cfg, derive_seed(seed, "synth-ood"));
    require(o.embed_dim >= 2, ErrorCode::Config, "[synth] ood_shift needs embed_dim >= 2");
    // Class means lie on the first axes for two classes; moving along
    // axis 1 leaves the Bayes-risk distribution unchanged.
    require(o.n_classes == 2, ErrorCode::Config, "[synth] ood_shift is defined for two classes");
    o.offset.assign(o.embed_dim, 0.0);
    o.offset[1] = cfg.get_double("synth", "ood_shift", 0.0);
    p.ood = o;
  }
  return p;
}

HeadShape head_shape(const ConfigFile &cfg, std::uint32_t input_dim) {
  HeadShape s;
  s.input_dim = input_dim;
  s.hidden_dim = static_cast<std::uint32_t>(cfg.get_u64("head", "hidden_dim", s.hidden_dim));
  s.leaky_slope = static_cast<float>(cfg.get_double("head", "leaky_slope", s.leaky_slope));
  s.softplus_beta = static_cast<float>(cfg.get_double("head", "softplus_beta", s.softplus_beta));
  s.softplus_threshold = static_cast<float>(cfg.get_double("head", "softplus_threshold", s.softplus_threshold));
  return s;
}

TrainConfig train_config(const ConfigFile &cfg, std::uint64_t seed) {
  TrainConfig t;
  const auto loss = cfg.get_string("train", "loss", "ranking");
  if (loss == "ranking")
    t.loss.kind = LossKind::RankingMargin;
  else if (loss == "l2")
    t.loss.kind = LossKind::L2Regression;
  else
    fail(ErrorCode::Config, "[train] loss: expected 'ranking' or 'l2', got '" + loss + "'");
  t.loss.margin = cfg.get_double("train", "margin", t.loss.margin);
  t.loss.leeway = cfg.get_double("train", "leeway", t.loss.leeway);
  t.batch_size = cfg.get_u64("train", "batch_size", t.batch_size);

  const auto opt = cfg.get_string("train", "optimizer", "adamw");
  if (opt == "adamw")
    t.optimizer.kind = OptimizerKind::AdamW;
  else if (opt == "sgd")
    t.optimizer.kind = OptimizerKind::SGD;
  else
    fail(ErrorCode::Config, "[train] optimizer: expected 'adamw' or 'sgd', got '" + opt + "'");
  t.optimizer.beta1 = cfg.get_double("train", "beta1", t.optimizer.beta1);
  t.optimizer.beta2 = cfg.get_double("train", "beta2", t.optimizer.beta2);
  t.optimizer.eps = cfg.get_double("train", "eps", t.optimizer.eps);
  t.optimizer.weight_decay = cfg.get_double("train", "weight_decay", t.optimizer.weight_decay);
  t.optimizer.momentum = cfg.get_double("train", "momentum", t.optimizer.momentum);

  if (cfg.has("train", "episode_size")) {
    t.schedule = schedule_from_episodes(cfg.get_double("train", "warmup_episodes", 25),
                                        cfg.get_double("train", "total_episodes", 460),
                                        cfg.get_u64("train", "episode_size", 1), t.batch_size);
  } else {
    t.schedule.warmup_steps = cfg.get_u64("train", "warmup_steps", t.schedule.warmup_steps);
    t.schedule.total_steps = cfg.get_u64("train", "total_steps", t.schedule.total_steps);
  }
  t.schedule.warmup_start_lr = cfg.get_double("train", "lr_start", t.schedule.warmup_start_lr);
  t.schedule.peak_lr = cfg.get_double("train", "lr_peak", t.schedule.peak_lr);
  t.schedule.final_lr = cfg.get_double("train", "lr_final", t.schedule.final_lr);
  t.checkpoint_every = cfg.get_u64("train", "checkpoint_every", 0);

  const auto src = cfg.get_string("train", "loss_source", "stored");
  if (src == "stored")
    t.loss_source = LossSource::Stored;
  else if (src == "logits")
    t.loss_source = LossSource::FromLogits;
  else if (src == "classifier")
    t.loss_source = LossSource::FromClassifier;
  else
    fail(ErrorCode::Config, "[train] loss_source: expected stored|logits|classifier, got '" + src + "'");
  t.seed = derive_seed(seed, "train");
  try {
    validate(t);
  } catch (const Error &e) {
    fail(ErrorCode::Config, std::string("[train]: ") + e.what());
  }
  return t;
}

RetrievalPolicy retrieval_policy(const ConfigFile &cfg) {
  RetrievalPolicy p;
  p.query_reject_fraction = cfg.get_double("retrieve", "reject_fraction", p.query_reject_fraction);
  p.database_clean_fraction = cfg.get_double("retrieve", "clean_fraction", p.database_clean_fraction);
  if (cfg.has("retrieve", "clean_mode")) {
    try {
      p.clean_mode = clean_mode_from_string(cfg.get_string("retrieve", "clean_mode", ""));
    } catch (const Error &e) {
      fail(ErrorCode::Config, std::string("[retrieve]: ") + e.what());
    }
  }
  try {
    validate(p);
  } catch (const Error &e) {
    fail(ErrorCode::Config, std::string("[retrieve]: ") + e.what());
  }
  return p;
}

TsneConfig tsne_config(const ConfigFile &cfg, std::uint64_t seed) {
  TsneConfig t;
  t.perplexity = cfg.get_double("viz", "perplexity", t.perplexity);
  t.iterations = static_cast<std::uint32_t>(cfg.get_u64("viz", "iterations", t.iterations));
  t.learning_rate = cfg.get_double("viz", "learning_rate", t.learning_rate);
  t.seed = derive_seed(seed, "tsne");
  return t;
}

ScatterStyle scatter_style(const ConfigFile &cfg) {
  ScatterStyle s;
  s.base_radius = cfg.get_double("viz", "base_radius", s.base_radius);
  s.radius_scale = cfg.get_double("viz", "radius_scale", s.radius_scale);
  validate(s);
  return s;
}

std::string default_config_text() {
  const HeadShape h;
  const TrainConfig t;
  const RetrievalPolicy r;
  const TsneConfig v;
  const SyntheticOracle o;
  std::string s;
  s += "[run]\nseed = 0\n\n";
  s += "[head]\n";
  s += "hidden_dim = " + std::to_string(h.hidden_dim) + "\n";
  s += "leaky_slope = " + num(h.leaky_slope) + "\n";
  s += "softplus_beta = " + num(h.softplus_beta) + "\n";
  s += "softplus_threshold = " + num(h.softplus_threshold) + "\n\n";
  s += "[train]\n";
  s += "loss = ranking\n";
  s += "margin = " + num(t.loss.margin) + "\n";
  s += "leeway = " + num(t.loss.leeway) + "\n";
  s += "batch_size = " + std::to_string(t.batch_size) + "\n";
  s += "optimizer = adamw\n";
  s += "beta1 = " + num(t.optimizer.beta1) + "\n";
  s += "beta2 = " + num(t.optimizer.beta2) + "\n";
  s += "eps = " + num(t.optimizer.eps) + "\n";
  s += "weight_decay = " + num(t.optimizer.weight_decay) + "\n";
  s += "momentum = " + num(t.optimizer.momentum) + "\n";
  s += "lr_start = " + num(t.schedule.warmup_start_lr) + "\n";
  s += "lr_peak = " + num(t.schedule.peak_lr) + "\n";
  s += "lr_final = " + num(t.schedule.final_lr) + "\n";
  s += "warmup_steps = " + std::to_string(t.schedule.warmup_steps) + "\n";
  s += "total_steps = " + std::to_string(t.schedule.total_steps) + "\n";
  s += "loss_source = stored\n\n";
  s += "[retrieve]\n";
  s += "reject_fraction = " + num(r.query_reject_fraction) + "\n";
  s += "clean_fraction = " + num(r.database_clean_fraction) + "\n";
  s += std::string("clean_mode = ") + to_string(r.clean_mode) + "\n\n";
  s += "[viz]\n";
  s += "perplexity = " + num(v.perplexity) + "\n";
  s += "iterations = " + std::to_string(v.iterations) + "\n";
  s += "learning_rate = " + num(v.learning_rate) + "\n\n";
  s += "[synth]\n";
  s += "n_classes = " + std::to_string(o.n_classes) + "\n";
  s += "embed_dim = " + std::to_string(o.embed_dim) + "\n";
  s += "sigma = " + num(o.sigma) + "\n";
  s += "noise_max = " + num(o.noise_max) + "\n";
  s += "view_jitter = " + num(o.view_jitter) + "\n";
  return s;
}

} // namespace uhead
