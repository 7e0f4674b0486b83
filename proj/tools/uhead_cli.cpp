// SPDX-License-Identifier: Apache-2.0
// uhead: command-line driver for the cache / synth / train / eval /
// retrieve / viz pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "uhead/binary_io.hpp"
#include "uhead/cache.hpp"
#include "uhead/config.hpp"
#include "uhead/eval.hpp"
#include "uhead/head.hpp"
#include "uhead/kernels.hpp"
#include "uhead/retrieval.hpp"
#include "uhead/rng.hpp"
#include "uhead/synth.hpp"
#include "uhead/trainer.hpp"
#include "uhead/viz.hpp"

namespace fs = std::filesystem;
using namespace uhead;

namespace {

constexpr const char *kVersion = "0.1.0";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

// --set section.key=value
void apply_overrides(ConfigFile &cfg, const std::vector<std::string> &sets) {
  for (const auto &s : sets) {
    const auto dot = s.find('.');
    const auto eq = s.find('=');
    require(dot != std::string::npos && eq != std::string::npos && dot < eq, ErrorCode::Config,
            "--set expects section.key=value, got '" + s + "'");
    cfg.set(s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
  }
}

ConfigFile load_config(const Common &c) {
  ConfigFile cfg = c.config.empty() ? ConfigFile::parse("", "<defaults>") : ConfigFile::load(c.config);
  apply_overrides(cfg, c.sets);
  if (c.seed)
    cfg.set("run", "seed", std::to_string(*c.seed));
  return cfg;
}

std::string out_or(const Common &c, const ConfigFile &cfg, const std::string &section, const std::string &key) {
  return c.out.empty() ? cfg.require_string(section, key) : c.out;
}

void say(const std::string &s) { std::cout << s << std::flush; }

std::vector<float> predict(const UncertaintyHead &head, MatrixView<const float> x) {
  return kernels::head_predict_parallel(head, x);
}

// ---- subcommands -----------------------------------------------------------

void run_cache_build(const Common &c) {
  auto cfg = load_config(c);
  const auto inputs = cfg.get_strings("cache", "inputs");
  require(!inputs.empty(), ErrorCode::Config, "[cache] inputs: need at least one CSV file");
  std::vector<Matrix<float>> epochs;
  std::vector<std::uint32_t> labels;
  for (std::size_t e = 0; e < inputs.size(); ++e) {
    auto csv = import_csv_epoch(inputs[e]);
    if (e == 0)
      labels = csv.labels;
    else
      require(csv.labels == labels, ErrorCode::InvalidArgument,
              inputs[e] + ": labels differ from " + inputs[0]);
    epochs.push_back(std::move(csv.embeddings));
  }
  std::uint32_t n_classes = static_cast<std::uint32_t>(cfg.get_u64("cache", "n_classes", 0));
  if (n_classes == 0)
    for (auto l : labels)
      n_classes = std::max(n_classes, l + 1);
  std::optional<ClassifierHead> clf;
  if (cfg.has("cache", "classifier"))
    clf = load_classifier(cfg.require_string("cache", "classifier"));
  CacheBuildOptions opts;
  opts.store_logits = cfg.get_bool("cache", "store_logits", true);
  const auto path = out_or(c, cfg, "cache", "out");
  const auto h = cache_build(std::move(epochs), std::move(labels), n_classes, clf ? &*clf : nullptr, path, opts);
  say("wrote " + path + " (" + std::to_string(h.file_bytes()) + " bytes)\n");
}

void run_cache_inspect(const std::string &path) {
  const auto reader = cache_open(path);
  const auto &h = reader.header();
  std::printf("version=%u\nn_samples=%llu\nn_epochs=%u\nembed_dim=%u\nn_classes=%u\nhas_losses=%d\n"
              "has_logits=%d\nfile_bytes=%llu\n",
              static_cast<unsigned>(h.version), static_cast<unsigned long long>(h.n_samples),
              static_cast<unsigned>(h.n_epochs), static_cast<unsigned>(h.embed_dim),
              static_cast<unsigned>(h.n_classes), h.has_losses ? 1 : 0, h.has_logits ? 1 : 0,
              static_cast<unsigned long long>(h.file_bytes()));
}

void run_synth(const Common &c) {
  auto cfg = load_config(c);
  const auto seed = run_seed(cfg);
  fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  if (!c.out.empty())
    fs::create_directories(dir);
  auto resolve = [&](const std::string &key, const std::string &fallback) {
    const fs::path p = cfg.get_string("synth", key, fallback);
    return p.is_absolute() ? p : dir / p;
  };
  const auto plan = synth_plan(cfg, seed);
  const auto train = synth_generate(plan.train, plan.n_samples, plan.n_epochs);
  write_cache(train.cache, resolve("train_cache", "train.ucache"));
  save_classifier(train.classifier, resolve("classifier", "classifier.txt"));
  write_text_atomic(resolve("train_bayes_risk", "train_bayes_risk.txt"), bayes_risk_text(train.bayes_risk));

  const auto eval = synth_generate(plan.eval, plan.eval_samples, 1);
  write_cache(eval.cache, resolve("eval_cache", "eval.ucache"));
  write_text_atomic(resolve("eval_bayes_risk", "eval_bayes_risk.txt"), bayes_risk_text(eval.bayes_risk));
  const double ceiling = oracle_ceiling_r_auroc(eval.cache, eval.bayes_risk);

  std::string msg = "synth: n=" + std::to_string(plan.n_samples) + " epochs=" + std::to_string(plan.n_epochs) +
                    " eval_n=" + std::to_string(plan.eval_samples);
  if (plan.ood) {
    const auto ood = synth_generate(*plan.ood, plan.eval_samples, 1);
    write_cache(ood.cache, resolve("ood_cache", "ood.ucache"));
    write_text_atomic(resolve("ood_bayes_risk", "ood_bayes_risk.txt"), bayes_risk_text(ood.bayes_risk));
    msg += " ood=yes";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " oracle_ceiling_r_auroc=%.6f\n", ceiling);
  say(msg + buf);
}

void run_train(const Common &c) {
  auto cfg = load_config(c);
  const auto seed = run_seed(cfg);
  const auto tc = train_config(cfg, seed);
  const auto reader = cache_open(cfg.require_string("train", "cache"));
  std::optional<ClassifierHead> clf;
  if (tc.loss_source == LossSource::FromClassifier)
    clf = load_classifier(cfg.require_string("train", "classifier"));
  const auto shape = head_shape(cfg, reader.header().embed_dim);
  auto head = head_init(shape, derive_seed(seed, "head-init"));
  const std::string out = out_or(c, cfg, "train", "out");
  CheckpointSink sink;
  if (tc.checkpoint_every > 0)
    sink = [&](std::uint64_t step, const UncertaintyHead &h) {
      save_checkpoint(h, out + ".step" + std::to_string(step));
    };
  auto result = train_head(reader, std::move(head), tc, clf ? &*clf : nullptr, sink);
  save_checkpoint(result.head, out);
  result.log.checkpoint = out;
  if (cfg.has("train", "log"))
    write_text_atomic(cfg.require_string("train", "log"), to_jsonl(result.log));
  const auto &last = result.log.records.back();
  char buf[160];
  std::snprintf(buf, sizeof buf, "train: steps=%llu final_loss=%.6f checkpoint=%s\n",
                static_cast<unsigned long long>(result.log.records.size()), last.mean_loss, out.c_str());
  say(buf);
}

void run_eval(const Common &c) {
  auto cfg = load_config(c);
  const auto seed = run_seed(cfg);
  const auto head = load_checkpoint(cfg.require_string("eval", "head"));
  const auto reader = cache_open(cfg.require_string("eval", "cache"));
  const auto x = reader.epoch_embeddings(0);
  const auto labels = reader.epoch_labels(0);
  const auto u = predict(head, x);

  EvalReport r;
  r.dataset = cfg.get_string("eval", "dataset", fs::path(cfg.require_string("eval", "cache")).stem().string());
  r.r_auroc = r_auroc(x, labels, std::span<const float>(u));
  r.recall_at_1 = recall_at_1(x, labels);
  if (cfg.has("eval", "bayes_risk")) {
    const auto br = parse_bayes_risk_text(read_text(cfg.require_string("eval", "bayes_risk")));
    require(br.size() == u.size(), ErrorCode::DimensionMismatch,
            "[eval] bayes_risk has " + std::to_string(br.size()) + " values, cache has " +
                std::to_string(u.size()) + " samples");
    r.oracle_ceiling_r_auroc = oracle_ceiling_r_auroc(x, labels, br);
    std::vector<double> ud(u.begin(), u.end());
    r.spearman_bayes_risk = spearman(ud, br);
    if (cfg.has("eval", "ambiguity_threshold")) {
      const auto flags = multilabel_flags(br, cfg.get_double("eval", "ambiguity_threshold", 0.0));
      r.ambiguity_auroc = ambiguity_auroc(u, flags);
    }
  }
  if (cfg.has("eval", "ood_cache")) {
    const auto ood = cache_open(cfg.require_string("eval", "ood_cache"));
    const auto uo = predict(head, ood.epoch_embeddings(0));
    r.id_ood_auroc = id_ood_auroc(u, uo);
  }
  if (cfg.has("eval", "sweep")) {
    const auto kind = perturbation_from_string(cfg.require_string("eval", "sweep"));
    const auto sev = cfg.get_doubles("eval", "severities", {0.0, 0.5, 1.0, 2.0});
    r.deterioration = deterioration_sweep(head, x, kind, sev, derive_seed(seed, "sweep"));
    if (cfg.has("eval", "curve"))
      write_text_atomic(cfg.require_string("eval", "curve"), curve_table(*r.deterioration));
  }
  const auto text = to_text(r);
  write_text_atomic(out_or(c, cfg, "eval", "out"), text);
  if (cfg.has("eval", "json"))
    write_text_atomic(cfg.require_string("eval", "json"), to_json(r));
  say(text);
}

void run_retrieve(const Common &c) {
  auto cfg = load_config(c);
  const auto policy = retrieval_policy(cfg);
  const auto head = load_checkpoint(cfg.require_string("retrieve", "head"));
  const auto qr = cache_open(cfg.require_string("retrieve", "queries"));
  const auto dr = cache_open(cfg.require_string("retrieve", "database"));
  const auto q = qr.epoch_embeddings(0);
  const auto d = dr.epoch_embeddings(0);
  const auto ql = qr.epoch_labels(0);
  const auto dl = dr.epoch_labels(0);
  const auto uq = predict(head, q);
  const auto ud = predict(head, d);
  const auto kept = clean_database(ud, std::span<const std::uint32_t>(dl), policy);
  const auto outcome = safe_retrieve(q, uq, d, kept, policy, std::span<const std::uint32_t>(ql),
                                     std::span<const std::uint32_t>(dl));
  const auto text = to_text(outcome, policy);
  write_text_atomic(out_or(c, cfg, "retrieve", "out"), text);
  if (cfg.has("retrieve", "json"))
    write_text_atomic(cfg.require_string("retrieve", "json"), to_json(outcome, policy));
  say(text);
}

void run_viz(const Common &c) {
  auto cfg = load_config(c);
  const auto seed = run_seed(cfg);
  const auto head = load_checkpoint(cfg.require_string("viz", "head"));
  const auto reader = cache_open(cfg.require_string("viz", "cache"));
  auto x = reader.epoch_embeddings(0);
  auto labels = reader.epoch_labels(0);
  const auto max_points = cfg.get_u64("viz", "max_points", 1000);
  if (x.rows() > max_points) {
    const auto perm = random_permutation(x.rows(), derive_seed(seed, "viz-subsample"));
    std::vector<std::size_t> pick(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(max_points));
    std::sort(pick.begin(), pick.end());
    x = gather_rows<float>(x, pick);
    std::vector<std::uint32_t> l2;
    for (auto i : pick)
      l2.push_back(labels[i]);
    labels = std::move(l2);
  }
  const auto u = predict(head, x);
  const auto tc = tsne_config(cfg, seed);
  const auto style = scatter_style(cfg);
  const auto res = tsne_embed(x, tc);
  const auto svg = out_or(c, cfg, "viz", "svg");
  render_scatter(res.coords, labels, u, style, svg);
  if (cfg.has("viz", "table"))
    write_text_atomic(cfg.require_string("viz", "table"), coordinate_table(res.coords, labels, u));
  char buf[160];
  std::snprintf(buf, sizeof buf, "viz: n=%zu initial_kl=%.6f final_kl=%.6f svg=%s\n", x.rows(), res.initial_kl,
                res.final_kl, svg.c_str());
  say(buf);
}

int exit_code(ErrorCode code) {
  switch (code) {
  case ErrorCode::Config:
  case ErrorCode::InvalidArgument:
    return 2;
  case ErrorCode::Io:
    return 3;
  case ErrorCode::Corrupt:
    return 4;
  default:
    return 1;
  }
}

void add_common(CLI::App *sub, Common &c, bool with_out = true) {
  sub->footer("Defaults (config file syntax):\n\n" + default_config_text());
  sub->add_option("-c,--config", c.config, "Run config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Override [run] seed");
  if (with_out)
    sub->add_option("-o,--out", c.out, "Override the primary output path");
  sub->add_option("--set", c.sets, "Override a config value: section.key=value");
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"uhead: pretrain, evaluate and apply loss-prediction uncertainty heads on cached embeddings"};
  app.set_version_flag("--version", std::string("uhead ") + kVersion);
  app.footer("Defaults (config file syntax):\n\n" + default_config_text());
  app.require_subcommand(1);

  Common common;
  std::string inspect_path;
  auto *cache = app.add_subcommand("cache", "Build or inspect an embedding cache");
  cache->require_subcommand(1);
  auto *build = cache->add_subcommand("build", "Build a cache from per-epoch CSV files");
  add_common(build, common);
  auto *inspect = cache->add_subcommand("inspect", "Print the header of a cache file");
  inspect->add_option("file", inspect_path, "Cache file")->required();

  auto *synth = app.add_subcommand("synth", "Generate synthetic caches with closed-form Bayes risk");
  add_common(synth, common);
  auto *train = app.add_subcommand("train", "Train an uncertainty head on a cache");
  add_common(train, common);
  auto *eval = app.add_subcommand("eval", "Evaluate a head and write an EvalReport");
  add_common(eval, common);
  auto *retrieve = app.add_subcommand("retrieve", "Uncertainty-aware 1-NN retrieval");
  add_common(retrieve, common);
  auto *viz = app.add_subcommand("viz", "tSNE scatter plot with uncertainty-scaled markers");
  add_common(viz, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    if (*build)
      run_cache_build(common);
    else if (*inspect)
      run_cache_inspect(inspect_path);
    else if (*synth)
      run_synth(common);
    else if (*train)
      run_train(common);
    else if (*eval)
      run_eval(common);
    else if (*retrieve)
      run_retrieve(common);
    else if (*viz)
      run_viz(common);
  } catch (const Error &e) {
    std::fprintf(stderr, "error[%s]: %s\n", to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
