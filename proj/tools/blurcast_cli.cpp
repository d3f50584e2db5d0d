// blurcast: synth-data | train | eval | ablate | report

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "blurcast/checkpoint.hpp"
#include "blurcast/config.hpp"
#include "blurcast/data.hpp"
#include "blurcast/experiment.hpp"
#include "blurcast/kernels.hpp"

namespace fs = std::filesystem;
using namespace blurcast;

namespace {

struct Overrides {
  std::string config_path;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> tau;
  std::optional<std::size_t> eval_samples;
  std::string out;
  std::optional<bool> per_series;
  bool detach = false;
  bool blur_per_epoch = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "experiment config (JSON)");
  cmd->add_option("--variant", o.variant, "FORECAST_ONLY, DG, DI, DWC, RB or DT");
  cmd->add_option("--seed", o.seed, "single seed instead of the config's list");
  cmd->add_option("--tau", o.tau, "forecast horizon");
  cmd->add_option("--eval-samples", o.eval_samples, "blur samples averaged at evaluation");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--per-series,!--no-per-series", o.per_series, "normalize each series separately");
  cmd->add_flag("--detach-blur-from-forecaster", o.detach, "stop-gradient Y_F in the likelihood term");
  cmd->add_flag("--blur-per-epoch", o.blur_per_epoch, "reuse one blur sample for a whole epoch");
}

/// Config file plus flag overrides. `variants_given` reports whether the
/// file or the flags chose variants explicitly.
config::ExperimentConfig resolve(const Overrides& o, bool* variants_given = nullptr) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw config::ConfigError("cannot open config " + o.config_path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw config::ConfigError(o.config_path + ": " + e.what());
    }
  }
  auto cfg = config::ExperimentConfig::from_json(j);
  bool given = j.is_object() && (j.contains("variant") || j.contains("variants"));
  if (!o.variant.empty()) {
    cfg.variants = {pipeline::parse_variant(o.variant)};
    given = true;
  }
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.tau) cfg.taus = {*o.tau};
  if (o.eval_samples) cfg.eval_samples = *o.eval_samples;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.per_series) cfg.per_series = *o.per_series;
  if (o.detach) cfg.detach_blur_from_forecaster = true;
  if (o.blur_per_epoch) cfg.blur_per_epoch = true;
  cfg.validate();
  if (variants_given) *variants_given = given;
  return cfg;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_train(const Overrides& o) {
  const auto cfg = resolve(o);
  const fs::path out = cfg.out;
  int status = 0;
  for (auto tau : cfg.taus) {
    const auto data = experiment::prepare_data(cfg, tau);
    for (auto v : cfg.variants)
      for (auto seed : cfg.seeds) {
        const auto dir = out / "runs" / experiment::run_name(v, tau, seed);
        const auto m = experiment::run_single(cfg, v, tau, seed, data, dir);
        std::cout << metrics::to_json(m).dump() << '\n';
        if (!m.ok) {
          std::cerr << "error: run " << experiment::run_name(v, tau, seed) << " failed: " << m.error << '\n';
          status = 1;
        }
      }
  }
  return status;
}

int cmd_eval(const Overrides& o, const std::string& ckpt_path) {
  auto ck = checkpoint::read(ckpt_path);
  auto cfg = resolve(o);
  auto it = ck.meta.find("variant");
  if (it == ck.meta.end()) throw checkpoint::CheckpointError("checkpoint has no variant");
  const auto variant = pipeline::parse_variant(it->second);
  std::size_t tau = cfg.taus.front();
  if (!o.tau && ck.meta.count("tau")) tau = std::stoul(ck.meta.at("tau"));
  std::uint64_t seed = cfg.seeds.front();
  if (!o.seed && ck.meta.count("seed")) seed = std::stoull(ck.meta.at("seed"));
  auto params = pipeline::init_model(variant, cfg.train_config(variant, tau, seed).hyper, seed);
  checkpoint::load_into(ck, params);
  const auto data = experiment::prepare_data(cfg, tau);
  const auto ev = experiment::evaluate_test(params, data.split.test, cfg.eval_samples, seed);
  nlohmann::json j = {{"variant", std::string(pipeline::to_string(variant))},
                      {"tau", tau},
                      {"seed", seed},
                      {"test_windows", data.split.test.size()},
                      {"mse", fmt(ev.mse)},
                      {"mae", fmt(ev.mae)}};
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_ablate(const Overrides& o) {
  bool given = false;
  auto cfg = resolve(o, &given);
  if (!given) cfg.variants.assign(pipeline::kAllVariants.begin(), pipeline::kAllVariants.end());
  const fs::path out = cfg.out;
  const auto rows = experiment::run_experiment(cfg, out);
  bool complete = true;
  for (const auto& r : rows) complete = complete && r.complete;
  std::cout << (out / "report.csv").string() << '\n';
  if (!complete) {
    std::cerr << "error: some runs failed; report flags incomplete rows\n";
    return 1;
  }
  return 0;
}

int cmd_report(const Overrides& o) {
  const fs::path out = o.out.empty() ? fs::path(resolve(o).out) : fs::path(o.out);
  experiment::regenerate_report(out);
  std::cout << (out / "report.csv").string() << '\n';
  return 0;
}

int cmd_synth(const std::string& kind, std::size_t length, std::uint64_t seed, double noise, const std::string& out) {
  const auto series = data::synth_series(data::parse_synth_kind(kind), length, seed, noise);
  data::write_csv(out, series);
  std::cout << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // per-window tapes allocate and free the same sizes constantly; keep them off mmap and untrimmed
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  kernels::apply_thread_cap_from_env();

  CLI::App app{"blurcast: forecast, blur, denoise"};
  app.require_subcommand(1);

  std::string kind = "sine-mix", synth_out = "synthetic.csv";
  std::size_t length = 2059;
  std::uint64_t synth_seed = 0;
  double noise = 0.1;
  auto* synth = app.add_subcommand("synth-data", "write a synthetic series as CSV");
  synth->add_option("--kind", kind, "sine-mix, trend-seasonal or sawtooth");
  synth->add_option("--length", length, "number of time steps");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--noise", noise, "observation noise scale");
  synth->add_option("--out", synth_out, "output CSV path");

  Overrides train_o, eval_o, ablate_o, report_o;
  std::string ckpt;
  auto* train = app.add_subcommand("train", "train and evaluate one configuration");
  add_common(train, train_o);
  auto* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  auto* ablate = app.add_subcommand("ablate", "run the variant grid and write report.csv");
  add_common(ablate, ablate_o);
  auto* report = app.add_subcommand("report", "re-aggregate run outputs into report.csv");
  add_common(report, report_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (*synth) return cmd_synth(kind, length, synth_seed, noise, synth_out);
    if (*train) return cmd_train(train_o);
    if (*eval) return cmd_eval(eval_o, ckpt);
    if (*ablate) return cmd_ablate(ablate_o);
    if (*report) return cmd_report(report_o);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 2;
}
