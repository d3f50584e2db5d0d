#include "blurcast/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace blurcast::config {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (variants.empty()) throw ConfigError("no variants configured");
  if (taus.empty()) throw ConfigError("no horizons configured");
  if (seeds.empty()) throw ConfigError("seed list must be nonempty");
  if (kappa == 0 || stride == 0) throw ConfigError("kappa and stride must be >= 1");
  for (auto t : taus)
    if (t == 0) throw ConfigError("tau must be >= 1");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model must be divisible by n_heads");
  if (n_layers == 0 || batch == 0 || epochs == 0 || warmup == 0 || eval_samples == 0 || inducing == 0)
    throw ConfigError("n_layers, batch, epochs, warmup, eval_samples and M must be >= 1");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (dataset.source != "synthetic" && dataset.source != "csv")
    throw ConfigError("dataset.source must be 'synthetic' or 'csv'");
  if (dataset.source == "csv" && dataset.path.empty()) throw ConfigError("dataset.path is required for csv");
}

json ExperimentConfig::to_json() const {
  json vs = json::array();
  for (auto v : variants) vs.push_back(std::string(pipeline::to_string(v)));
  json ds = {{"source", dataset.source}};
  if (dataset.source == "synthetic") {
    ds["kind"] = dataset.kind;
    ds["windows"] = dataset.windows;
    ds["series"] = dataset.series;
    ds["noise"] = dataset.noise;
    ds["seed"] = dataset.seed;
  } else {
    ds["path"] = dataset.path;
    ds["target"] = dataset.target;
    ds["timestamp"] = dataset.timestamp;
    if (!dataset.id_column.empty()) ds["id_column"] = dataset.id_column;
  }
  return json{{"variants", vs},
              {"kappa", kappa},
              {"taus", taus},
              {"stride", stride},
              {"d_model", d_model},
              {"n_layers", n_layers},
              {"n_heads", n_heads},
              {"ff_mult", ff_mult},
              {"M", inducing},
              {"lambda", lambda},
              {"batch", batch},
              {"epochs", epochs},
              {"warmup", warmup},
              {"seeds", seeds},
              {"eval_samples", eval_samples},
              {"per_series", per_series},
              {"detach_blur_from_forecaster", detach_blur_from_forecaster},
              {"blur_per_epoch", blur_per_epoch},
              {"clip_norm", clip_norm},
              {"dataset", ds},
              {"out", out}};
}

namespace {

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) {
    try {
      dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j,
             {"variant", "variants", "kappa", "tau", "taus", "stride", "d_model", "n_layers", "n_heads", "ff_mult", "M",
              "lambda", "batch", "epochs", "warmup", "seed", "seeds", "eval_samples", "per_series",
              "detach_blur_from_forecaster", "blur_per_epoch", "clip_norm", "dataset", "out"},
             "config");
  ExperimentConfig c;
  for (const char* key : {"variant", "variants"}) {
    if (!j.contains(key)) continue;
    const auto& v = j.at(key);
    c.variants.clear();
    try {
      if (v.is_string())
        c.variants.push_back(pipeline::parse_variant(v.get<std::string>()));
      else
        for (const auto& e : v) c.variants.push_back(pipeline::parse_variant(e.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  for (const char* key : {"tau", "taus"}) {
    if (!j.contains(key)) continue;
    const auto& v = j.at(key);
    c.taus = v.is_array() ? v.get<std::vector<std::size_t>>() : std::vector<std::size_t>{v.get<std::size_t>()};
  }
  if (j.contains("seed")) c.seeds = {j.at("seed").get<std::uint64_t>()};
  take(j, "seeds", c.seeds);
  take(j, "kappa", c.kappa);
  take(j, "stride", c.stride);
  take(j, "d_model", c.d_model);
  take(j, "n_layers", c.n_layers);
  take(j, "n_heads", c.n_heads);
  take(j, "ff_mult", c.ff_mult);
  take(j, "M", c.inducing);
  take(j, "lambda", c.lambda);
  take(j, "batch", c.batch);
  take(j, "epochs", c.epochs);
  take(j, "warmup", c.warmup);
  take(j, "eval_samples", c.eval_samples);
  take(j, "per_series", c.per_series);
  take(j, "detach_blur_from_forecaster", c.detach_blur_from_forecaster);
  take(j, "blur_per_epoch", c.blur_per_epoch);
  take(j, "clip_norm", c.clip_norm);
  take(j, "out", c.out);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"source", "kind", "windows", "series", "noise", "seed", "path", "target", "timestamp", "id_column"},
               "dataset");
    take(d, "source", c.dataset.source);
    take(d, "kind", c.dataset.kind);
    take(d, "windows", c.dataset.windows);
    take(d, "series", c.dataset.series);
    take(d, "noise", c.dataset.noise);
    take(d, "seed", c.dataset.seed);
    take(d, "path", c.dataset.path);
    take(d, "target", c.dataset.target);
    take(d, "timestamp", c.dataset.timestamp);
    take(d, "id_column", c.dataset.id_column);
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("out");
  const std::string canon = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

pipeline::TrainConfig ExperimentConfig::train_config(pipeline::Variant v, std::size_t tau, std::uint64_t seed) const {
  pipeline::TrainConfig t;
  t.variant = v;
  t.hyper.d_model = d_model;
  t.hyper.n_layers = n_layers;
  t.hyper.n_heads = n_heads;
  t.hyper.ff_mult = ff_mult;
  t.hyper.tau = tau;
  t.hyper.inducing = inducing;
  t.loss.lambda = lambda;
  t.batch = batch;
  t.epochs = epochs;
  t.warmup = warmup;
  t.seed = seed;
  t.eval_samples = eval_samples;
  t.clip_norm = clip_norm;
  t.detach_blur_from_forecaster = detach_blur_from_forecaster;
  t.blur_per_epoch = blur_per_epoch;
  return t;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

std::vector<data::RawSeries> load_dataset(const DatasetSpec& spec, const data::WindowConfig& window) {
  if (spec.source == "csv") {
    if (spec.id_column.empty()) return {data::load_csv(spec.path, spec.target, spec.timestamp)};
    return data::load_csv_grouped(spec.path, spec.target, spec.timestamp, spec.id_column);
  }
  if (spec.windows < 10) throw ConfigError("dataset.windows must be >= 10");
  const auto kind = data::parse_synth_kind(spec.kind);
  const std::size_t length = (spec.windows - 1) * window.stride + window.kappa + window.tau;
  if (length < window.kappa + window.tau + 10)
    throw ConfigError("synthetic series shorter than kappa + tau + 10");
  std::vector<data::RawSeries> out;
  for (std::size_t i = 0; i < spec.series; ++i) {
    auto s = data::synth_series(kind, length, spec.seed + i, spec.noise);
    s.name += "-" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace blurcast::config
