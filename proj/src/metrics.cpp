#include "blurcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <cstdio>

namespace blurcast::metrics {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw ShapeError("empty input");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t variant_rank(pipeline::Variant v) {
  return static_cast<std::size_t>(std::find(pipeline::kAllVariants.begin(), pipeline::kAllVariants.end(), v) -
                                  pipeline::kAllVariants.begin());
}

}  // namespace

double mse(std::span<const double> y_true, std::span<const double> y_pred) {
  check_lengths(y_true, y_pred);
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

double mae(std::span<const double> y_true, std::span<const double> y_pred) {
  check_lengths(y_true, y_pred);
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += std::abs(y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

MeanStderr mean_stderr(std::span<const double> xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

nlohmann::json to_json(const RunMetrics& r) {
  return {{"variant", std::string(pipeline::to_string(r.variant))},
          {"tau", r.tau},
          {"seed", r.seed},
          {"ok", r.ok},
          {"error", r.error},
          {"mse", fmt(r.mse)},
          {"mae", fmt(r.mae)},
          {"incidents", r.incidents},
          {"best_epoch", r.best_epoch},
          {"config_hash", r.config_hash}};
}

RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  RunMetrics r;
  r.variant = pipeline::parse_variant(j.at("variant").get<std::string>());
  r.tau = j.at("tau").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("ok").get<bool>();
  r.error = j.value("error", "");
  r.mse = std::stod(j.at("mse").get<std::string>());
  r.mae = std::stod(j.at("mae").get<std::string>());
  r.incidents = j.value("incidents", std::size_t{0});
  r.best_epoch = j.value("best_epoch", std::size_t{0});
  r.config_hash = j.value("config_hash", "");
  return r;
}

std::vector<MetricReport> aggregate(const std::vector<RunMetrics>& runs) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const RunMetrics*>> groups;
  for (const auto& r : runs) groups[{variant_rank(r.variant), r.tau}].push_back(&r);

  std::vector<MetricReport> out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    MetricReport row;
    row.variant = members.front()->variant;
    row.tau = key.second;
    std::vector<double> ms, as;
    for (const auto* r : members) {
      if (row.config_hash.empty()) row.config_hash = r->config_hash;
      if (!r->ok) {
        row.complete = false;
        continue;
      }
      ms.push_back(r->mse);
      as.push_back(r->mae);
      row.seed_list.push_back(r->seed);
    }
    row.seeds = ms.size();
    const auto m = mean_stderr(ms);
    const auto a = mean_stderr(as);
    row.mse_mean = m.mean;
    row.mse_stderr = m.stderr_;
    row.mae_mean = a.mean;
    row.mae_stderr = a.stderr_;
    out.push_back(std::move(row));
  }
  return out;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<MetricReport>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "variant,tau,seeds,mse_mean,mse_stderr,mae_mean,mae_stderr,config_hash,seed_list,complete\n";
  for (const auto& r : rows) {
    std::string seeds;
    for (auto s : r.seed_list) seeds += (seeds.empty() ? "" : ";") + std::to_string(s);
    out << pipeline::to_string(r.variant) << ',' << r.tau << ',' << r.seeds << ',' << fmt(r.mse_mean) << ','
        << fmt(r.mse_stderr) << ',' << fmt(r.mae_mean) << ',' << fmt(r.mae_stderr) << ',' << r.config_hash << ','
        << seeds << ',' << (r.complete ? "true" : "false") << '\n';
  }
}

}  // namespace blurcast::metrics
