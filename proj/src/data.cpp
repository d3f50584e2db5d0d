#include "blurcast/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "blurcast/rng.hpp"

namespace blurcast::data {

void RawSeries::validate() const {
  if (covariates.rank() != 2 || covariates.rows() != values.size())
    throw DataError("series '" + name + "': " + std::to_string(values.size()) + " values but covariates " +
                    shape_str(covariates.shape()));
}

std::vector<double> calendar_features(double hour_of_day, int day_of_week) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double h = two_pi * hour_of_day / 24.0;
  const double d = two_pi * static_cast<double>(day_of_week) / 7.0;
  return {std::sin(h), std::cos(h), std::sin(d), std::cos(d)};
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\"");
  auto e = s.find_last_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  while (true) {
    auto p = rest.find(',');
    out.push_back(trim(rest.substr(0, p)));
    if (p == std::string_view::npos) break;
    rest.remove_prefix(p + 1);
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

struct Stamp {
  double hours;  // monotone key
  double hour_of_day;
  int day_of_week;  // Monday = 0
};

bool parse_timestamp(const std::string& s, Stamp& out) {
  long long idx = 0;
  const char* end = s.data() + s.size();
  if (auto [ptr, ec] = std::from_chars(s.data(), end, idx); ec == std::errc() && ptr == end) {
    const long long day = idx >= 0 ? idx / 24 : -((-idx + 23) / 24);
    out.hours = static_cast<double>(idx);
    out.hour_of_day = static_cast<double>(idx - day * 24);
    out.day_of_week = static_cast<int>(((day % 7) + 7) % 7);
    return true;
  }
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  char sep = 0;
  const int got = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &hh, &mm, &ss);
  if (got < 3 || (got >= 4 && sep != 'T' && sep != ' ') || got == 4) return false;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 60) return false;
  const sys_days days{ymd};
  out.hour_of_day = hh + mm / 60.0 + ss / 3600.0;
  out.hours = static_cast<double>(days.time_since_epoch().count()) * 24.0 + out.hour_of_day;
  out.day_of_week = static_cast<int>(weekday{days}.iso_encoding()) - 1;
  return true;
}

std::size_t column_index(const std::vector<std::string>& header, std::string_view name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

struct SeriesBuilder {
  std::string name;
  std::vector<double> values;
  std::vector<double> cov;
  double last_hours = -INFINITY;
};

std::vector<RawSeries> read_csv(const std::filesystem::path& path, std::string_view target,
                                std::string_view timestamp, std::optional<std::string_view> id) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_fields(line);
  const auto ti = column_index(header, target);
  const auto si = column_index(header, timestamp);
  const std::optional<std::size_t> ii = id ? std::optional(column_index(header, *id)) : std::nullopt;

  std::vector<SeriesBuilder> builders;
  std::map<std::string, std::size_t> by_id;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    const auto where = path.filename().string() + ":" + std::to_string(lineno) + ": ";
    if (f.size() != header.size())
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    double v = 0.0;
    if (!parse_double(f[ti], v)) throw DataError(where + "unparseable target '" + f[ti] + "'");
    Stamp st{};
    if (!parse_timestamp(f[si], st)) throw DataError(where + "unparseable timestamp '" + f[si] + "'");
    const std::string key = ii ? f[*ii] : std::string(target);
    auto [it, fresh] = by_id.emplace(key, builders.size());
    if (fresh) builders.push_back(SeriesBuilder{key, {}, {}, -INFINITY});
    auto& b = builders[it->second];
    if (!(st.hours > b.last_hours)) throw DataError(where + "non-monotonic timestamp '" + f[si] + "'");
    b.last_hours = st.hours;
    b.values.push_back(v);
    const auto c = calendar_features(st.hour_of_day, st.day_of_week);
    b.cov.insert(b.cov.end(), c.begin(), c.end());
  }
  std::vector<RawSeries> out;
  for (auto& b : builders) {
    const auto n = b.values.size();
    out.push_back(RawSeries{b.name, std::move(b.values), Tensor({n, kCovariateDim}, std::move(b.cov))});
  }
  return out;
}

}  // namespace

RawSeries load_csv(const std::filesystem::path& path, std::string_view target_column,
                   std::string_view timestamp_column) {
  auto all = read_csv(path, target_column, timestamp_column, std::nullopt);
  if (all.empty()) throw DataError(path.string() + ": no data rows");
  return std::move(all.front());
}

std::vector<RawSeries> load_csv_grouped(const std::filesystem::path& path, std::string_view target_column,
                                        std::string_view timestamp_column, std::string_view id_column) {
  auto all = read_csv(path, target_column, timestamp_column, id_column);
  if (all.empty()) throw DataError(path.string() + ": no data rows");
  return all;
}

void write_csv(const std::filesystem::path& path, const RawSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestamp,value\n";
  char buf[64];
  for (std::size_t i = 0; i < series.values.size(); ++i) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, series.values[i]);
    out << i << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf)) << '\n';
  }
}

SynthKind parse_synth_kind(std::string_view name) {
  if (name == "sine-mix") return SynthKind::SineMix;
  if (name == "trend-seasonal") return SynthKind::TrendSeasonal;
  if (name == "sawtooth") return SynthKind::Sawtooth;
  throw DataError("unknown synthetic kind '" + std::string(name) + "'");
}

std::string_view to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::SineMix: return "sine-mix";
    case SynthKind::TrendSeasonal: return "trend-seasonal";
    case SynthKind::Sawtooth: return "sawtooth";
  }
  return "?";
}

RawSeries synth_series(SynthKind kind, std::size_t length, std::uint64_t seed, double noise_scale) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto rng = make_rng({seed, static_cast<std::uint64_t>(kind), 0x5e7e5ULL});
  std::uniform_real_distribution<double> phase(0.0, two_pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double p1 = phase(rng), p2 = phase(rng);
  std::vector<double> values(length);
  std::vector<double> cov;
  cov.reserve(length * kCovariateDim);
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i);
    double v = 0.0;
    switch (kind) {
      case SynthKind::SineMix:
        v = kSineMix[0].amplitude * std::sin(two_pi * t / kSineMix[0].period + p1) +
            kSineMix[1].amplitude * std::sin(two_pi * t / kSineMix[1].period + p2);
        break;
      case SynthKind::TrendSeasonal:
        v = 0.002 * t + std::sin(two_pi * t / 24.0 + p1) + 0.3 * std::sin(two_pi * t / 168.0 + p2);
        break;
      case SynthKind::Sawtooth: {
        const double u = std::fmod(t + 24.0 * p1 / two_pi, 24.0) / 24.0;
        v = 2.0 * u - 1.0;
        break;
      }
    }
    const double eps = noise(rng);
    values[i] = v + noise_scale * eps;
    const auto day = static_cast<long long>(i / 24);
    const auto c = calendar_features(static_cast<double>(i % 24), static_cast<int>(day % 7));
    cov.insert(cov.end(), c.begin(), c.end());
  }
  return RawSeries{std::string(to_string(kind)), std::move(values), Tensor({length, kCovariateDim}, std::move(cov))};
}

void WindowConfig::validate() const {
  if (kappa < 1 || tau < 1 || stride < 1) throw DataError("window sizes must be >= 1");
}

std::size_t window_count(std::size_t length, const WindowConfig& cfg) {
  cfg.validate();
  if (length < cfg.kappa + cfg.tau) return 0;
  return (length - cfg.kappa - cfg.tau) / cfg.stride + 1;
}

std::vector<TimeSeriesWindow> make_windows(const RawSeries& series, const WindowConfig& cfg,
                                           std::size_t series_index) {
  series.validate();
  const std::size_t count = window_count(series.length(), cfg);
  if (count == 0)
    throw DataError("series '" + series.name + "' too short: length " + std::to_string(series.length()) +
                    " < kappa + tau = " + std::to_string(cfg.kappa + cfg.tau));
  const std::size_t dx = series.covariate_dim();
  std::vector<TimeSeriesWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t s = w * cfg.stride;
    TimeSeriesWindow win{Tensor({cfg.kappa, dx + 1}), Tensor({cfg.tau, dx}), Tensor({cfg.tau, 1}), series_index, s};
    for (std::size_t i = 0; i < cfg.kappa; ++i) {
      for (std::size_t c = 0; c < dx; ++c) win.x_past.at(i, c) = series.covariates.at(s + i, c);
      win.x_past.at(i, dx) = series.values[s + i];
    }
    for (std::size_t i = 0; i < cfg.tau; ++i) {
      const std::size_t t = s + cfg.kappa + i;
      for (std::size_t c = 0; c < dx; ++c) win.cov_future.at(i, c) = series.covariates.at(t, c);
      win.y_future[i] = series.values[t];
    }
    out.push_back(std::move(win));
  }
  return out;
}

Split split_train_val_test(std::vector<TimeSeriesWindow> windows) {
  const std::size_t n = windows.size();
  if (n < 10) throw DataError("need at least 10 windows to split, got " + std::to_string(n));
  std::stable_sort(windows.begin(), windows.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  Split s;
  auto it = std::make_move_iterator(windows.begin());
  s.train.assign(it, it + static_cast<long>(n_train));
  s.validation.assign(it + static_cast<long>(n_train), it + static_cast<long>(n_train + n_val));
  s.test.assign(it + static_cast<long>(n_train + n_val), std::make_move_iterator(windows.end()));
  return s;
}

Tensor Normalizer::apply(const Tensor& t) const {
  Tensor out = t;
  for (auto& v : out.data()) v = apply(v);
  return out;
}

Tensor Normalizer::invert(const Tensor& t) const {
  Tensor out = t;
  for (auto& v : out.data()) v = invert(v);
  return out;
}

Normalizer fit_normalizer(const std::vector<TimeSeriesWindow>& train) {
  if (train.empty()) throw DataError("cannot fit normalizer on an empty training set");
  // (series, time index) -> value; overlapping windows contribute each step once
  std::map<std::pair<std::size_t, std::size_t>, double> steps;
  for (const auto& w : train) {
    const std::size_t k = w.kappa(), col = w.x_past.cols() - 1;
    for (std::size_t i = 0; i < k; ++i) steps.emplace(std::pair{w.series, w.start + i}, w.x_past.at(i, col));
    for (std::size_t i = 0; i < w.tau(); ++i) steps.emplace(std::pair{w.series, w.start + k + i}, w.y_future[i]);
  }
  double mean = 0.0;
  for (const auto& [_, v] : steps) mean += v;
  mean /= static_cast<double>(steps.size());
  double var = 0.0;
  for (const auto& [_, v] : steps) var += (v - mean) * (v - mean);
  var /= static_cast<double>(steps.size());
  if (!(var > 0.0)) throw DataError("training targets have zero variance");
  return Normalizer{mean, std::sqrt(var)};
}

TimeSeriesWindow normalize(const TimeSeriesWindow& w, const Normalizer& n) {
  TimeSeriesWindow out = w;
  const std::size_t col = out.x_past.cols() - 1;
  for (std::size_t i = 0; i < out.kappa(); ++i) out.x_past.at(i, col) = n.apply(out.x_past.at(i, col));
  out.y_future = n.apply(out.y_future);
  return out;
}

PreparedData prepare(const std::vector<RawSeries>& series, const WindowConfig& cfg, bool per_series) {
  if (series.empty()) throw DataError("no series to prepare");
  std::vector<Split> splits;
  for (std::size_t i = 0; i < series.size(); ++i) splits.push_back(split_train_val_test(make_windows(series[i], cfg, i)));

  PreparedData out;
  if (per_series) {
    for (const auto& s : splits) out.normalizers.push_back(fit_normalizer(s.train));
  } else {
    std::vector<TimeSeriesWindow> pooled;
    for (const auto& s : splits) pooled.insert(pooled.end(), s.train.begin(), s.train.end());
    out.normalizers.push_back(fit_normalizer(pooled));
  }
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto& norm = out.normalizers[per_series ? i : 0];
    for (const auto& w : splits[i].train) out.split.train.push_back(normalize(w, norm));
    for (const auto& w : splits[i].validation) out.split.validation.push_back(normalize(w, norm));
    for (const auto& w : splits[i].test) out.split.test.push_back(normalize(w, norm));
  }
  return out;
}

}  // namespace blurcast::data
