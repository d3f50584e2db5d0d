#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blurcast/tensor.hpp"

namespace blurcast::data {

/// hour-of-day (sin, cos), day-of-week (sin, cos)
inline constexpr std::size_t kCovariateDim = 4;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RawSeries {
  std::string name;
  std::vector<double> values;
  Tensor covariates;  // [length x kCovariateDim]

  std::size_t length() const { return values.size(); }
  std::size_t covariate_dim() const { return covariates.rank() == 2 ? covariates.cols() : 0; }
  /// Throws DataError when values and covariates disagree in length.
  void validate() const;
};

std::vector<double> calendar_features(double hour_of_day, int day_of_week);

/// Hourly CSV with a header row. Timestamps are either integer hour indices
/// or ISO-8601 date-times ("2016-07-01 13:00:00", "2016-07-01T13:00").
RawSeries load_csv(const std::filesystem::path& path, std::string_view target_column,
                   std::string_view timestamp_column);
/// Same dialect with an entity column; returns one series per entity in
/// order of first appearance.
std::vector<RawSeries> load_csv_grouped(const std::filesystem::path& path, std::string_view target_column,
                                        std::string_view timestamp_column, std::string_view id_column);
void write_csv(const std::filesystem::path& path, const RawSeries& series);

enum class SynthKind { SineMix, TrendSeasonal, Sawtooth };
SynthKind parse_synth_kind(std::string_view name);
std::string_view to_string(SynthKind kind);

// sine-mix components: amplitude * sin(2*pi*t/period + phase)
struct SineComponent {
  double amplitude;
  double period;
};
inline constexpr SineComponent kSineMix[2] = {{1.0, 24.0}, {0.5, 38.832815729997474}};  // 24 * golden ratio

/// Deterministic per (kind, length, seed, noise_scale). Timestamps are the
/// hour indices 0..length-1.
RawSeries synth_series(SynthKind kind, std::size_t length, std::uint64_t seed, double noise_scale);

struct WindowConfig {
  std::size_t kappa = 48;
  std::size_t tau = 12;
  std::size_t stride = 1;

  void validate() const;
};

/// One sample: kappa past steps of (covariates, target) and tau future
/// targets with their covariates.
struct TimeSeriesWindow {
  Tensor x_past;      // [kappa x (d_x + 1)], target in the last column
  Tensor cov_future;  // [tau x d_x]
  Tensor y_future;    // [tau x 1]
  std::size_t series = 0;
  std::size_t start = 0;  // index of the first past step

  std::size_t kappa() const { return x_past.rows(); }
  std::size_t tau() const { return y_future.rows(); }
};

std::size_t window_count(std::size_t length, const WindowConfig& cfg);
std::vector<TimeSeriesWindow> make_windows(const RawSeries& series, const WindowConfig& cfg,
                                           std::size_t series_index = 0);

struct Split {
  std::vector<TimeSeriesWindow> train, validation, test;
};

/// Chronological 80/10/10 partition by window start. Needs >= 10 windows.
Split split_train_val_test(std::vector<TimeSeriesWindow> windows);

struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  double apply(double v) const { return (v - mean) / std; }
  double invert(double z) const { return z * std + mean; }
  Tensor apply(const Tensor& t) const;
  Tensor invert(const Tensor& t) const;
};

/// Population mean/std over the distinct time steps the windows cover
/// (both past targets and future targets). Throws DataError on zero variance.
Normalizer fit_normalizer(const std::vector<TimeSeriesWindow>& train);
/// Rescales the target channel (last column of x_past, and y_future).
TimeSeriesWindow normalize(const TimeSeriesWindow& w, const Normalizer& n);

struct PreparedData {
  Split split;
  std::vector<Normalizer> normalizers;  // one per series, or one shared
};

/// make_windows -> split -> fit on the training portion -> normalize, for
/// each series; the splits are concatenated series by series.
PreparedData prepare(const std::vector<RawSeries>& series, const WindowConfig& cfg, bool per_series);

}  // namespace blurcast::data
