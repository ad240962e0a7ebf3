#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>

#include "stepattn/pipeline.hpp"

namespace stepattn {

struct BaselineConfig {
  double smooth_window_s = 0.25;
  double peak_min_prominence_k = 0.5;  // in units of the smoothed signal's std
  double min_step_interval_s = 0.33;
  double cadence_lo_hz = 0.6;
  double cadence_hi_hz = 3.0;

  void validate() const;
};

class BaselineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BaselineMethod { kPeak, kThreshold, kAutocorrelation };
std::string_view to_string(BaselineMethod m);
/// Accepts peak, threshold, autocorr (or autocorrelation).
BaselineMethod parse_baseline_method(std::string_view s);

/// Smoothed local maxima above mean + k*std, at least min_step_interval_s apart (taller peaks win).
std::int64_t count_peaks(const TimeSeries& series, const BaselineConfig& config = {});

/// Upward crossings of the smoothed mean with a hysteresis band of k*std centred on the mean.
std::int64_t count_threshold(const TimeSeries& series, const BaselineConfig& config = {});

struct AutocorrResult {
  std::int64_t count = 0;
  double period_s = 0.0;
  double peak_correlation = 0.0;
  /// No interior autocorrelation peak in the cadence band, or the peak is weak.
  bool low_confidence = false;
};

/// Period from the lag in the cadence band maximizing the normalized autocorrelation (refined by
/// parabolic interpolation); count = round(duration / period).
AutocorrResult count_autocorrelation(const TimeSeries& series, const BaselineConfig& config = {});

/// Dispatch on method; autocorrelation's low-confidence results still return their count.
std::int64_t count_steps(BaselineMethod method, const TimeSeries& series,
                         const BaselineConfig& config = {});

/// Centered moving average over `window` samples (edges use the available samples).
std::vector<double> moving_average(std::span<const double> x, std::size_t window);

}  // namespace stepattn
