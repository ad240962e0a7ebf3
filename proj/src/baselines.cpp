#include "stepattn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace stepattn {

void BaselineConfig::validate() const {
  if (!(smooth_window_s > 0.0 && peak_min_prominence_k > 0.0 && min_step_interval_s > 0.0 &&
        cadence_lo_hz > 0.0 && cadence_hi_hz > 0.0))
    throw std::invalid_argument("baseline parameters must be positive");
  if (!(cadence_lo_hz < cadence_hi_hz))
    throw std::invalid_argument("cadence band lower bound must be below the upper bound");
}

std::string_view to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::kPeak: return "peak";
    case BaselineMethod::kThreshold: return "threshold";
    case BaselineMethod::kAutocorrelation: return "autocorr";
  }
  return "peak";
}

BaselineMethod parse_baseline_method(std::string_view s) {
  if (s == "peak") return BaselineMethod::kPeak;
  if (s == "threshold") return BaselineMethod::kThreshold;
  if (s == "autocorr" || s == "autocorrelation") return BaselineMethod::kAutocorrelation;
  throw std::invalid_argument("unknown baseline method '" + std::string(s) +
                              "' (expected peak, threshold, autocorr)");
}

std::vector<double> moving_average(std::span<const double> x, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving_average: zero window");
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  const std::size_t left = (window - 1) / 2;
  const std::size_t right = window - 1 - left;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i >= left ? i - left : 0;
    const std::size_t b = std::min(n, i + right + 1);
    out[i] = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
  }
  return out;
}

namespace {

std::vector<double> univariate(const TimeSeries& series) {
  if (series.channels.cols() != 1)
    throw BaselineError("baseline counters need a univariate series, got " +
                        series.channels.shape_str());
  if (series.length() == 0) throw BaselineError("baseline counters need a non-empty series");
  if (!(series.fs_hz > 0.0)) throw BaselineError("baseline counters need a positive sampling rate");
  const auto v = series.channels.values();
  return {v.begin(), v.end()};
}

std::vector<double> smoothed(const TimeSeries& series, const BaselineConfig& config) {
  const std::vector<double> x = univariate(series);
  const auto window = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.smooth_window_s * series.fs_hz)));
  if (window > x.size())
    throw BaselineError("smoothing window of " + std::to_string(window) +
                        " samples exceeds signal length " + std::to_string(x.size()));
  return moving_average(x, window);
}

void mean_std(const std::vector<double>& y, double& mean, double& std) {
  mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  std = std::sqrt(ss / static_cast<double>(y.size()));
}

}  // namespace

std::int64_t count_peaks(const TimeSeries& series, const BaselineConfig& config) {
  config.validate();
  const std::vector<double> y = smoothed(series, config);
  double mean, std;
  mean_std(y, mean, std);
  if (!(std > 0.0)) return 0;
  const double threshold = mean + config.peak_min_prominence_k * std;

  // Interior local maxima; a flat top counts once, at its middle.
  struct Candidate {
    std::size_t index;
    double height;
  };
  std::vector<Candidate> candidates;
  const std::size_t n = y.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    if (y[i] > y[i - 1]) {
      std::size_t j = i;
      while (j + 1 < n && y[j + 1] == y[i]) ++j;
      if (j + 1 < n && y[j + 1] < y[i] && y[i] > threshold) candidates.push_back({(i + j) / 2, y[i]});
      i = j + 1;
    } else {
      ++i;
    }
  }

  const double min_gap = config.min_step_interval_s * series.fs_hz;
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.height != b.height ? a.height > b.height : a.index < b.index;
  });
  std::vector<std::size_t> accepted;
  for (const Candidate& c : candidates) {
    const bool clear = std::all_of(accepted.begin(), accepted.end(), [&](std::size_t a) {
      const double gap = std::abs(static_cast<double>(a) - static_cast<double>(c.index));
      return gap >= min_gap;
    });
    if (clear) accepted.push_back(c.index);
  }
  return static_cast<std::int64_t>(accepted.size());
}

std::int64_t count_threshold(const TimeSeries& series, const BaselineConfig& config) {
  config.validate();
  const std::vector<double> y = smoothed(series, config);
  double mean, std;
  mean_std(y, mean, std);
  if (!(std > 0.0)) return 0;
  const double half_band = 0.5 * config.peak_min_prominence_k * std;
  const double upper = mean + half_band;
  const double lower = mean - half_band;
  bool low = y.front() < upper;
  std::int64_t count = 0;
  for (double v : y) {
    if (low && v > upper) {
      ++count;
      low = false;
    } else if (!low && v < lower) {
      low = true;
    }
  }
  return count;
}

constexpr double kHarmonicRatio = 0.85;

AutocorrResult count_autocorrelation(const TimeSeries& series, const BaselineConfig& config) {
  config.validate();
  const std::vector<double> x = univariate(series);
  const std::size_t n = x.size();
  const double duration = static_cast<double>(n) / series.fs_hz;
  if (duration < 2.0 / config.cadence_lo_hz)
    throw BaselineError("autocorrelation needs at least " + std::to_string(2.0 / config.cadence_lo_hz) +
                        " s of signal, got " + std::to_string(duration) + " s");

  AutocorrResult result;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  if (!(denom > 0.0)) {
    result.low_confidence = true;
    return result;
  }

  const auto k_min = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(series.fs_hz / config.cadence_hi_hz)));
  const auto k_max = std::min<std::size_t>(
      n - 2, static_cast<std::size_t>(std::floor(series.fs_hz / config.cadence_lo_hz)));
  if (k_min > k_max) throw BaselineError("no admissible lag in the cadence band");

  auto r = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += (x[t] - mean) * (x[t + k] - mean);
    return s / denom;
  };
  std::vector<double> corr(k_max + 2, 0.0);
  for (std::size_t k = k_min - 1; k <= k_max + 1; ++k) corr[k] = r(k);

  // Multiples of the true period also peak, and with a fractional period they can align better
  // than the first one. Take the shortest lag whose peak is close to the tallest.
  std::vector<std::size_t> peaks;
  for (std::size_t k = k_min; k <= k_max; ++k)
    if (corr[k] > corr[k - 1] && corr[k] >= corr[k + 1]) peaks.push_back(k);
  std::size_t best = 0;
  if (!peaks.empty()) {
    double tallest = corr[peaks.front()];
    for (std::size_t k : peaks) tallest = std::max(tallest, corr[k]);
    for (std::size_t k : peaks)
      if (corr[k] >= kHarmonicRatio * tallest) {
        best = k;
        break;
      }
  }
  if (best == 0) {
    result.low_confidence = true;
    best = k_min;
    for (std::size_t k = k_min; k <= k_max; ++k)
      if (corr[k] > corr[best]) best = k;
  }

  double lag = static_cast<double>(best);
  const double curvature = corr[best - 1] - 2.0 * corr[best] + corr[best + 1];
  if (curvature < 0.0) {
    const double delta = 0.5 * (corr[best - 1] - corr[best + 1]) / curvature;
    lag += std::clamp(delta, -0.5, 0.5);
  }
  result.peak_correlation = corr[best];
  if (result.peak_correlation < 0.25) result.low_confidence = true;
  result.period_s = lag / series.fs_hz;
  result.count = std::llround(duration / result.period_s);
  return result;
}

std::int64_t count_steps(BaselineMethod method, const TimeSeries& series,
                         const BaselineConfig& config) {
  switch (method) {
    case BaselineMethod::kPeak: return count_peaks(series, config);
    case BaselineMethod::kThreshold: return count_threshold(series, config);
    case BaselineMethod::kAutocorrelation: return count_autocorrelation(series, config).count;
  }
  return 0;
}

}  // namespace stepattn
