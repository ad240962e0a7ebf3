#include "stepattn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "stepattn/log.hpp"
#include "stepattn/rng.hpp"

namespace stepattn {

std::string_view to_string(InputMode m) {
  switch (m) {
    case InputMode::kL2: return "l2";
    case InputMode::kXyz: return "xyz";
    case InputMode::kL2Xyz: return "l2xyz";
  }
  return "l2";
}

InputMode parse_input_mode(std::string_view s) {
  if (s == "l2") return InputMode::kL2;
  if (s == "xyz") return InputMode::kXyz;
  if (s == "l2xyz" || s == "l2+xyz") return InputMode::kL2Xyz;
  throw std::invalid_argument("unknown input mode '" + std::string(s) + "' (expected l2, xyz, l2xyz)");
}

int channel_count(InputMode m) {
  switch (m) {
    case InputMode::kL2: return 1;
    case InputMode::kXyz: return 3;
    case InputMode::kL2Xyz: return 4;
  }
  return 1;
}

Matrix l2_norm(const Matrix& xyz) {
  if (xyz.cols() != 3)
    throw ShapeError("l2_norm: expected 3 channels, got " + xyz.shape_str());
  Matrix out(xyz.rows(), 1);
  for (std::size_t t = 0; t < xyz.rows(); ++t) {
    const double x = xyz(t, 0), y = xyz(t, 1), z = xyz(t, 2);
    out[t] = std::sqrt(x * x + y * y + z * z);
  }
  return out;
}

Matrix minmax_normalize(const Matrix& series, std::vector<std::size_t>* constant_channels) {
  Matrix out(series.rows(), series.cols());
  for (std::size_t c = 0; c < series.cols(); ++c) {
    double lo = series.rows() ? series(0, c) : 0.0;
    double hi = lo;
    for (std::size_t t = 0; t < series.rows(); ++t) {
      lo = std::min(lo, series(t, c));
      hi = std::max(hi, series(t, c));
    }
    const double range = hi - lo;
    if (!(range > 0.0)) {
      log_warning("minmax_normalize: channel " + std::to_string(c) +
                  " is constant; mapped to zeros");
      if (constant_channels) constant_channels->push_back(c);
      continue;
    }
    for (std::size_t t = 0; t < series.rows(); ++t) {
      // Endpoints are pinned so the output range is exactly [0, 1].
      const double v = series(t, c);
      out(t, c) = v == lo ? 0.0 : (v == hi ? 1.0 : (v - lo) / range);
    }
  }
  return out;
}

TimeSeries minmax_normalize(const TimeSeries& series) {
  return {series.fs_hz, minmax_normalize(series.channels), series.channel_names};
}

TimeSeries downsample(const TimeSeries& series, std::size_t factor, bool anti_alias) {
  if (factor == 0) throw std::invalid_argument("downsample: factor must be >= 1");
  const std::size_t len = series.length();
  if (factor > len)
    throw std::invalid_argument("downsample: factor " + std::to_string(factor) +
                                " exceeds series length " + std::to_string(len));
  if (factor == 1) return series;

  const Matrix* src = &series.channels;
  Matrix smoothed;
  if (anti_alias) {
    smoothed = Matrix(len, series.channels.cols());
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(factor) / 2;
    for (std::size_t c = 0; c < smoothed.cols(); ++c) {
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t begin = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t) - half);
        const std::ptrdiff_t end = std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(len), begin + static_cast<std::ptrdiff_t>(factor));
        double acc = 0.0;
        for (std::ptrdiff_t k = begin; k < end; ++k) acc += series.channels(k, c);
        smoothed(t, c) = acc / static_cast<double>(end - begin);
      }
    }
    src = &smoothed;
  }

  const std::size_t out_len = (len + factor - 1) / factor;
  Matrix out(out_len, src->cols());
  for (std::size_t i = 0; i < out_len; ++i) {
    const auto in = src->row_span(i * factor);
    std::copy(in.begin(), in.end(), out.row_span(i).begin());
  }
  return {series.fs_hz / static_cast<double>(factor), std::move(out), series.channel_names};
}

TimeSeries build_input(const SignalSample& sample, const InputOptions& options) {
  if (sample.raw.cols() != 3)
    throw ShapeError("build_input: sample '" + sample.id + "' has " +
                     std::to_string(sample.raw.cols()) + " channels, expected 3");
  const TimeSeries raw{sample.fs_hz, sample.raw, {"ax", "ay", "az"}};
  const TimeSeries ds = downsample(raw, options.downsample_factor, options.anti_alias);

  TimeSeries assembled{ds.fs_hz, {}, {}};
  switch (options.mode) {
    case InputMode::kL2:
      assembled.channels = l2_norm(ds.channels);
      assembled.channel_names = {"l2"};
      break;
    case InputMode::kXyz:
      assembled.channels = ds.channels;
      assembled.channel_names = ds.channel_names;
      break;
    case InputMode::kL2Xyz:
      assembled.channels = concat_cols(l2_norm(ds.channels), ds.channels);
      assembled.channel_names = {"l2", "ax", "ay", "az"};
      break;
  }
  return minmax_normalize(assembled);
}

// ---------------------------------------------------------------------------------------------

SyntheticWalk synthesize_walk_detailed(std::uint64_t seed, std::int64_t num_steps, double fs_hz,
                                       double cadence_hz, double noise_sd, double pause_prob,
                                       const WalkShape& shape) {
  if (!(cadence_hz > 0.5 && cadence_hz < 3.5))
    throw std::invalid_argument("synthesize_walk: cadence " + std::to_string(cadence_hz) +
                                " Hz outside (0.5, 3.5)");
  if (num_steps < 0) throw std::invalid_argument("synthesize_walk: negative step count");
  if (!(fs_hz > 0.0)) throw std::invalid_argument("synthesize_walk: fs must be positive");
  if (noise_sd < 0.0 || pause_prob < 0.0 || pause_prob > 1.0)
    throw std::invalid_argument("synthesize_walk: invalid noise or pause probability");

  Rng rng(seed);
  double dir[3];
  double norm = 0.0;
  do {
    for (double& d : dir) d = rng.normal();
    norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  } while (norm < 1e-6);
  for (double& d : dir) d /= norm;

  struct Pulse {
    double start, duration, amplitude;
  };
  std::vector<Pulse> pulses;
  SyntheticWalk walk;
  const double nominal = 1.0 / cadence_hz;
  double t = 0.0;
  for (std::int64_t k = 0; k < num_steps; ++k) {
    if (k > 0 && rng.bernoulli(pause_prob)) t += rng.uniform(shape.pause_min_s, shape.pause_max_s);
    const double interval = nominal * (1.0 + shape.interval_jitter * rng.uniform(-1.0, 1.0));
    const double amp = shape.amplitude * (1.0 + shape.amplitude_jitter * rng.uniform(-1.0, 1.0));
    const double dur = std::min(shape.pulse_duration_s, 0.9 * interval);
    const double center = t + 0.5 * interval;
    pulses.push_back({center - 0.5 * dur, dur, amp});
    walk.pulse_centers_s.push_back(center);
    t += interval;
  }
  const double duration = num_steps == 0 ? shape.empty_duration_s : t;
  const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(duration * fs_hz)));

  std::vector<double> level(len, 1.0);
  for (const Pulse& p : pulses) {
    const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(p.start * fs_hz)));
    for (std::size_t i = first; i < len; ++i) {
      const double u = (static_cast<double>(i) / fs_hz - p.start) / p.duration;
      if (u > 1.0) break;
      if (u >= 0.0) level[i] += p.amplitude * std::sin(std::numbers::pi * u);
    }
  }

  SignalSample& s = walk.sample;
  s.raw = Matrix(len, 3);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      s.raw(i, c) = level[i] * dir[c] + (noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0);
  s.fs_hz = fs_hz;
  s.step_count = num_steps;
  s.id = "walk-" + std::to_string(seed);
  s.subject = "synthetic";
  s.meta.placement = "synthetic";
  return walk;
}

SignalSample synthesize_walk(std::uint64_t seed, std::int64_t num_steps, double fs_hz,
                             double cadence_hz, double noise_sd, double pause_prob,
                             const WalkShape& shape) {
  return synthesize_walk_detailed(seed, num_steps, fs_hz, cadence_hz, noise_sd, pause_prob, shape)
      .sample;
}

SynthFamily clean_family() {
  SynthFamily f;
  f.noise_sd = 0.0;
  f.pause_prob = 0.0;
  f.shape.amplitude_jitter = 0.0;
  f.shape.interval_jitter = 0.0;
  f.id_prefix = "clean";
  return f;
}

SynthFamily noisy_family() {
  SynthFamily f;
  f.noise_sd = 0.6;
  f.pause_prob = 0.3;
  f.id_prefix = "noisy";
  return f;
}

std::vector<SignalSample> synthesize_dataset(const SynthFamily& family, std::size_t count,
                                             std::uint64_t seed) {
  if (family.min_steps < 0 || family.max_steps < family.min_steps)
    throw std::invalid_argument("synthesize_dataset: invalid step range");
  if (family.subjects < 1) throw std::invalid_argument("synthesize_dataset: subjects must be >= 1");
  Rng rng(seed);
  std::vector<SignalSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::int64_t n = rng.integer(family.min_steps, family.max_steps);
    double lo = family.cadence_lo_hz, hi = family.cadence_hi_hz;
    if (n > 0) {
      lo = std::max(lo, static_cast<double>(n) / family.max_duration_s);
      hi = std::min(hi, static_cast<double>(n) / family.min_duration_s);
      if (lo > hi) lo = hi = std::clamp(0.5 * (lo + hi), family.cadence_lo_hz, family.cadence_hi_hz);
    }
    const double cadence = rng.uniform(lo, hi);
    const std::uint64_t sample_seed = rng.next_u64();
    SignalSample s = synthesize_walk(sample_seed, n, family.fs_hz, cadence, family.noise_sd,
                                     family.pause_prob, family.shape);
    char id[64];
    std::snprintf(id, sizeof id, "%s%05zu", family.id_prefix.c_str(), i);
    s.id = id;
    std::snprintf(id, sizeof id, "subj%02d", static_cast<int>(i % static_cast<std::size_t>(family.subjects)));
    s.subject = id;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace stepattn
