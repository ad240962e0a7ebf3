#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stepattn/matrix.hpp"
#include "stepattn/sample.hpp"

namespace stepattn {

struct TimeSeries {
  double fs_hz = 0.0;
  Matrix channels;  // L x C
  std::vector<std::string> channel_names;

  std::size_t length() const noexcept { return channels.rows(); }
  double duration_s() const noexcept { return static_cast<double>(length()) / fs_hz; }
};

enum class InputMode { kL2, kXyz, kL2Xyz };

std::string_view to_string(InputMode m);
/// Accepts "l2", "xyz", "l2xyz" (also "l2+xyz").
InputMode parse_input_mode(std::string_view s);
int channel_count(InputMode m);

/// Per-timestep Euclidean magnitude of an L x 3 matrix.
Matrix l2_norm(const Matrix& xyz);

/// Per-channel (v - min) / (max - min). Constant channels become all zeros and are reported
/// through log_warning; their indices are appended to `constant_channels` when given.
Matrix minmax_normalize(const Matrix& series, std::vector<std::size_t>* constant_channels = nullptr);
TimeSeries minmax_normalize(const TimeSeries& series);

/// Keeps rows 0, factor, 2*factor, ... and divides fs by factor. With `anti_alias` a centered
/// moving average of `factor` samples is applied first.
TimeSeries downsample(const TimeSeries& series, std::size_t factor, bool anti_alias = false);

struct InputOptions {
  InputMode mode = InputMode::kL2;
  std::size_t downsample_factor = 1;
  bool anti_alias = false;
};

/// downsample raw xyz -> derive l2 if requested -> min-max normalize each channel.
/// Channel order for kL2Xyz is (l2, ax, ay, az).
TimeSeries build_input(const SignalSample& sample, const InputOptions& options);

// ---------------------------------------------------------------------------------------------
// Synthetic gait generator.

struct WalkShape {
  double pulse_duration_s = 0.3;
  double amplitude = 1.0;
  double amplitude_jitter = 0.3;  // fractional half-width of the uniform jitter
  double interval_jitter = 0.2;
  double pause_min_s = 1.0;
  double pause_max_s = 2.0;
  double empty_duration_s = 5.0;  // length of a zero-step recording
};

struct SyntheticWalk {
  SignalSample sample;
  std::vector<double> pulse_centers_s;  // one per injected step
};

/// Gravity level 1 plus `num_steps` half-sine pulses along a random unit direction, plus white
/// noise per channel. Each step owns one inter-step interval with its pulse centred in it; a
/// pause may precede every step after the first. Deterministic per seed.
SyntheticWalk synthesize_walk_detailed(std::uint64_t seed, std::int64_t num_steps, double fs_hz,
                                       double cadence_hz, double noise_sd, double pause_prob,
                                       const WalkShape& shape = {});
SignalSample synthesize_walk(std::uint64_t seed, std::int64_t num_steps, double fs_hz,
                             double cadence_hz, double noise_sd, double pause_prob,
                             const WalkShape& shape = {});

/// A population of synthetic walks. Step counts are uniform on [min_steps, max_steps]; cadence is
/// drawn so the nominal duration n / cadence falls in [min_duration_s, max_duration_s] while
/// staying inside the cadence band.
struct SynthFamily {
  std::int64_t min_steps = 8;
  std::int64_t max_steps = 40;
  double min_duration_s = 5.0;
  double max_duration_s = 25.0;
  double cadence_lo_hz = 1.4;
  double cadence_hi_hz = 2.2;
  double fs_hz = 25.0;
  double noise_sd = 0.1;
  double pause_prob = 0.05;
  WalkShape shape;
  int subjects = 10;
  std::string id_prefix = "syn";
};

/// Clean family: no noise, no jitter, no pauses.
SynthFamily clean_family();

/// Noisy family: heavy sensor noise and frequent pauses.
SynthFamily noisy_family();

std::vector<SignalSample> synthesize_dataset(const SynthFamily& family, std::size_t count,
                                             std::uint64_t seed);

}  // namespace stepattn
