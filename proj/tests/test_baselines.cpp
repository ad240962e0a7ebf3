#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stepattn/baselines.hpp"
#include "stepattn/pipeline.hpp"
#include "stepattn/rng.hpp"

using namespace stepattn;

namespace {

TimeSeries univariate(const std::vector<double>& v, double fs) {
  TimeSeries s;
  s.fs_hz = fs;
  s.channels = Matrix(v.size(), 1, v);
  s.channel_names = {"l2"};
  return s;
}

TimeSeries sine(double f_hz, double seconds, double fs, double phase = 0.0) {
  std::vector<double> v(static_cast<std::size_t>(std::llround(seconds * fs)));
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::sin(2 * std::numbers::pi * f_hz * static_cast<double>(i) / fs + phase);
  return minmax_normalize(univariate(v, fs));
}

WalkShape jitter_free() {
  WalkShape s;
  s.amplitude_jitter = 0;
  s.interval_jitter = 0;
  return s;
}

TimeSeries clean_walk(std::uint64_t seed, std::int64_t steps, double cadence, double fs = 25.0) {
  return build_input(synthesize_walk(seed, steps, fs, cadence, 0.0, 0.0, jitter_free()), {});
}

}  // namespace

TEST_CASE("config validation") {
  BaselineConfig c;
  CHECK_NOTHROW(c.validate());
  c.cadence_lo_hz = 3.5;
  CHECK_THROWS(c.validate());
  c = BaselineConfig{};
  c.smooth_window_s = 0;
  CHECK_THROWS(c.validate());
  c = BaselineConfig{};
  c.min_step_interval_s = -1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("moving average") {
  const auto m = moving_average(std::vector<double>{0, 3, 0, 3, 0}, 3);
  CHECK(m[0] == doctest::Approx(1.5));
  CHECK(m[1] == doctest::Approx(1.0));
  CHECK(m[2] == doctest::Approx(2.0));
  CHECK(m[4] == doctest::Approx(1.5));
  CHECK(moving_average(std::vector<double>{1, 2, 3}, 1) == std::vector<double>{1, 2, 3});
}

TEST_CASE("clean 20-pulse walk counts 20 with every method") {
  const TimeSeries s = clean_walk(4, 20, 1.8);
  CHECK(count_peaks(s) == 20);
  CHECK(count_threshold(s) == 20);
  CHECK(count_autocorrelation(s).count == 20);
}

TEST_CASE("constant signal counts zero") {
  const TimeSeries c = univariate(std::vector<double>(100, 0.0), 25.0);
  CHECK(count_peaks(c) == 0);
  CHECK(count_threshold(c) == 0);
  const AutocorrResult a = count_autocorrelation(c);
  CHECK(a.count == 0);
  CHECK(a.low_confidence);
}

TEST_CASE("peaks closer than the minimum interval are merged") {
  std::vector<double> v(100, 0.0);
  v[40] = 1.0;
  v[44] = 0.9;  // 0.16 s apart at 25 Hz
  BaselineConfig c;
  c.smooth_window_s = 0.04;  // one sample: no smoothing
  CHECK(count_peaks(univariate(v, 25.0), c) == 1);
  v[44] = 0.0;
  v[60] = 0.9;
  CHECK(count_peaks(univariate(v, 25.0), c) == 2);
}

TEST_CASE("threshold crossings of a pure sine") {
  for (double f : {0.9, 1.5, 2.0, 2.7})
    for (double seconds : {6.0, 10.0, 17.3}) {
      const TimeSeries s = sine(f, seconds, 50.0, 0.3);
      const auto expected = static_cast<std::int64_t>(std::floor(f * seconds));
      const std::int64_t n = count_threshold(s);
      CHECK(n >= expected - 1);
      CHECK(n <= expected + 1);
    }
}

TEST_CASE("autocorrelation period of a pure sine") {
  const AutocorrResult r = count_autocorrelation(sine(2.0, 10.0, 25.0));
  CHECK(r.count == 20);
  CHECK(r.period_s == doctest::Approx(0.5).epsilon(0.01));
  CHECK_FALSE(r.low_confidence);
}

TEST_CASE("autocorrelation on a regular synthetic walk is within two steps") {
  const SignalSample s = synthesize_walk(8, 54, 25.0, 1.8, 0.05, 0.0);
  const AutocorrResult r = count_autocorrelation(build_input(s, {}));
  CHECK(std::abs(r.count - 54) <= 2);
}

TEST_CASE("autocorrelation on white noise is flagged") {
  Rng rng(1);
  std::vector<double> v(500);
  for (double& x : v) x = rng.normal();
  const AutocorrResult r = count_autocorrelation(minmax_normalize(univariate(v, 25.0)));
  CHECK(r.low_confidence);
}

TEST_CASE("errors on too-short input") {
  const TimeSeries tiny = univariate({0.0, 1.0, 0.0}, 25.0);
  CHECK_THROWS_AS(count_peaks(tiny), BaselineError);
  CHECK_THROWS_AS(count_threshold(tiny), BaselineError);
  CHECK_THROWS_AS(count_autocorrelation(sine(2.0, 3.0, 25.0)), BaselineError);
  TimeSeries multi;
  multi.fs_hz = 25;
  multi.channels = Matrix(100, 3);
  CHECK_THROWS(count_peaks(multi));
}

TEST_CASE("counts are invariant to affine maps after normalization") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const SignalSample s = synthesize_walk(seed, 25, 25.0, 1.7, 0.15, 0.1);
    const TimeSeries base = build_input(s, {});
    std::vector<double> scaled(base.channels.values().begin(), base.channels.values().end());
    for (double& v : scaled) v = 3.7 * v - 12.0;
    const TimeSeries again = minmax_normalize(univariate(scaled, base.fs_hz));
    for (BaselineMethod m :
         {BaselineMethod::kPeak, BaselineMethod::kThreshold, BaselineMethod::kAutocorrelation})
      CHECK(count_steps(m, again) == count_steps(m, base));
  }
}

TEST_CASE("clean jitter-free family is counted exactly over 50 seeds") {
  const SynthFamily family = clean_family();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SignalSample s = synthesize_dataset(family, 1, seed).front();
    const TimeSeries t = build_input(s, {});
    CHECK_MESSAGE(count_peaks(t) == s.step_count, seed);
    CHECK_MESSAGE(count_threshold(t) == s.step_count, seed);
    CHECK_MESSAGE(count_autocorrelation(t).count == s.step_count, seed);
  }
}

TEST_CASE("method names") {
  CHECK(parse_baseline_method("peak") == BaselineMethod::kPeak);
  CHECK(parse_baseline_method("autocorrelation") == BaselineMethod::kAutocorrelation);
  CHECK(parse_baseline_method("autocorr") == BaselineMethod::kAutocorrelation);
  CHECK(to_string(BaselineMethod::kThreshold) == "threshold");
  CHECK_THROWS(parse_baseline_method("fft"));
}
