#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "stepattn/matrix.hpp"

namespace stepattn {

enum class Population { kNotApplicable, kSighted, kCane, kDog };
enum class Regularity { kNotApplicable, kRegular, kSemiRegular };

std::string_view to_string(Population p);
std::string_view to_string(Regularity r);
/// Accepts the names produced by to_string; throws std::invalid_argument otherwise.
Population parse_population(std::string_view s);
Regularity parse_regularity(std::string_view s);

struct SampleMeta {
  std::string placement;
  Population population = Population::kNotApplicable;
  Regularity regularity = Regularity::kNotApplicable;

  friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

/// One recording: raw triaxial accelerometer signal plus its ground-truth step count.
struct SignalSample {
  std::string id;
  std::string subject;
  Matrix raw;  // L x 3 (ax, ay, az) in sensor units
  double fs_hz = 0.0;
  std::int64_t step_count = 0;
  SampleMeta meta;

  std::size_t length() const noexcept { return raw.rows(); }
  friend bool operator==(const SignalSample&, const SignalSample&) = default;
};

}  // namespace stepattn
