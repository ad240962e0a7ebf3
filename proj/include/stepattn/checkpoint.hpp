#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "stepattn/model.hpp"
#include "stepattn/pipeline.hpp"
#include "stepattn/train.hpp"

namespace stepattn {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "STEPATTN-CHECKPOINT";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelConfig model;
  ModelParams params;
  TrainConfig train;
  InputOptions input;
  std::uint64_t seed = 0;
  int epoch = 0;  // epochs completed
};

/// Layout:
///   line 1: "STEPATTN-CHECKPOINT <version>"
///   line 2: one-line JSON header (configs, tensor names and shapes, payload size)
///   rest:   little-endian IEEE-754 doubles of every tensor, in header order, row-major
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stepattn
