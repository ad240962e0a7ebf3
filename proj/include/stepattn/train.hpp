#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepattn/model.hpp"
#include "stepattn/pipeline.hpp"
#include "stepattn/sample.hpp"

namespace stepattn {

struct TrainConfig {
  int batch_size = 16;
  int epochs = 250;
  double lr0 = 0.001;
  double lr_decay_factor = 10.0;
  int lr_step_epochs = 75;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm clip; 0 disables
  int threads = 1;         // per-sample gradients within a batch
  bool verbose = false;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Non-finite loss during training; what() names the epoch and batch.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sample after preprocessing, ready for the model.
struct PreparedSample {
  std::string id;
  Matrix x;  // L x input_size
  double label = 0.0;
};

std::vector<PreparedSample> prepare(const std::vector<SignalSample>& samples,
                                    const InputOptions& options);

/// (1/N) sum |pred - true|.
double mae_loss(std::span<const double> preds, std::span<const double> trues);

/// lr0 / decay^floor(epoch / step) for 0 <= epoch < epochs.
double lr_at_epoch(const TrainConfig& config, int epoch);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;

  /// Zero moments shaped like `params`.
  static AdamState like(std::span<const Matrix* const> params);
};

/// One bias-corrected Adam update of every tensor in `params`. Increments state.t.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Zero gradient buffers shaped like the model's tensors.
std::vector<Matrix> zero_grads_like(const ModelParams& params);

/// Runs one sample forward and backward with root weight * |pred - label|, adding the parameter
/// gradients into `grads`. Returns the prediction.
double accumulate_sample_gradient(const ModelParams& params, const ModelConfig& config,
                                  const PreparedSample& sample, double weight,
                                  std::vector<Matrix>& grads);

/// Gradient of the batch loss (mean absolute error over `batch`). Per-sample gradients are
/// computed independently (in parallel when threads > 1) and summed in index order, so the
/// result does not depend on the thread count. Returns the batch loss.
double batch_gradient(const ModelParams& params, const ModelConfig& config,
                      std::span<const PreparedSample* const> batch, std::vector<Matrix>& grads,
                      int threads = 1);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample absolute error over the epoch
  double lr = 0.0;
  std::optional<double> validation_mae;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  friend bool operator==(const TrainHistory& a, const TrainHistory& b);
};

struct FitResult {
  ModelParams params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training: per epoch, shuffle with seed ^ epoch, split into batches, one Adam step
/// per batch on the batch-mean absolute error.
FitResult fit(const ModelConfig& model_config, ModelParams params,
              const std::vector<PreparedSample>& train, const TrainConfig& config,
              const std::vector<PreparedSample>* validation = nullptr,
              const EpochCallback& on_epoch = {});

/// Preprocesses raw samples then fits.
FitResult fit(const ModelConfig& model_config, ModelParams params,
              const std::vector<SignalSample>& train, const TrainConfig& config,
              const InputOptions& input);

std::vector<double> predict_all(const ModelParams& params, const ModelConfig& config,
                                const std::vector<PreparedSample>& samples);

}  // namespace stepattn
