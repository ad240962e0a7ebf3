#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stepattn/matrix.hpp"
#include "stepattn/tape.hpp"

namespace stepattn {

/// Regression head after the LSTM. Two linear layers by default; the single-layer variant maps
/// the 2H concatenation straight to the output.
enum class HeadKind { kTwoLayer, kSingleLinear };
enum class HeadActivation { kIdentity, kTanh };

struct ModelConfig {
  int input_size = 1;
  int hidden_size = 128;
  int num_layers = 2;
  bool use_attention = true;
  bool attention_bias = true;
  HeadKind head = HeadKind::kTwoLayer;
  HeadActivation head_activation = HeadActivation::kIdentity;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Gate blocks are stacked along the 4H axis in the order input, forget, cell, output.
struct LstmLayerParams {
  Matrix w_x;  // 4H x D_in
  Matrix w_h;  // 4H x H
  Matrix b;    // 4H x 1

  friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

struct AttentionParams {
  Matrix w_a;  // H x H
  Matrix b_a;  // H x 1, empty when the attention layer has no bias

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct HeadParams {
  Matrix w_1;  // H x 2H   (single-linear head: 1 x 2H)
  Matrix b_1;  // H x 1    (single-linear head: 1 x 1)
  Matrix w_2;  // 1 x H    (single-linear head: empty)
  Matrix b_2;  // 1 x 1    (single-linear head: empty)

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

struct ModelParams {
  std::vector<LstmLayerParams> layers;
  AttentionParams attention;  // both empty when attention is disabled
  HeadParams head;

  /// Every non-empty tensor in a fixed canonical order (layers, attention, head).
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  /// Names matching tensors(), e.g. "lstm.0.w_x", "head.b_2".
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Allocates tensors with the shapes implied by `config`, all zero.
ModelParams zero_params(const ModelConfig& config);

/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases, forget-gate bias 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Throws ShapeError if `params` does not have the shapes `config` implies.
void check_params(const ModelParams& params, const ModelConfig& config);

// ---------------------------------------------------------------------------------------------
// Graph-level API: records the model on a Tape so gradients can flow back to the parameters.

struct LayerVars {
  Var w_x, w_h, b;
};

struct ModelVars {
  std::vector<LayerVars> layers;
  std::optional<Var> w_a, b_a;
  Var w_1, b_1;
  std::optional<Var> w_2, b_2;

  /// Same order as ModelParams::tensors().
  std::vector<Var> all() const;
};

/// Records parameters as leaves (trainable) or constants (inference only).
ModelVars record_params(Tape& tape, const ModelParams& params, bool trainable);

struct StepVars {
  Var h;  // 1 x H
  Var c;  // 1 x H
};

/// One LSTM step on row vectors: x_t is 1 x D_in, h_prev and c_prev are 1 x H.
StepVars lstm_cell_step(Tape& tape, const LayerVars& layer, Var x_t, Var h_prev, Var c_prev);

/// Runs the stacked LSTM from zero state over x (L x input_size). Returns the last layer's
/// hidden sequence (L x H).
Var lstm_forward(Tape& tape, const std::vector<LayerVars>& layers, Var x);

struct AttentionVars {
  Var context;    // 1 x H, weighted average of h rows
  Var summation;  // 1 x H, column sum of h
  Var energies;   // L x H
  Var scores;     // L x 1, energies . summation
  Var weights;    // L x 1, softmax of scores
};

AttentionVars attention_forward(Tape& tape, Var h, Var w_a, std::optional<Var> b_a);

Var head_forward(Tape& tape, Var context, Var summation, const ModelVars& vars,
                 HeadActivation activation);

struct ForwardVars {
  Var output;  // 1 x 1
  Var hidden;  // L x H
  std::optional<AttentionVars> attention;
};

/// Full many-to-one forward pass. Without attention the head sees concat(h_last, s).
ForwardVars model_forward(Tape& tape, const ModelVars& vars, const ModelConfig& config, Var x);

// ---------------------------------------------------------------------------------------------
// Value-level convenience wrappers (no gradients).

struct CellState {
  Matrix h;
  Matrix c;
};

CellState lstm_cell_step(const LstmLayerParams& layer, const Matrix& x_t, const Matrix& h_prev,
                         const Matrix& c_prev);
Matrix lstm_forward(const std::vector<LstmLayerParams>& layers, const Matrix& x);

struct AttentionResult {
  Matrix context;
  Matrix summation;
  Matrix energies;
  std::vector<double> scores;
  std::vector<double> weights;
};

AttentionResult attention_forward(const Matrix& h, const AttentionParams& attention);
double head_forward(const Matrix& context, const Matrix& summation, const HeadParams& head,
                    HeadActivation activation = HeadActivation::kIdentity);

struct Prediction {
  double value = 0.0;
  std::optional<AttentionResult> attention;  // filled when requested and the model has attention
};

/// `x` must already be preprocessed (L x input_size).
Prediction predict(const ModelParams& params, const ModelConfig& config, const Matrix& x,
                   bool with_diagnostics = false);

}  // namespace stepattn
