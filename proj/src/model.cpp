#include "stepattn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "stepattn/rng.hpp"

namespace stepattn {

void ModelConfig::validate() const {
  if (input_size != 1 && input_size != 3 && input_size != 4)
    throw std::invalid_argument("input_size must be 1, 3 or 4, got " + std::to_string(input_size));
  if (hidden_size < 1) throw std::invalid_argument("hidden_size must be positive");
  if (num_layers < 1) throw std::invalid_argument("num_layers must be positive");
}

std::vector<Matrix*> ModelParams::tensors() {
  std::vector<Matrix*> out;
  for (auto& l : layers) out.insert(out.end(), {&l.w_x, &l.w_h, &l.b});
  for (Matrix* m : {&attention.w_a, &attention.b_a, &head.w_1, &head.b_1, &head.w_2, &head.b_2})
    if (!m->empty()) out.push_back(m);
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "lstm." + std::to_string(i) + ".";
    out.insert(out.end(), {p + "w_x", p + "w_h", p + "b"});
  }
  const std::pair<const Matrix*, const char*> rest[] = {
      {&attention.w_a, "attention.w_a"}, {&attention.b_a, "attention.b_a"},
      {&head.w_1, "head.w_1"},           {&head.b_1, "head.b_1"},
      {&head.w_2, "head.w_2"},           {&head.b_2, "head.b_2"}};
  for (const auto& [m, name] : rest)
    if (!m->empty()) out.emplace_back(name);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : tensors()) n += m->size();
  return n;
}

ModelParams zero_params(const ModelConfig& config) {
  config.validate();
  const auto h = static_cast<std::size_t>(config.hidden_size);
  ModelParams p;
  for (int l = 0; l < config.num_layers; ++l) {
    const std::size_t d_in = l == 0 ? static_cast<std::size_t>(config.input_size) : h;
    p.layers.push_back({Matrix(4 * h, d_in), Matrix(4 * h, h), Matrix(4 * h, 1)});
  }
  if (config.use_attention) {
    p.attention.w_a = Matrix(h, h);
    if (config.attention_bias) p.attention.b_a = Matrix(h, 1);
  }
  if (config.head == HeadKind::kTwoLayer) {
    p.head = {Matrix(h, 2 * h), Matrix(h, 1), Matrix(1, h), Matrix(1, 1)};
  } else {
    p.head.w_1 = Matrix(1, 2 * h);
    p.head.b_1 = Matrix(1, 1);
  }
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zero_params(config);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  auto fill_uniform = [&](Matrix& m) {
    for (double& v : m.values()) v = rng.uniform(-bound, bound);
  };
  const auto h = static_cast<std::size_t>(config.hidden_size);
  for (auto& layer : p.layers) {
    fill_uniform(layer.w_x);
    fill_uniform(layer.w_h);
    for (std::size_t i = h; i < 2 * h; ++i) layer.b[i] = 1.0;
  }
  if (!p.attention.w_a.empty()) fill_uniform(p.attention.w_a);
  fill_uniform(p.head.w_1);
  if (!p.head.w_2.empty()) fill_uniform(p.head.w_2);
  return p;
}

void check_params(const ModelParams& params, const ModelConfig& config) {
  const ModelParams expected = zero_params(config);
  const auto want = expected.tensors();
  const auto got = params.tensors();
  const auto names = expected.tensor_names();
  if (want.size() != got.size())
    throw ShapeError("model parameters: expected " + std::to_string(want.size()) +
                     " tensors, got " + std::to_string(got.size()));
  for (std::size_t i = 0; i < want.size(); ++i)
    if (!want[i]->same_shape(*got[i]))
      throw ShapeError(names[i] + ": expected " + want[i]->shape_str() + ", got " +
                       got[i]->shape_str());
}

std::vector<Var> ModelVars::all() const {
  std::vector<Var> out;
  for (const auto& l : layers) out.insert(out.end(), {l.w_x, l.w_h, l.b});
  for (const auto& v : {w_a, b_a, std::optional<Var>(w_1), std::optional<Var>(b_1), w_2, b_2})
    if (v) out.push_back(*v);
  return out;
}

ModelVars record_params(Tape& tape, const ModelParams& params, bool trainable) {
  auto rec = [&](const Matrix& m) { return trainable ? tape.leaf(m) : tape.constant(m); };
  ModelVars v;
  for (const auto& l : params.layers) v.layers.push_back({rec(l.w_x), rec(l.w_h), rec(l.b)});
  if (!params.attention.w_a.empty()) v.w_a = rec(params.attention.w_a);
  if (!params.attention.b_a.empty()) v.b_a = rec(params.attention.b_a);
  v.w_1 = rec(params.head.w_1);
  v.b_1 = rec(params.head.b_1);
  if (!params.head.w_2.empty()) v.w_2 = rec(params.head.w_2);
  if (!params.head.b_2.empty()) v.b_2 = rec(params.head.b_2);
  return v;
}

namespace {

// Gate pre-activations (1 x 4H) -> new state. c_prev may be absent for a zero initial state.
StepVars gates_to_state(Tape& tape, Var pre, std::optional<Var> c_prev, std::size_t hidden) {
  const Var i = tape.sigmoid(tape.slice_cols(pre, 0, hidden));
  const Var f = tape.sigmoid(tape.slice_cols(pre, hidden, hidden));
  const Var g = tape.tanh(tape.slice_cols(pre, 2 * hidden, hidden));
  const Var o = tape.sigmoid(tape.slice_cols(pre, 3 * hidden, hidden));
  Var c = tape.hadamard(i, g);
  if (c_prev) c = tape.add(tape.hadamard(f, *c_prev), c);
  const Var h = tape.hadamard(o, tape.tanh(c));
  return {h, c};
}

}  // namespace

StepVars lstm_cell_step(Tape& tape, const LayerVars& layer, Var x_t, Var h_prev, Var c_prev) {
  const std::size_t hidden = tape.value(layer.w_h).cols();
  if (tape.value(x_t).rows() != 1 || tape.value(h_prev).rows() != 1 ||
      !tape.value(h_prev).same_shape(tape.value(c_prev)) || tape.value(h_prev).cols() != hidden)
    throw ShapeError("lstm_cell_step: x_t " + tape.value(x_t).shape_str() + ", h_prev " +
                     tape.value(h_prev).shape_str() + ", c_prev " +
                     tape.value(c_prev).shape_str() + " with hidden size " +
                     std::to_string(hidden));
  Var pre = tape.add(tape.matmul(x_t, layer.w_x, false, true),
                     tape.matmul(h_prev, layer.w_h, false, true));
  pre = tape.add_bias(pre, layer.b);
  return gates_to_state(tape, pre, c_prev, hidden);
}

Var lstm_forward(Tape& tape, const std::vector<LayerVars>& layers, Var x) {
  const std::size_t steps = tape.value(x).rows();
  if (steps == 0) throw std::length_error("lstm_forward: empty input sequence");
  Var input = x;
  for (const LayerVars& layer : layers) {
    const std::size_t hidden = tape.value(layer.w_h).cols();
    if (tape.value(input).cols() != tape.value(layer.w_x).cols())
      throw ShapeError("lstm_forward: input " + tape.value(input).shape_str() +
                       " does not match w_x " + tape.value(layer.w_x).shape_str());
    // Input projections for all timesteps in one product.
    const Var projected = tape.add_bias(tape.matmul(input, layer.w_x, false, true), layer.b);
    std::vector<Var> outputs;
    outputs.reserve(steps);
    std::optional<Var> h, c;
    for (std::size_t t = 0; t < steps; ++t) {
      Var pre = tape.row(projected, t);
      // h_0 = c_0 = 0, so the recurrent terms vanish at t = 0.
      if (h) pre = tape.add(pre, tape.matmul(*h, layer.w_h, false, true));
      const StepVars next = gates_to_state(tape, pre, c, hidden);
      h = next.h;
      c = next.c;
      outputs.push_back(next.h);
    }
    input = tape.stack_rows(outputs);
  }
  return input;
}

AttentionVars attention_forward(Tape& tape, Var h, Var w_a, std::optional<Var> b_a) {
  const Matrix& hv = tape.value(h);
  if (hv.rows() == 0) throw std::length_error("attention_forward: empty hidden sequence");
  const Matrix& wv = tape.value(w_a);
  if (wv.rows() != hv.cols() || wv.cols() != hv.cols())
    throw ShapeError("attention_forward: h " + hv.shape_str() + " with w_a " + wv.shape_str());
  AttentionVars a{};
  a.summation = tape.sum_rows(h);
  a.energies = tape.matmul(h, w_a, false, true);
  if (b_a) a.energies = tape.add_bias(a.energies, *b_a);
  a.scores = tape.matmul(a.energies, a.summation, false, true);
  a.weights = tape.softmax(a.scores);
  a.context = tape.matmul(a.weights, h, true, false);
  return a;
}

Var head_forward(Tape& tape, Var context, Var summation, const ModelVars& vars,
                 HeadActivation activation) {
  const Var z = tape.concat_cols(context, summation);
  Var y = tape.add_bias(tape.matmul(z, vars.w_1, false, true), vars.b_1);
  if (vars.w_2) {
    if (activation == HeadActivation::kTanh) y = tape.tanh(y);
    y = tape.add_bias(tape.matmul(y, *vars.w_2, false, true), *vars.b_2);
  }
  return y;
}

ForwardVars model_forward(Tape& tape, const ModelVars& vars, const ModelConfig& config, Var x) {
  if (tape.value(x).cols() != static_cast<std::size_t>(config.input_size))
    throw ShapeError("model_forward: input " + tape.value(x).shape_str() +
                     " does not match input_size " + std::to_string(config.input_size));
  if (vars.layers.size() != static_cast<std::size_t>(config.num_layers))
    throw ShapeError("model_forward: parameter layer count does not match config");
  ForwardVars out{};
  out.hidden = lstm_forward(tape, vars.layers, x);
  if (config.use_attention) {
    if (!vars.w_a) throw ShapeError("model_forward: attention enabled but w_a missing");
    out.attention = attention_forward(tape, out.hidden, *vars.w_a, vars.b_a);
    out.output = head_forward(tape, out.attention->context, out.attention->summation, vars,
                              config.head_activation);
  } else {
    const Var last = tape.row(out.hidden, tape.value(out.hidden).rows() - 1);
    out.output = head_forward(tape, last, tape.sum_rows(out.hidden), vars, config.head_activation);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

CellState lstm_cell_step(const LstmLayerParams& layer, const Matrix& x_t, const Matrix& h_prev,
                         const Matrix& c_prev) {
  Tape tape;
  const LayerVars lv{tape.constant(layer.w_x), tape.constant(layer.w_h), tape.constant(layer.b)};
  const StepVars s = lstm_cell_step(tape, lv, tape.constant(x_t), tape.constant(h_prev),
                                    tape.constant(c_prev));
  return {tape.value(s.h), tape.value(s.c)};
}

Matrix lstm_forward(const std::vector<LstmLayerParams>& layers, const Matrix& x) {
  Tape tape;
  std::vector<LayerVars> lv;
  for (const auto& l : layers)
    lv.push_back({tape.constant(l.w_x), tape.constant(l.w_h), tape.constant(l.b)});
  return tape.value(lstm_forward(tape, lv, tape.constant(x)));
}

namespace {

AttentionResult collect(const Tape& tape, const AttentionVars& a) {
  AttentionResult r;
  r.context = tape.value(a.context);
  r.summation = tape.value(a.summation);
  r.energies = tape.value(a.energies);
  const auto sc = tape.value(a.scores).values();
  const auto w = tape.value(a.weights).values();
  r.scores.assign(sc.begin(), sc.end());
  r.weights.assign(w.begin(), w.end());
  return r;
}

}  // namespace

AttentionResult attention_forward(const Matrix& h, const AttentionParams& attention) {
  Tape tape;
  std::optional<Var> b;
  if (!attention.b_a.empty()) b = tape.constant(attention.b_a);
  const AttentionVars a = attention_forward(tape, tape.constant(h), tape.constant(attention.w_a), b);
  return collect(tape, a);
}

double head_forward(const Matrix& context, const Matrix& summation, const HeadParams& head,
                    HeadActivation activation) {
  Tape tape;
  ModelVars v;
  v.w_1 = tape.constant(head.w_1);
  v.b_1 = tape.constant(head.b_1);
  if (!head.w_2.empty()) {
    v.w_2 = tape.constant(head.w_2);
    v.b_2 = tape.constant(head.b_2);
  }
  const Var y =
      head_forward(tape, tape.constant(context), tape.constant(summation), v, activation);
  return tape.value(y)[0];
}

Prediction predict(const ModelParams& params, const ModelConfig& config, const Matrix& x,
                   bool with_diagnostics) {
  Tape tape;
  const ModelVars vars = record_params(tape, params, false);
  const ForwardVars f = model_forward(tape, vars, config, tape.constant(x));
  Prediction p;
  p.value = tape.value(f.output)[0];
  if (with_diagnostics && f.attention) p.attention = collect(tape, *f.attention);
  return p;
}

}  // namespace stepattn
