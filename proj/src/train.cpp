#include "stepattn/train.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include "stepattn/log.hpp"
#include "stepattn/rng.hpp"

namespace stepattn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
  if (!(lr_decay_factor > 0.0)) throw std::invalid_argument("lr_decay_factor must be positive");
  if (lr_step_epochs < 1) throw std::invalid_argument("lr_step_epochs must be >= 1");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (grad_clip < 0.0) throw std::invalid_argument("grad_clip must be >= 0");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::vector<PreparedSample> prepare(const std::vector<SignalSample>& samples,
                                    const InputOptions& options) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const SignalSample& s : samples)
    out.push_back({s.id, build_input(s, options).channels, static_cast<double>(s.step_count)});
  return out;
}

double mae_loss(std::span<const double> preds, std::span<const double> trues) {
  if (preds.size() != trues.size())
    throw std::invalid_argument("mae_loss: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(trues.size()) + " labels");
  if (preds.empty()) throw std::invalid_argument("mae_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += std::abs(preds[i] - trues[i]);
  return total / static_cast<double>(preds.size());
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  if (epoch < 0 || epoch >= config.epochs)
    throw std::out_of_range("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(config.epochs) + ")");
  return config.lr0 / std::pow(config.lr_decay_factor, epoch / config.lr_step_epochs);
}

AdamState AdamState::like(std::span<const Matrix* const> params) {
  AdamState s;
  for (const Matrix* p : params) {
    s.m.emplace_back(p->rows(), p->cols());
    s.v.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " tensors, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.m.size()) + " moment buffers");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(*params[k], grads[k], "adam_step");
    require_same_shape(*params[k], state.m[k], "adam_step");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    const Matrix& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

std::vector<Matrix> zero_grads_like(const ModelParams& params) {
  std::vector<Matrix> g;
  for (const Matrix* m : params.tensors()) g.emplace_back(m->rows(), m->cols());
  return g;
}

double accumulate_sample_gradient(const ModelParams& params, const ModelConfig& config,
                                  const PreparedSample& sample, double weight,
                                  std::vector<Matrix>& grads) {
  Tape tape;
  tape.reserve(64 + 32 * sample.x.rows() * static_cast<std::size_t>(config.num_layers));
  const ModelVars vars = record_params(tape, params, true);
  const ForwardVars f = model_forward(tape, vars, config, tape.constant(sample.x));
  const Var residual = tape.sub(f.output, tape.constant(Matrix(1, 1, sample.label)));
  const Var root = tape.scale(tape.abs(residual), weight);
  tape.backward(root);
  const std::vector<Var> leaves = vars.all();
  if (leaves.size() != grads.size())
    throw ShapeError("accumulate_sample_gradient: gradient buffer count mismatch");
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const Matrix& g = tape.grad(leaves[k]);
    require_same_shape(g, grads[k], "accumulate_sample_gradient");
    for (std::size_t i = 0; i < g.size(); ++i) grads[k][i] += g[i];
  }
  return tape.value(f.output)[0];
}

double batch_gradient(const ModelParams& params, const ModelConfig& config,
                      std::span<const PreparedSample* const> batch, std::vector<Matrix>& grads,
                      int threads) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<double> preds(batch.size());

  if (threads <= 1 || batch.size() == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::vector<Matrix> local = zero_grads_like(params);
      preds[i] = accumulate_sample_gradient(params, config, *batch[i], weight, local);
      for (std::size_t k = 0; k < grads.size(); ++k)
        for (std::size_t j = 0; j < grads[k].size(); ++j) grads[k][j] += local[k][j];
    }
  } else {
    std::vector<std::vector<Matrix>> local(batch.size());
    std::vector<std::exception_ptr> errors(batch.size());
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), batch.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < batch.size(); i += workers) {
          try {
            local[i] = zero_grads_like(params);
            preds[i] = accumulate_sample_gradient(params, config, *batch[i], weight, local[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t k = 0; k < grads.size(); ++k)
        for (std::size_t j = 0; j < grads[k].size(); ++j) grads[k][j] += local[i][k][j];
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) loss += std::abs(preds[i] - batch[i]->label);
  return loss * weight;
}

bool operator==(const TrainHistory& a, const TrainHistory& b) {
  if (a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto& x = a.epochs[i];
    const auto& y = b.epochs[i];
    if (x.epoch != y.epoch || x.train_loss != y.train_loss || x.lr != y.lr ||
        x.validation_mae != y.validation_mae)
      return false;
  }
  return true;
}

std::vector<double> predict_all(const ModelParams& params, const ModelConfig& config,
                                const std::vector<PreparedSample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(predict(params, config, s.x).value);
  return out;
}

namespace {

void clip_gradients(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (Matrix& g : grads)
    for (double& v : g.values()) v *= s;
}

}  // namespace

FitResult fit(const ModelConfig& model_config, ModelParams params,
              const std::vector<PreparedSample>& train, const TrainConfig& config,
              const std::vector<PreparedSample>* validation, const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  check_params(params, model_config);
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  for (const auto& s : train)
    if (s.x.cols() != static_cast<std::size_t>(model_config.input_size))
      throw ShapeError("fit: sample '" + s.id + "' has " + std::to_string(s.x.cols()) +
                       " channels, model expects " + std::to_string(model_config.input_size));

  FitResult result;
  AdamState adam = AdamState::like(params.tensors());
  std::vector<std::size_t> order(train.size());
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(config.seed ^ static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);

    const double lr = lr_at_epoch(config, epoch);
    double abs_err_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<const PreparedSample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      std::vector<Matrix> grads = zero_grads_like(params);
      const double loss = batch_gradient(params, model_config, batch, grads, config.threads);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << batch_index;
        throw TrainingError(os.str());
      }
      abs_err_total += loss * static_cast<double>(batch.size());
      if (config.grad_clip > 0.0) clip_gradients(grads, config.grad_clip);
      adam_step(params.tensors(), grads, adam, lr, config.beta1, config.beta2, config.adam_eps);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = abs_err_total / static_cast<double>(train.size());
    if (validation && !validation->empty()) {
      const auto preds = predict_all(params, model_config, *validation);
      std::vector<double> trues;
      for (const auto& s : *validation) trues.push_back(s.label);
      rec.validation_mae = mae_loss(preds, trues);
    }
    if (config.verbose) {
      std::ostringstream os;
      os << "epoch " << epoch << " lr " << lr << " train_mae " << rec.train_loss;
      if (rec.validation_mae) os << " val_mae " << *rec.validation_mae;
      log_info(os.str());
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.params = std::move(params);
  return result;
}

FitResult fit(const ModelConfig& model_config, ModelParams params,
              const std::vector<SignalSample>& train, const TrainConfig& config,
              const InputOptions& input) {
  if (channel_count(input.mode) != model_config.input_size)
    throw std::invalid_argument("fit: input mode '" + std::string(to_string(input.mode)) +
                                "' yields " + std::to_string(channel_count(input.mode)) +
                                " channels but input_size is " +
                                std::to_string(model_config.input_size));
  return fit(model_config, std::move(params), prepare(train, input), config);
}

}  // namespace stepattn
