#include <doctest.h>

#include <cmath>

#include "stepattn/model.hpp"
#include "stepattn/pipeline.hpp"
#include "stepattn/rng.hpp"
#include "stepattn/train.hpp"
#include "test_util.hpp"

using namespace stepattn;
using testutil::random_matrix;

namespace {

ModelConfig tiny(int hidden = 4, bool attention = true) {
  ModelConfig c;
  c.hidden_size = hidden;
  c.num_layers = 2;
  c.use_attention = attention;
  return c;
}

std::vector<PreparedSample> random_prepared(std::size_t n, std::uint64_t seed,
                                            std::size_t max_len = 12) {
  Rng rng(seed);
  std::vector<PreparedSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng.index(max_len);
    out.push_back({"s" + std::to_string(i), random_matrix(len, 1, rng, 0, 1),
                   rng.uniform(2.0, 9.0)});
  }
  return out;
}

}  // namespace

TEST_CASE("mae_loss examples") {
  CHECK(mae_loss(std::vector<double>{3, 4}, std::vector<double>{3, 4}) == 0.0);
  CHECK(mae_loss(std::vector<double>{80}, std::vector<double>{78}) == 2.0);
  CHECK(mae_loss(std::vector<double>{1, 3}, std::vector<double>{2, 2}) == 1.0);
  CHECK_THROWS(mae_loss(std::vector<double>{1}, std::vector<double>{1, 2}));
  CHECK_THROWS(mae_loss(std::vector<double>{}, std::vector<double>{}));
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(lr_at_epoch(c, 0) == 0.001);
  CHECK(lr_at_epoch(c, 74) == 0.001);
  CHECK(lr_at_epoch(c, 75) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(lr_at_epoch(c, 249) == doctest::Approx(0.000001).epsilon(1e-12));
  for (int e = 1; e < c.epochs; ++e) CHECK(lr_at_epoch(c, e) <= lr_at_epoch(c, e - 1));
  CHECK_THROWS_AS(lr_at_epoch(c, 250), std::out_of_range);
  CHECK_THROWS_AS(lr_at_epoch(c, -1), std::out_of_range);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.lr0 = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.threads = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Matrix p{{1.5, -2.0}};
  std::vector<Matrix*> ps{&p};
  AdamState st = AdamState::like(std::vector<const Matrix*>{&p});
  const std::vector<Matrix> g{Matrix(1, 2)};
  adam_step(ps, g, st, 0.01);
  CHECK(p == Matrix{{1.5, -2.0}});
  CHECK(st.t == 1);
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
  Matrix p{{0.0, 0.0}};
  std::vector<Matrix*> ps{&p};
  AdamState st = AdamState::like(std::vector<const Matrix*>{&p});
  adam_step(ps, std::vector<Matrix>{Matrix{{3.0, -0.2}}}, st, 0.01);
  CHECK(p(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK_THROWS_AS(adam_step(ps, std::vector<Matrix>{Matrix(2, 2)}, st, 0.01), ShapeError);
}

TEST_CASE("adam matches a scalar oracle over several steps") {
  Matrix p{{0.7}};
  std::vector<Matrix*> ps{&p};
  AdamState st = AdamState::like(std::vector<const Matrix*>{&p});
  double x = 0.7, m = 0, v = 0;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2 * x - 1;  // gradient of (x - 0.5)^2 style objective
    adam_step(ps, std::vector<Matrix>{Matrix{{2 * p(0, 0) - 1}}}, st, lr, b1, b2, eps);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(std::abs(p(0, 0) - x) < 1e-12);
  }
}

TEST_CASE("batch gradient equals the mean of per-sample gradients") {
  const ModelConfig c = tiny(3);
  const ModelParams p = init_params(c, 2);
  const auto samples = random_prepared(3, 4);
  std::vector<const PreparedSample*> batch{&samples[0], &samples[1], &samples[2]};

  std::vector<Matrix> batch_grads = zero_grads_like(p);
  const double loss = batch_gradient(p, c, batch, batch_grads);

  std::vector<Matrix> mean = zero_grads_like(p);
  double loss_oracle = 0;
  for (const auto& s : samples) {
    std::vector<Matrix> g = zero_grads_like(p);
    const double y = accumulate_sample_gradient(p, c, s, 1.0, g);
    loss_oracle += std::abs(y - s.label) / 3.0;
    for (std::size_t k = 0; k < g.size(); ++k) mean[k] = add(mean[k], scale(g[k], 1.0 / 3.0));
  }
  CHECK(loss == doctest::Approx(loss_oracle).epsilon(1e-14));
  for (std::size_t k = 0; k < mean.size(); ++k) CHECK(max_abs_diff(mean[k], batch_grads[k]) < 1e-14);

  // The batch-loss gradient from finite differences of the mean absolute error.
  ModelParams q = p;
  const auto tensors = q.tensors();
  const auto fd = fd_gradient(
      [&] {
        double l = 0;
        for (const auto& s : samples) l += std::abs(predict(q, c, s.x).value - s.label);
        return l / 3.0;
      },
      std::vector<Matrix*>(tensors.begin(), tensors.end()), 1e-5);
  CHECK(max_relative_error(batch_grads, fd) < 1e-4);
}

TEST_CASE("batch gradient does not depend on the thread count") {
  const ModelConfig c = tiny(4);
  const ModelParams p = init_params(c, 5);
  const auto samples = random_prepared(7, 9);
  std::vector<const PreparedSample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  std::vector<Matrix> g1 = zero_grads_like(p), g4 = zero_grads_like(p);
  batch_gradient(p, c, batch, g1, 1);
  batch_gradient(p, c, batch, g4, 4);
  CHECK(g1 == g4);
}

TEST_CASE("constant labels converge below 0.1 within 50 epochs at H = 8") {
  auto samples = random_prepared(24, 11, 20);
  for (auto& s : samples) s.label = 7.0;
  TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 4;
  tc.lr0 = 0.03;
  tc.seed = 3;
  const ModelConfig c = tiny(8);
  const FitResult r = fit(c, init_params(c, 3), samples, tc);
  REQUIRE(r.history.epochs.size() == 50);
  double best = 1e9;
  for (const auto& e : r.history.epochs) best = std::min(best, e.train_loss);
  CHECK(best < 0.1);
}

TEST_CASE("same seed gives an identical history and parameters") {
  const auto train = random_prepared(20, 1);
  const auto val = random_prepared(5, 2);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 6;
  tc.seed = 77;
  const ModelConfig c = tiny(4);
  const FitResult a = fit(c, init_params(c, 1), train, tc, &val);
  const FitResult b = fit(c, init_params(c, 1), train, tc, &val);
  CHECK(a.history == b.history);
  CHECK(a.params == b.params);
  REQUIRE(a.history.epochs.back().validation_mae.has_value());
  CHECK(a.history.epochs[0].lr == tc.lr0);

  TrainConfig threaded = tc;
  threaded.threads = 3;
  const FitResult t = fit(c, init_params(c, 1), train, threaded, &val);
  CHECK(t.params == a.params);

  TrainConfig other = tc;
  other.seed = 78;
  CHECK_FALSE(fit(c, init_params(c, 1), train, other).params == a.params);
}

TEST_CASE("epoch callback sees every epoch") {
  const auto train = random_prepared(5, 3);
  TrainConfig tc;
  tc.epochs = 3;
  const ModelConfig c = tiny(2);
  std::vector<int> seen;
  fit(c, init_params(c, 1), train, tc, nullptr, [&](const EpochRecord& e) { seen.push_back(e.epoch); });
  CHECK(seen == std::vector<int>{0, 1, 2});
}

TEST_CASE("mixed lengths 37, 512 and 1430 train in one batch") {
  Rng rng(3);
  std::vector<PreparedSample> samples;
  for (std::size_t len : {37u, 512u, 1430u})
    samples.push_back({"l" + std::to_string(len), random_matrix(len, 1, rng, 0, 1),
                       static_cast<double>(len) / 40.0});
  TrainConfig tc;
  tc.epochs = 1;
  const ModelConfig c = tiny(4);
  FitResult r;
  CHECK_NOTHROW(r = fit(c, init_params(c, 1), samples, tc));
  CHECK(std::isfinite(r.history.epochs[0].train_loss));
}

TEST_CASE("fit errors") {
  const ModelConfig c = tiny(2);
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS(fit(c, init_params(c, 1), std::vector<PreparedSample>{}, tc));

  auto samples = random_prepared(3, 1);
  samples[1].x(0, 0) = std::nan("");
  try {
    fit(c, init_params(c, 1), samples, tc);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }

  const auto raw = synthesize_dataset(SynthFamily{}, 2, 1);
  ModelConfig three = c;
  three.input_size = 3;
  CHECK_THROWS(fit(three, init_params(three, 1), raw, tc, InputOptions{}));
}

TEST_CASE("prepare keeps labels and applies the pipeline") {
  const auto raw = synthesize_dataset(SynthFamily{}, 4, 2);
  const auto prepared = prepare(raw, {InputMode::kL2Xyz, 1, false});
  REQUIRE(prepared.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(prepared[i].label == static_cast<double>(raw[i].step_count));
    CHECK(prepared[i].x.cols() == 4);
    CHECK(prepared[i].id == raw[i].id);
  }
  const ModelConfig c = tiny(2);
  CHECK(predict_all(init_params(c, 1), c, prepare(raw, {})).size() == 4);
}
