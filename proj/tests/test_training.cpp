#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "san/san.hpp"

using namespace san;

namespace {

Tensor param_with_grad(std::vector<real> values, std::vector<real> grad) {
  const std::size_t n = values.size();
  Tensor t({n}, std::move(values), true);
  std::copy(grad.begin(), grad.end(), t.mutable_grad().begin());
  return t;
}

real norm_of(const ParamList& params) {
  real sq = 0;
  for (const auto& p : params)
    for (real g : p.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

ModelConfig tiny_model(const DatasetSplit& d, std::size_t layers, real dropout = 0) {
  ModelConfig c;
  c.vocab_size = d.vocab.size();
  c.answer_count = d.answers.size();
  c.raw_dim = d.features.begin()->second.raw_dim;
  c.embed_dim = 8;
  c.hidden_dim = 8;
  c.attention_dim = 8;
  c.layers = layers;
  c.dropout = dropout;
  return c;
}

DatasetSplit small_split(std::size_t n, std::uint64_t seed, std::vector<QType> types = {QType::one_hop}) {
  GeneratorConfig g;
  g.types = std::move(types);
  return generate_split(g, n, seed, 1, "t");
}

}  // namespace

// ------------------------------------------------------------------- loss

TEST(NllLoss, OneHotAndUniform) {
  const std::vector<real> one_hot{0, 1, 0};
  EXPECT_EQ(nll_loss(std::span<const real>(one_hot), 1), 0);
  const std::vector<real> uniform(4, 0.25);
  EXPECT_NEAR(nll_loss(std::span<const real>(uniform), 2), std::log(4.0), 1e-15);
  EXPECT_NEAR(std::log(4.0), 1.3863, 1e-4);
}

TEST(NllLoss, TargetOutOfRange) {
  const std::vector<real> p{0.5, 0.5};
  EXPECT_THROW(nll_loss(std::span<const real>(p), 2), ContractError);
}

TEST(NllLoss, FusedMatchesScalarOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<real> n(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<real> logits(6);
    for (auto& x : logits) x = n(rng);
    const std::size_t target = static_cast<std::size_t>(trial) % 6;
    // Oracle: plain −log(exp(z_t) / Σ exp(z_j)) in long double.
    long double denom = 0;
    for (real z : logits) denom += std::exp(static_cast<long double>(z));
    const long double oracle = -std::log(std::exp(static_cast<long double>(logits[target])) / denom);
    const Tensor loss = nll_loss(Tensor::matrix(1, 6, logits), {target});
    EXPECT_NEAR(loss.item(), static_cast<double>(oracle), 1e-12);
  }
}

TEST(NllLoss, BatchMeanOverRows) {
  const Tensor logits = Tensor::matrix(2, 2, {0, 0, 0, std::log(3.0)});
  const Tensor loss = nll_loss(logits, {0, 1});
  EXPECT_NEAR(loss.item(), (std::log(2.0) + std::log(4.0 / 3.0)) / 2, 1e-15);
}

// --------------------------------------------------------------- clipping

TEST(ClipGradients, ScalesToThreshold) {
  ParamList params{{"a", param_with_grad({0, 0}, {6, 8})}};
  EXPECT_EQ(global_grad_norm(params), 10);
  EXPECT_EQ(clip_gradients(params, 5), 0.5);
  EXPECT_EQ(norm_of(params), 5);
  EXPECT_EQ(params[0].tensor.grad()[0], 3);
}

TEST(ClipGradients, BelowThresholdUnchanged) {
  ParamList params{{"a", param_with_grad({0}, {3})}};
  EXPECT_EQ(clip_gradients(params, 5), 1);
  EXPECT_EQ(params[0].tensor.grad()[0], 3);
}

TEST(ClipGradients, RandomSetsEndBelowThreshold) {
  std::mt19937_64 rng(5);
  std::normal_distribution<real> n(0, 10);
  for (int trial = 0; trial < 50; ++trial) {
    ParamList params;
    for (int k = 0; k < 3; ++k) {
      std::vector<real> g(1 + rng() % 7);
      for (auto& x : g) x = n(rng);
      params.push_back({"p" + std::to_string(k), param_with_grad(std::vector<real>(g.size(), 0), g)});
    }
    clip_gradients(params, 5);
    EXPECT_LE(norm_of(params), 5 + 1e-9);
  }
}

TEST(ClipGradients, Errors) {
  ParamList params{{"a", param_with_grad({0}, {std::numeric_limits<real>::infinity()})}};
  EXPECT_THROW(clip_gradients(params, 5), NumericError);
  EXPECT_THROW(clip_gradients(params, 0), ContractError);
}

// --------------------------------------------------------------- momentum

TEST(SgdMomentum, FirstStepAndDecay) {
  Tensor theta = param_with_grad({1}, {1});
  ParamList params{{"t", theta}};
  auto state = OptimizerState::for_params(params);
  sgd_momentum_step(params, state, 0.1, 0.9);
  EXPECT_NEAR(theta[0], 0.9, 1e-15);
  EXPECT_NEAR(state.velocity[0][0], -0.1, 1e-15);
  theta.zero_grad();
  sgd_momentum_step(params, state, 0.1, 0.9);
  EXPECT_NEAR(theta[0], 0.9 - 0.09, 1e-15);
}

TEST(SgdMomentum, QuadraticMatchesScalarRecurrence) {
  // f(θ) = θ²/2, so g = θ. Oracle: v ← μv − lr·θ, θ ← θ + v.
  Tensor theta({1}, {1.0}, true);
  ParamList params{{"t", theta}};
  auto state = OptimizerState::for_params(params);
  double t = 1, v = 0;
  for (int step = 0; step < 5; ++step) {
    theta.mutable_grad()[0] = theta[0];
    sgd_momentum_step(params, state, 0.1, 0.9);
    v = 0.9 * v - 0.1 * t;
    t += v;
    EXPECT_NEAR(theta[0], t, 1e-15) << "step " << step;
  }
  // Two steps by hand: 1 → 0.9 → 0.9 − 0.09 − 0.09 = 0.72.
  Tensor fresh({1}, {1.0}, true);
  ParamList two{{"t", fresh}};
  auto s2 = OptimizerState::for_params(two);
  for (int step = 0; step < 2; ++step) {
    fresh.mutable_grad()[0] = fresh[0];
    sgd_momentum_step(two, s2, 0.1, 0.9);
  }
  EXPECT_NEAR(fresh[0], 0.72, 1e-15);
}

TEST(SgdMomentum, ZeroMomentumIsPlainSgd) {
  Tensor theta = param_with_grad({2, -1}, {0.5, 4});
  ParamList params{{"t", theta}};
  auto state = OptimizerState::for_params(params);
  sgd_momentum_step(params, state, 0.25, 0);
  EXPECT_EQ(theta[0], 2 - 0.25 * 0.5);
  EXPECT_EQ(theta[1], -1 - 0.25 * 4);
}

TEST(SgdMomentum, ShapeMismatch) {
  ParamList params{{"t", param_with_grad({1, 2}, {0, 0})}};
  OptimizerState state;
  state.velocity = {{0}};
  EXPECT_THROW(sgd_momentum_step(params, state, 0.1, 0.9), ContractError);
  state.velocity = {};
  EXPECT_THROW(sgd_momentum_step(params, state, 0.1, 0.9), ContractError);
}

// ---------------------------------------------------------------- dropout

TEST(Dropout, EvalIsBitwiseIdentity) {
  Rng rng(1);
  const Tensor x = Tensor::matrix(2, 3, {1, -2, 3.5, 0.25, 7, -1e-3});
  const Tensor y = dropout(x, 0.5, Mode::eval, rng);
  EXPECT_EQ(y.data(), x.data());
  EXPECT_EQ(dropout(x, 0, Mode::train, rng).data(), x.data());
}

TEST(Dropout, InvertedScalingIsUnbiased) {
  Rng rng(2);
  const std::size_t n = 1'000'000;
  const Tensor ones = Tensor::filled({n}, 1);
  const Tensor y = dropout(ones, 0.5, Mode::train, rng);
  double sum = 0;
  std::size_t zeros = 0;
  for (real v : y.values()) {
    sum += v;
    zeros += v == 0;
    ASSERT_TRUE(v == 0 || v == 2);
  }
  EXPECT_NEAR(sum / n, 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.5, 0.01);
}

TEST(Dropout, RateOutOfRange) {
  Rng rng(3);
  const Tensor x = Tensor::filled({3}, 1);
  EXPECT_THROW(dropout(x, 1.0, Mode::train, rng), ContractError);
  EXPECT_THROW(dropout(x, -0.1, Mode::eval, rng), ContractError);
}

// ------------------------------------------------------------ train epoch

TEST(TrainEpoch, ZeroLearningRateIsPureEvaluation) {
  const DatasetSplit data = small_split(20, 1);
  Rng rng(4);
  SanModel model = SanModel::init(tiny_model(data, 2), rng);
  std::vector<std::vector<real>> before;
  for (const auto& p : model.parameters()) before.push_back(p.tensor.data());
  TrainConfig cfg;
  cfg.learning_rate = 0;
  cfg.batch_size = 7;
  auto state = OptimizerState::for_params(model.parameters());
  const EpochReport r = train_epoch(model, data, cfg, state, 1);
  const auto after = model.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i].tensor.data(), before[i]) << after[i].name;
  EXPECT_NEAR(r.mean_loss, evaluate(model, data).mean_loss, 1e-12);
}

TEST(TrainEpoch, FixedSeedIsReproducible) {
  const DatasetSplit data = small_split(30, 2);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 3;
  cfg.seed = 9;
  auto run = [&] {
    Rng rng(cfg.seed);
    SanModel model = SanModel::init(tiny_model(data, 2, 0.5), rng);
    auto reports = fit(model, data, &data, cfg);
    return std::make_pair(reports, encode_checkpoint(model, data.vocab, data.answers));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(TrainEpoch, LossDecreasesOnSmallSet) {
  const DatasetSplit data = small_split(32, 3);
  Rng rng(5);
  SanModel model = SanModel::init(tiny_model(data, 1), rng);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 8;
  cfg.epochs = 15;
  const auto reports = fit(model, data, nullptr, cfg);
  EXPECT_LT(reports.back().mean_loss, reports.front().mean_loss);
  EXPECT_FALSE(reports.back().val_accuracy.has_value());
}

TEST(TrainEpoch, EmptyDatasetRejected) {
  DatasetSplit empty;
  const DatasetSplit data = small_split(4, 1);
  Rng rng(1);
  SanModel model = SanModel::init(tiny_model(data, 1), rng);
  auto state = OptimizerState::for_params(model.parameters());
  EXPECT_THROW(train_epoch(model, empty, TrainConfig{}, state), ContractError);
}

TEST(TrainEpoch, ReportJsonFields) {
  EpochReport r;
  r.epoch = 3;
  r.mean_loss = 0.5;
  r.train_accuracy = 0.25;
  r.learning_rate = 0.1;
  r.seed = 7;
  const auto j = r.to_json();
  EXPECT_EQ(j.at("epoch"), 3);
  EXPECT_TRUE(j.at("val_acc").is_null());
  for (const char* key : {"mean_loss", "train_acc", "lr", "seed"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.momentum = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.clip_norm = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ------------------------------------------------------------ grid search

TEST(GridSearch, SingleCandidateReturned) {
  const DatasetSplit data = small_split(16, 4);
  TrainConfig cfg;
  cfg.batch_size = 8;
  EXPECT_EQ(grid_search_lr(tiny_model(data, 1), data, data, cfg, {0.05}, 1), real(0.05));
}

TEST(GridSearch, ZeroRateLoses) {
  const DatasetSplit train = small_split(40, 5), val = small_split(40, 6);
  TrainConfig cfg;
  cfg.batch_size = 8;
  EXPECT_EQ(grid_search_lr(tiny_model(train, 1), train, val, cfg, {0.0, 0.1}, 15), real(0.1));
}

TEST(GridSearch, ChoiceAttainsBestValidationByRerun) {
  const DatasetSplit train = small_split(40, 7), val = small_split(40, 8);
  TrainConfig cfg;
  cfg.batch_size = 8;
  const std::vector<real> candidates{1e-4, 1e-2, 1.0};
  const real best = grid_search_lr(tiny_model(train, 1), train, val, cfg, candidates, 5);
  auto rerun = [&](real lr) {
    TrainConfig c = cfg;
    c.learning_rate = lr;
    c.epochs = 5;
    Rng rng(c.seed);
    SanModel m = SanModel::init(tiny_model(train, 1), rng);
    fit(m, train, nullptr, c);
    return evaluate(m, val).accuracy;
  };
  const real chosen = rerun(best);
  for (real lr : candidates) EXPECT_GE(chosen, rerun(lr)) << lr;
}

TEST(GridSearch, AllDivergedRaises) {
  const DatasetSplit data = small_split(8, 9);
  TrainConfig cfg;
  cfg.batch_size = 4;
  const real inf = std::numeric_limits<real>::infinity();
  EXPECT_THROW(grid_search_lr(tiny_model(data, 1), data, data, cfg, {inf}, 1), SearchError);
  EXPECT_THROW(grid_search_lr(tiny_model(data, 1), data, data, cfg, {}, 1), ContractError);
}
