#ifndef SAN_TRAINING_HPP
#define SAN_TRAINING_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "san/attention.hpp"
#include "san/dataset.hpp"
#include "san/dropout.hpp"

namespace san {

struct TrainConfig {
  real learning_rate = 0.05;
  std::vector<real> lr_grid{0.01, 0.03, 0.1};
  real momentum = 0.9;
  std::size_t batch_size = 32;
  real clip_norm = 5.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(momentum >= 0) || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
    if (!(clip_norm > 0)) throw ConfigError("clip threshold must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (!(learning_rate >= 0)) throw ConfigError("learning rate must be non-negative");
  }
};

/// −log p_ans[target] for a single distribution.
inline real nll_loss(std::span<const real> p_ans, std::size_t target) {
  if (target >= p_ans.size()) {
    throw ContractError("nll_loss: target " + std::to_string(target) + " outside " +
                        std::to_string(p_ans.size()) + " answers");
  }
  return -std::log(p_ans[target]);
}

/// Batch-mean negative log-likelihood straight from logits (B × |A|).
inline Tensor nll_loss(const Tensor& logits, const std::vector<std::size_t>& targets) {
  return ops::cross_entropy(logits, targets);
}

inline real global_grad_norm(const ParamList& params) {
  real sq = 0;
  for (const auto& p : params) {
    for (real g : p.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

/// Scales every gradient by τ/N when the global norm N exceeds τ. Returns the
/// applied factor (1 when unchanged).
inline real clip_gradients(const ParamList& params, real threshold) {
  if (!(threshold > 0)) throw ContractError("clip_gradients: threshold must be positive");
  const real norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("clip_gradients: non-finite gradient norm");
  if (norm <= threshold) return 1;
  const real factor = threshold / norm;
  for (auto p : params) {
    if (!p.tensor.has_grad()) continue;
    for (auto& g : p.tensor.mutable_grad()) g *= factor;
  }
  return factor;
}

/// Momentum buffers, one per parameter, zero-initialised.
struct OptimizerState {
  std::vector<std::vector<real>> velocity;

  static OptimizerState for_params(const ParamList& params) {
    OptimizerState s;
    for (const auto& p : params) s.velocity.emplace_back(p.tensor.size(), real(0));
    return s;
  }
};

/// Classical momentum: v ← μ·v − lr·g, θ ← θ + v.
inline void sgd_momentum_step(const ParamList& params, OptimizerState& state, real lr, real momentum) {
  if (state.velocity.size() != params.size()) {
    throw ContractError("sgd_momentum_step: optimizer state has " +
                        std::to_string(state.velocity.size()) + " buffers for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    auto& v = state.velocity[k];
    if (v.size() != t.size()) {
      throw ContractError("sgd_momentum_step: velocity shape mismatch for " + params[k].name);
    }
    auto theta = t.mutable_values();
    auto g = t.grad();
    const bool has_grad = t.has_grad();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum * v[i] - lr * (has_grad ? g[i] : real(0));
      theta[i] += v[i];
    }
  }
}

struct EpochReport {
  std::size_t epoch = 0;
  real mean_loss = 0;
  real train_accuracy = 0;
  std::optional<real> val_accuracy;
  real learning_rate = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"epoch", epoch},
                     {"mean_loss", mean_loss},
                     {"train_acc", train_accuracy},
                     {"lr", learning_rate},
                     {"seed", seed}};
    j["val_acc"] = val_accuracy ? nlohmann::json(*val_accuracy) : nlohmann::json(nullptr);
    return j;
  }

  bool operator==(const EpochReport&) const = default;
};

namespace detail {
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// One pass over shuffled mini-batches: forward (train-mode dropout), mean
/// NLL, backward, global-norm clipping, momentum step.
inline EpochReport train_epoch(SanModel& model, const DatasetSplit& data, const TrainConfig& cfg,
                               OptimizerState& state, std::size_t epoch = 0) {
  if (data.size() == 0) throw ContractError("train_epoch: empty dataset");
  cfg.validate();
  const ParamList params = model.parameters();
  Rng dropout_rng(detail::mix_seed(cfg.seed, 2 * epoch + 1));
  real loss_sum = 0;
  std::size_t correct = 0;
  for (const auto& idx : batch_indices(data.size(), cfg.batch_size, detail::mix_seed(cfg.seed, 2 * epoch))) {
    const Batch batch = make_batch(data, idx);
    zero_grads(params);
    Tape tape;
    TapeScope scope(tape);
    ForwardResult fr = forward(model, batch.features, batch.tokens, {Mode::train, &dropout_rng});
    Tensor loss = nll_loss(fr.logits, batch.answers);
    if (!std::isfinite(loss.item())) throw NumericError("train_epoch: non-finite loss");
    tape.backward(loss);
    clip_gradients(params, cfg.clip_norm);
    sgd_momentum_step(params, state, cfg.learning_rate, cfg.momentum);
    loss_sum += loss.item() * static_cast<real>(idx.size());
    const auto preds = predict_answers(fr.trace.answer_probs);
    for (std::size_t b = 0; b < preds.size(); ++b) correct += preds[b] == batch.answers[b];
  }
  EpochReport r;
  r.epoch = epoch;
  r.mean_loss = loss_sum / static_cast<real>(data.size());
  r.train_accuracy = static_cast<real>(correct) / static_cast<real>(data.size());
  r.learning_rate = cfg.learning_rate;
  r.seed = cfg.seed;
  return r;
}

struct Evaluation {
  std::vector<std::size_t> predictions;
  real mean_loss = 0;
  real accuracy = 0;
};

/// Eval-mode predictions in dataset order.
inline Evaluation evaluate(const SanModel& model, const DatasetSplit& data, std::size_t batch_size = 64) {
  Evaluation ev;
  if (data.size() == 0) return ev;
  NoGradScope no_grad;
  ev.predictions.resize(data.size());
  real loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch batch = make_batch(data, idx);
    ForwardResult fr = forward(model, batch.features, batch.tokens);
    loss_sum += nll_loss(fr.logits, batch.answers).item() * static_cast<real>(idx.size());
    const auto preds = predict_answers(fr.trace.answer_probs);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      ev.predictions[idx[b]] = preds[b];
      correct += preds[b] == batch.answers[b];
    }
  }
  ev.mean_loss = loss_sum / static_cast<real>(data.size());
  ev.accuracy = static_cast<real>(correct) / static_cast<real>(data.size());
  return ev;
}

using EpochCallback = std::function<void(const EpochReport&)>;

/// Trains for cfg.epochs, reporting validation accuracy when `val` is given.
inline std::vector<EpochReport> fit(SanModel& model, const DatasetSplit& train, const DatasetSplit* val,
                                    const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  OptimizerState state = OptimizerState::for_params(model.parameters());
  std::vector<EpochReport> reports;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    EpochReport r = train_epoch(model, train, cfg, state, e);
    if (val != nullptr && val->size() > 0) r.val_accuracy = evaluate(model, *val).accuracy;
    if (on_epoch) on_epoch(r);
    reports.push_back(r);
  }
  return reports;
}

/// Trains one fresh model per learning rate for `budget_epochs` and returns
/// the rate with the best validation accuracy; ties prefer the smaller rate.
inline real grid_search_lr(const ModelConfig& model_cfg, const DatasetSplit& train,
                           const DatasetSplit& val, TrainConfig cfg, std::vector<real> candidates,
                           std::size_t budget_epochs) {
  if (candidates.empty()) throw ContractError("grid_search_lr: no candidates");
  std::sort(candidates.begin(), candidates.end());
  std::optional<real> best;
  real best_acc = -1;
  for (real lr : candidates) {
    cfg.learning_rate = lr;
    cfg.epochs = budget_epochs;
    Rng init_rng(cfg.seed);
    SanModel model = SanModel::init(model_cfg, init_rng);
    real acc = 0;
    try {
      fit(model, train, nullptr, cfg);
      acc = evaluate(model, val).accuracy;
    } catch (const NumericError&) {
      continue;
    }
    if (acc > best_acc) {
      best_acc = acc;
      best = lr;
    }
  }
  if (!best) throw SearchError("grid_search_lr: every learning rate diverged");
  return *best;
}

}  // namespace san

#endif  // SAN_TRAINING_HPP
