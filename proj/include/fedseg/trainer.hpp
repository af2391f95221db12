#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fedseg/model.hpp"
#include "fedseg/params.hpp"
#include "fedseg/rng.hpp"

namespace fedseg {

struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs_per_round = 3;   // desk default; the reference schedule runs 20
  int batch_size = 8;
  double learning_rate = 0.75;
  double mu = 0.01;           // proximal strength, applied only with an anchor
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs_per_round < 1) throw std::invalid_argument("epochs_per_round must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("learning_rate must be finite and positive");
    if (!(mu >= 0.0) || !std::isfinite(mu))
      throw std::invalid_argument("mu must be finite and non-negative");
  }
};

// (mu/2) * ||params - anchor||^2
inline double prox_penalty(const ParameterSet& params, const ParameterSet& anchor,
                           double mu) {
  return 0.5 * mu * l2_sq_distance(params, anchor);
}

// Base loss plus the proximal term toward `anchor`; gradient gains
// mu * (params - anchor). With mu == 0 or no anchor this reduces exactly
// to the base loss.
inline std::pair<double, ParameterSet> total_loss_and_grad(
    const ParameterSet& params, const std::vector<const PhantomStudy*>& batch,
    const ModelConfig& model, const ParameterSet* anchor, double mu) {
  auto [loss, grad] = loss_and_grad(params, batch, model);
  if (anchor != nullptr && mu != 0.0) {
    require_compatible(params, *anchor);
    loss += prox_penalty(params, *anchor, mu);
    for (std::size_t k = 0; k < grad.values.size(); ++k)
      grad.values[k] += mu * (params.values[k] - anchor->values[k]);
  }
  return {loss, grad};
}

struct TrainStep {
  int epoch = 0;
  int batch_index = 0;
  double loss = 0.0;
};
using TrainObserver = std::function<void(const TrainStep&)>;

// Mini-batch SGD for one center and one round. Every epoch reshuffles with
// a stream derived from (cfg.seed, epoch), so the result is a pure function
// of (start, data, cfg, anchor) regardless of scheduling around it.
inline ParameterSet train_local(const ParameterSet& start,
                                const std::vector<PhantomStudy>& data,
                                const ModelConfig& model, const TrainConfig& cfg,
                                const ParameterSet* anchor = nullptr,
                                const TrainObserver& observer = {}) {
  cfg.validate();
  model.validate();
  if (data.empty()) throw EmptyDatasetError("train_local: empty dataset");
  require_layout(start, model);
  if (anchor != nullptr) require_compatible(start, *anchor);

  ParameterSet params = start;
  const std::size_t n = data.size();
  for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, kSeedEpoch, static_cast<std::uint64_t>(epoch)));
    const auto order = shuffle_rng.permutation(n);
    int batch_index = 0;
    for (std::size_t pos = 0; pos < n; pos += cfg.batch_size, ++batch_index) {
      std::vector<const PhantomStudy*> batch;
      batch.reserve(cfg.batch_size);
      for (std::size_t i = pos; i < std::min(n, pos + cfg.batch_size); ++i)
        batch.push_back(&data[order[i]]);
      const auto [loss, grad] =
          total_loss_and_grad(params, batch, model, anchor, cfg.mu);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_local: loss diverged");
      params = scale_add(params, -cfg.learning_rate, grad);
      if (observer) observer({epoch, batch_index, loss});
    }
  }
  return params;
}

}  // namespace fedseg
