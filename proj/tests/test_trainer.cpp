#include <gtest/gtest.h>

#include <cmath>

#include "fedseg/phantom.hpp"
#include "fedseg/trainer.hpp"
#include "test_util.hpp"

using namespace fedseg;
using testutil::make_params;

namespace {

std::vector<PhantomStudy> phantom_data(int n, std::uint64_t seed = 50) {
  auto profile = default_federation(42)[0];
  profile.seed = seed;
  std::vector<PhantomStudy> data;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(profile.seed, kSeedStudy, i));
    data.push_back(generate_phantom(profile, rng,
                                    i % 3 == 0 ? LesionCategory::S
                                               : LesionCategory::M));
  }
  return data;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs_per_round = 2;
  cfg.batch_size = 3;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST(ProxPenalty, HandWorked) {
  const auto a = make_params({1.0, 1.0});
  const auto zero = make_params({0.0, 0.0});
  EXPECT_DOUBLE_EQ(prox_penalty(a, a, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(prox_penalty(a, zero, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(prox_penalty(a, zero, 2.0), 2.0);  // (2/2) * 2
}

TEST(ProxPenalty, RejectsLayoutMismatch) {
  EXPECT_THROW(prox_penalty(make_params({1.0}), make_params({1.0, 2.0}), 1.0),
               LayoutMismatchError);
}

TEST(TrainLocal, MuZeroWithAnchorMatchesNoAnchorBitExactly) {
  const ModelConfig model;
  const auto data = phantom_data(5);
  auto cfg = quick_config();
  cfg.mu = 0.0;
  const auto start = init_params(model, 21);
  const auto anchored = train_local(start, data, model, cfg, &start);
  const auto plain = train_local(start, data, model, cfg, nullptr);
  EXPECT_EQ(anchored.values, plain.values);
}

TEST(TrainLocal, VanishingLearningRateKeepsStart) {
  const ModelConfig model;
  const auto data = phantom_data(3);
  auto cfg = quick_config();
  cfg.learning_rate = 1e-300;
  const auto start = init_params(model, 22);
  const auto out = train_local(start, data, model, cfg);
  EXPECT_EQ(out.values, start.values);
}

TEST(TrainLocal, LargeMuPinsParametersToAnchor) {
  // Explicit SGD on the proximal term is stable for lr * mu <= 1; at the
  // bound the pull exactly cancels each step's accumulated drift, so the
  // run must end far closer to the anchor than the unregularized one.
  const ModelConfig model;
  const auto data = phantom_data(4);
  auto cfg = quick_config();
  cfg.learning_rate = 1e-6;
  const auto start = init_params(model, 23);

  cfg.mu = 0.0;
  const auto free_run = train_local(start, data, model, cfg, &start);
  cfg.mu = 1e6;
  const auto pinned = train_local(start, data, model, cfg, &start);

  const double drift_free = l2_sq_distance(free_run, start);
  const double drift_pinned = l2_sq_distance(pinned, start);
  EXPECT_LE(drift_pinned, drift_free);
  EXPECT_LT(drift_pinned, 1e-6);
}

TEST(TrainLocal, DeterministicGivenInputs) {
  const ModelConfig model;
  const auto data = phantom_data(6);
  const auto cfg = quick_config();
  const auto start = init_params(model, 24);
  const auto a = train_local(start, data, model, cfg);
  const auto b = train_local(start, data, model, cfg);
  EXPECT_EQ(a.values, b.values);
}

TEST(TrainLocal, SeedChangesTheTrajectory) {
  const ModelConfig model;
  const auto data = phantom_data(6);
  auto cfg = quick_config();
  const auto start = init_params(model, 24);
  const auto a = train_local(start, data, model, cfg);
  cfg.seed = 8;
  const auto b = train_local(start, data, model, cfg);
  EXPECT_NE(a.values, b.values);
}

TEST(TrainLocal, LossFiniteAtEveryStep) {
  const ModelConfig model;
  const auto data = phantom_data(6);
  const auto cfg = quick_config();
  const auto start = init_params(model, 25);
  int steps = 0;
  train_local(start, data, model, cfg, nullptr, [&steps](const TrainStep& s) {
    EXPECT_TRUE(std::isfinite(s.loss));
    ++steps;
  });
  EXPECT_EQ(steps, 2 * 2);  // 6 studies, batch 3 -> 2 batches x 2 epochs
}

TEST(TrainLocal, Errors) {
  const ModelConfig model;
  const auto start = init_params(model, 26);
  EXPECT_THROW(train_local(start, {}, model, quick_config()), EmptyDatasetError);

  ModelConfig other;
  other.layers = {{2, 1, 1}};
  const auto bad_anchor = init_params(other, 1);
  EXPECT_THROW(train_local(start, phantom_data(2), model, quick_config(), &bad_anchor),
               LayoutMismatchError);

  auto cfg = quick_config();
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train_local(start, phantom_data(2), model, cfg), std::invalid_argument);
  cfg.learning_rate = 0.5;
  cfg.epochs_per_round = 0;
  EXPECT_THROW(train_local(start, phantom_data(2), model, cfg), std::invalid_argument);
}

TEST(TotalLossAndGrad, ProximalGradientMatchesFiniteDifferences) {
  const ModelConfig model;
  Rng rng(31);
  const auto data = phantom_data(2);
  std::vector<const PhantomStudy*> batch{&data[0], &data[1]};
  const auto params = init_params(model, 32);
  const auto anchor = init_params(model, 33);
  const double mu = 0.7;

  const auto [loss, grad] = total_loss_and_grad(params, batch, model, &anchor, mu);
  EXPECT_TRUE(std::isfinite(loss));

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.values.size(); k += 13) {  // strided probe
    ParameterSet plus = params, minus = params;
    plus.values[k] += h;
    minus.values[k] -= h;
    const double lp = total_loss_and_grad(plus, batch, model, &anchor, mu).first;
    const double lm = total_loss_and_grad(minus, batch, model, &anchor, mu).first;
    const double fd = (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad.values[k]), 1e-6});
    worst = std::max(worst, std::abs(fd - grad.values[k]) / denom);
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(TotalLossAndGrad, ReportsBasePlusPenalty) {
  const ModelConfig model;
  const auto data = phantom_data(1);
  std::vector<const PhantomStudy*> batch{&data[0]};
  const auto params = init_params(model, 41);
  const auto anchor = init_params(model, 42);

  const auto base = total_loss_and_grad(params, batch, model, nullptr, 0.0);
  const auto prox = total_loss_and_grad(params, batch, model, &anchor, 2.5);
  EXPECT_DOUBLE_EQ(prox.first, base.first + prox_penalty(params, anchor, 2.5));
}
