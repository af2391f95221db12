#include <gtest/gtest.h>

#include <cmath>

#include "fedseg/model.hpp"
#include "fedseg/phantom.hpp"
#include "fedseg/rng.hpp"
#include "fedseg/trainer.hpp"
#include "test_util.hpp"

using namespace fedseg;

namespace {

double loss_at(const ParameterSet& p, const std::vector<PhantomStudy>& batch,
               const ModelConfig& cfg) {
  return loss_and_grad(p, batch, cfg).first;
}

// Central finite differences with step 1e-5 against the analytic gradient;
// returns the worst relative error over all parameters.
double max_grad_rel_error(const ParameterSet& params,
                          const std::vector<PhantomStudy>& batch,
                          const ModelConfig& cfg) {
  const auto [loss, grad] = loss_and_grad(params, batch, cfg);
  (void)loss;
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.values.size(); ++k) {
    ParameterSet plus = params, minus = params;
    plus.values[k] += h;
    minus.values[k] -= h;
    const double fd = (loss_at(plus, batch, cfg) - loss_at(minus, batch, cfg)) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad.values[k]), 1e-6});
    worst = std::max(worst, std::abs(fd - grad.values[k]) / denom);
  }
  return worst;
}

std::vector<PhantomStudy> small_batch(Rng& rng, int n, int rows = 9, int cols = 9) {
  std::vector<PhantomStudy> batch;
  for (int i = 0; i < n; ++i) batch.push_back(testutil::random_study(rng, rows, cols));
  return batch;
}

}  // namespace

TEST(InitParams, DeterministicAndSeedSensitive) {
  const ModelConfig cfg;
  const auto a = init_params(cfg, 42);
  const auto b = init_params(cfg, 42);
  const auto c = init_params(cfg, 43);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.layout, c.layout);
  EXPECT_NE(a.values, c.values);
}

TEST(InitParams, LayoutCountsMatchArchitecture) {
  const ModelConfig cfg;
  std::size_t expected = 0;
  for (const auto& l : cfg.layers)
    expected += static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel * l.kernel +
                l.out_ch;
  EXPECT_EQ(expected, 745u);  // default stack
  EXPECT_EQ(init_params(cfg, 1).values.size(), expected);
  EXPECT_EQ(param_count(cfg), expected);
}

TEST(Forward, ZeroParamsGiveUniformHalf) {
  const ModelConfig cfg;
  const auto zeros = ParameterSet::zeros(layout_for(cfg));
  Rng rng(4);
  const auto study = testutil::random_study(rng, 8, 8);
  const auto pred = forward(zeros, study, cfg);
  for (double p : pred.probabilities.data) EXPECT_DOUBLE_EQ(p, 0.5);
}

TEST(Forward, DeterministicAndStrictlyInsideUnitInterval) {
  const ModelConfig cfg;
  Rng rng(5);
  const auto params = init_params(cfg, 9);
  const auto study = testutil::random_study(rng, 12, 12);
  const auto a = forward(params, study, cfg);
  const auto b = forward(params, study, cfg);
  EXPECT_EQ(a.probabilities.data, b.probabilities.data);
  for (double p : a.probabilities.data) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    EXPECT_TRUE(std::isfinite(p));
  }
}

TEST(Forward, OutputDimsEqualInputDims) {
  const ModelConfig cfg;
  Rng rng(6);
  const auto study = testutil::random_study(rng, 7, 13);
  const auto pred = forward(init_params(cfg, 2), study, cfg);
  EXPECT_EQ(pred.probabilities.rows, 7);
  EXPECT_EQ(pred.probabilities.cols, 13);
}

TEST(Forward, RejectsMismatchedLayout) {
  ModelConfig small;
  small.layers = {{2, 1, 1}};
  const ModelConfig full;
  const auto params = init_params(small, 1);
  Rng rng(7);
  EXPECT_THROW(forward(params, testutil::random_study(rng), full), LayoutMismatchError);
}

TEST(Loss, UniformHalfGivesLogTwoBce) {
  ModelConfig cfg;
  cfg.dice_weight = 0.0;
  const auto zeros = ParameterSet::zeros(layout_for(cfg));
  Rng rng(8);
  const auto [loss, grad] = loss_and_grad(zeros, {testutil::random_study(rng)}, cfg);
  EXPECT_NEAR(loss, std::log(2.0), 1e-12);
  EXPECT_EQ(grad.layout, zeros.layout);
}

TEST(Loss, ConfidentPerfectLogitsDriveBceToZero) {
  Rng rng(9);
  const auto study = testutil::random_study(rng, 6, 6);
  std::vector<double> logits(study.gt_mask.data.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits[i] = study.gt_mask.data[i] ? 30.0 : -30.0;
  EXPECT_NEAR(bce_mean_from_logits(logits, study.gt_mask), 0.0, 1e-12);
}

TEST(Loss, SoftDiceTermStaysInUnitInterval) {
  Rng rng(10);
  for (int iter = 0; iter < 30; ++iter) {
    const auto study = testutil::random_study(rng, 8, 8);
    std::vector<double> probs(study.gt_mask.data.size());
    for (auto& p : probs) p = rng.uniform(1e-6, 1.0 - 1e-6);
    const double s = soft_dice_score(probs, study.gt_mask);
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Loss, NonNegativeAndFinite) {
  Rng rng(11);
  const ModelConfig cfg;
  for (int iter = 0; iter < 10; ++iter) {
    const auto params = init_params(cfg, iter);
    const auto [loss, grad] = loss_and_grad(params, small_batch(rng, 2), cfg);
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_GE(loss, 0.0);
    for (double g : grad.values) EXPECT_TRUE(std::isfinite(g));
  }
}

TEST(Loss, EmptyBatchThrows) {
  const ModelConfig cfg;
  EXPECT_THROW(loss_and_grad(init_params(cfg, 1), std::vector<PhantomStudy>{}, cfg),
               EmptyBatchError);
}

TEST(GradientCheck, DefaultArchitectureAgainstFiniteDifferences) {
  Rng rng(12);
  const ModelConfig cfg;  // includes both loss terms at lambda 0.5
  for (int draw = 0; draw < 3; ++draw) {
    const auto params = init_params(cfg, 100 + draw);
    const auto batch = small_batch(rng, 2, 8, 8);
    EXPECT_LE(max_grad_rel_error(params, batch, cfg), 1e-4) << "draw " << draw;
  }
}

TEST(GradientCheck, PureBceAndPureDice) {
  Rng rng(13);
  for (double lambda : {0.0, 1.0}) {
    ModelConfig cfg;
    cfg.dice_weight = lambda;
    const auto params = init_params(cfg, 55);
    const auto batch = small_batch(rng, 1, 7, 7);
    EXPECT_LE(max_grad_rel_error(params, batch, cfg), 1e-4) << "lambda " << lambda;
  }
}

TEST(GradientCheck, AlternativeArchitectures) {
  Rng rng(14);
  ModelConfig tiny;
  tiny.layers = {{2, 1, 3}};
  ModelConfig deeper;
  deeper.layers = {{2, 4, 3}, {4, 4, 3}, {4, 4, 1}, {4, 1, 1}};
  for (const auto& cfg : {tiny, deeper}) {
    const auto params = init_params(cfg, 77);
    const auto batch = small_batch(rng, 2, 6, 6);
    EXPECT_LE(max_grad_rel_error(params, batch, cfg), 1e-4);
  }
}

TEST(PredictMask, StrictThreshold) {
  Prediction pred;
  pred.probabilities = Image(4, 4, 0.5);
  EXPECT_EQ(count_nonzero(predict_mask(pred, 0.5)), 0u);
  pred.probabilities = Image(4, 4, 0.9);
  EXPECT_EQ(count_nonzero(predict_mask(pred, 0.5)), 16u);
}

TEST(PredictMask, RaisingThresholdNeverAddsVoxels) {
  Rng rng(15);
  for (int iter = 0; iter < 20; ++iter) {
    Prediction pred;
    pred.probabilities = Image(8, 8, 0.0);
    for (auto& p : pred.probabilities.data) p = rng.uniform(0.001, 0.999);
    const double t1 = rng.uniform(0.05, 0.9);
    const double t2 = rng.uniform(t1, 0.95);
    const auto m1 = predict_mask(pred, t1);
    const auto m2 = predict_mask(pred, t2);
    for (std::size_t i = 0; i < m1.data.size(); ++i)
      EXPECT_LE(m2.data[i], m1.data[i]);
  }
}

TEST(PredictMask, RejectsBadThreshold) {
  Prediction pred;
  pred.probabilities = Image(2, 2, 0.5);
  EXPECT_THROW(predict_mask(pred, 0.0), std::invalid_argument);
  EXPECT_THROW(predict_mask(pred, 1.0), std::invalid_argument);
}

TEST(Overfit, FiftyStepsHalveTheLossOnOneStudy) {
  const ModelConfig cfg;
  auto profile = default_federation(42)[0];
  Rng rng(derive_seed(profile.seed, kSeedStudy, 0));
  auto study = generate_phantom(profile, rng, LesionCategory::M);
  const std::vector<PhantomStudy> batch{study};

  auto params = init_params(cfg, 3);
  const double initial = loss_at(params, batch, cfg);
  const double lr = TrainConfig{}.learning_rate;
  for (int step = 0; step < 50; ++step) {
    const auto [loss, grad] = loss_and_grad(params, batch, cfg);
    EXPECT_TRUE(std::isfinite(loss));
    params = scale_add(params, -lr, grad);
  }
  const double final = loss_at(params, batch, cfg);
  EXPECT_LE(final, 0.5 * initial);
}
