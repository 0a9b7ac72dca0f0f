#include "menode/calibration.hpp"
#include "menode/dataset.hpp"
#include "menode/error.hpp"
#include "menode/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace menode;

namespace {

// Identity toy model sitting at the generating parameters.
MeNodeModel true_toy_model(double sigma_b = 0.01) {
  MeNodeModel model(ModelConfig::toy());
  model.parameters()[model.beta_index()].mutable_values()[0] = 0.3;
  model.parameters()[model.log_sigma_b_index()].mutable_values()[0] = std::log(sigma_b);
  return model;
}

PanelDataset toy(std::size_t n, std::uint64_t seed) {
  ToySpec spec;
  spec.n_subjects = n;
  return generate_toy(spec, seed);
}

double extrap_mse(const Series& pred, const Series& truth, std::size_t split) {
  double s = 0.0;
  for (std::size_t k = split; k < truth.n_times(); ++k) {
    const double d = pred(k, 0) - truth(k, 0);
    s += d * d;
  }
  return s / static_cast<double>(truth.n_times() - split);
}

}  // namespace

TEST(Calibration, SingleCandidate) {
  const auto data = toy(1, 1);
  const auto model = true_toy_model();
  const auto r = calibrate(model, data.observed(0), data.observed_grid(3), 1, 7);
  EXPECT_EQ(r.n_candidates, 1u);
  EXPECT_EQ(r.chosen, 0u);
  EXPECT_EQ(r.mse, r.candidate_mse[0]);
  EXPECT_EQ(r.min_mse, r.max_mse);
}

TEST(Calibration, PicksTheGeneratingEffect) {
  PanelDataset data(TimeGrid::uniform(0, 3, 20).times(), 10, 1);
  Series x(20, 1);
  for (std::size_t k = 0; k < 20; ++k) x(k, 0) = 1.3 * std::exp(0.3 * data.times()[k]);
  data.add_subject({}, x);
  const auto model = true_toy_model();
  const auto r = calibrate_candidates(
      model, data.observed(0), data.observed_grid(3), {Tensor::vector({1.3})},
      {Tensor::vector({0.2}), Tensor::vector({0.3}), Tensor::vector({0.4})});
  EXPECT_EQ(r.chosen, 1u);
  EXPECT_EQ(r.w[0], 0.3);
  EXPECT_EQ(r.n_diverged, 0u);
}

TEST(Calibration, ChoiceIsTheMinimum) {
  const auto data = toy(5, 2);
  const auto model = true_toy_model(0.05);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = calibrate(model, data.observed(i), data.observed_grid(3), 40, 100 + i);
    const double best = *std::min_element(r.candidate_mse.begin(), r.candidate_mse.end());
    EXPECT_EQ(r.mse, best);
    EXPECT_EQ(r.min_mse, best);
    EXPECT_LE(r.min_mse, r.median_mse);
    EXPECT_LE(r.median_mse, r.max_mse);
  }
}

TEST(Calibration, MoreCandidatesNeverWorse) {
  const auto data = toy(20, 3);
  const auto model = true_toy_model(0.05);
  double few = 0.0;
  double many = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto a = calibrate(model, data.observed(i), data.observed_grid(3), 4, i);
    const auto b = calibrate(model, data.observed(i), data.observed_grid(3), 64, i);
    EXPECT_LE(b.mse, a.mse);
    few += a.mse;
    many += b.mse;
  }
  EXPECT_LT(many, few);
}

TEST(Calibration, PredictionOnObservedGridReproducesMse) {
  const auto data = toy(1, 4);
  const auto model = true_toy_model();
  const auto grid = data.observed_grid(3);
  const auto r = calibrate(model, data.observed(0), grid, 16, 1);
  const Series pred = predict(model, r, grid);
  const Series x = data.observed(0);
  double s = 0.0;
  for (std::size_t k = 0; k < x.n_times(); ++k) s += std::pow(pred(k, 0) - x(k, 0), 2);
  EXPECT_NEAR(s / x.n_times(), r.mse, 1e-15);
}

TEST(Calibration, LongerWindowExtrapolatesBetter) {
  // with noise-free data every window ranks candidates alike, so add noise
  const auto data = toy(40, 5);
  const auto model = true_toy_model();
  const auto grid_full = data.full_grid(3);
  NormalSampler normal(21);
  double short_err = 0.0;
  double long_err = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Series truth = data.full(i);
    Series obs = data.observed(i);
    for (std::size_t k = 0; k < obs.n_times(); ++k) obs(k, 0) += 0.02 * normal();
    const TimeGrid g10 = data.observed_grid(3);
    const TimeGrid g3(std::vector<double>(g10.times().begin(), g10.times().begin() + 3), 3);
    const auto r3 = calibrate(model, obs.rows(0, 3), g3, 64, i);
    const auto r10 = calibrate(model, obs, g10, 64, i);
    short_err += extrap_mse(predict(model, r3, grid_full), truth, 10);
    long_err += extrap_mse(predict(model, r10, grid_full), truth, 10);
  }
  EXPECT_LT(long_err, short_err);
}

TEST(Calibration, AllDivergedRaises) {
  const auto data = toy(1, 6);
  MeNodeModel model = true_toy_model();
  EXPECT_THROW(calibrate_candidates(model, data.observed(0), data.observed_grid(3),
                                    {Tensor::vector({1.3})}, {Tensor::vector({1e5})}),
               CalibrationError);
  EXPECT_THROW(calibrate(model, data.observed(0), data.observed_grid(3), 0, 1), ContractError);
}

TEST(Calibration, DeterministicAndBlindToHeldout) {
  const auto data = toy(3, 7);
  const auto model = true_toy_model(0.05);
  const auto reads = data.heldout_reads();
  const auto a = calibrate(model, data.observed(2), data.observed_grid(3), 32, 9, true);
  const auto b = calibrate(model, data.observed(2), data.observed_grid(3), 32, 9, true);
  EXPECT_EQ(a.candidate_mse, b.candidate_mse);
  EXPECT_EQ(a.w[0], b.w[0]);
  EXPECT_EQ(a.z0[0], b.z0[0]);
  EXPECT_EQ(data.heldout_reads(), reads);
}

TEST(Ensemble, CoversTheTruth) {
  const auto data = toy(50, 8);
  const auto model = true_toy_model();
  const auto grid = data.full_grid(3);
  std::size_t inside = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto e = ensemble_predict(model, data.observed(i), grid, 100, i);
    EXPECT_EQ(e.n_used, 100u);
    const Series truth = data.full(i);
    for (std::size_t k = 0; k < truth.n_times(); ++k) {
      inside += std::abs(truth(k, 0) - e.mean(k, 0)) <= 2 * e.std(k, 0) + 1e-12;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(inside) / total, 0.9);
}

TEST(Ensemble, CollapsedPosteriorHasNoSpread) {
  ModelConfig mc = ModelConfig::toy();
  mc.sigma0 = 1e-300;
  MeNodeModel model(mc);
  model.parameters()[model.beta_index()].mutable_values()[0] = 0.3;
  model.parameters()[model.log_sigma_b_index()].mutable_values()[0] = -600.0;
  const auto data = toy(1, 9);
  const auto e = ensemble_predict(model, data.observed(0), data.full_grid(3), 10, 1);
  for (std::size_t k = 0; k < e.std.n_times(); ++k) EXPECT_LT(e.std(k, 0), 1e-12);
  EXPECT_THROW(ensemble_predict(model, data.observed(0), data.full_grid(3), 1, 1),
               ContractError);
}
