#include "menode/error.hpp"
#include "menode/model.hpp"
#include "menode/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace menode;

namespace {

Series column(std::initializer_list<double> values) {
  return Series(values.size(), 1, std::vector<double>(values));
}

ModelConfig small_full() {
  ModelConfig c;
  c.latent_dim = 2;
  c.effect_dim = 3;
  c.obs_dim = 2;
  c.obs_window = 4;
  c.encoder_hidden = {5};
  c.gamma_hidden = {4};
  c.decoder_hidden = {3};
  return c;
}

void zero_block(MeNodeModel& model, const std::string& prefix, bool keep_biases) {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = model.parameter_names()[i];
    if (name.rfind(prefix, 0) != 0) continue;
    const bool bias = name.find("bias") != std::string::npos;
    if (bias && keep_biases) continue;
    for (auto& v : params[i].mutable_values()) v = 0.0;
  }
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = ModelConfig::toy();
  EXPECT_NO_THROW(c.validate());
  c.latent_dim = 2;
  EXPECT_THROW(c.validate(), ContractError);
  ModelConfig bad;
  bad.obs_sigma = 0;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Model, IdentityEncoderTakesFirstObservation) {
  const MeNodeModel model(ModelConfig::toy());
  const Posterior q = model.encode(column({1.3, 1.4, 1.5}));
  EXPECT_EQ(q.mu[0], 1.3);
  EXPECT_EQ(q.sigma[0], model.config().sigma0);
  EXPECT_EQ(model.parameters().size(), 2u);
}

TEST(Model, ZeroWeightEncoderReturnsBias) {
  MeNodeModel model(small_full(), 3);
  zero_block(model, "encoder", true);
  auto& params = model.parameters();
  // last encoder layer bias: [mu (p), log sigma (p)]
  std::size_t bias_idx = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (model.parameter_names()[i] == "encoder.1.bias") bias_idx = i;
  }
  auto b = params[bias_idx].mutable_values();
  b[0] = 0.5;
  b[1] = -0.25;
  b[2] = -1.0;
  b[3] = 0.2;
  const Posterior q = model.encode(Series(4, 2, std::vector<double>(8, 0.7)));
  EXPECT_EQ(q.mu[0], 0.5);
  EXPECT_EQ(q.mu[1], -0.25);
  EXPECT_DOUBLE_EQ(q.sigma[0], std::exp(-1.0));
  EXPECT_DOUBLE_EQ(q.sigma[1], std::exp(0.2));
}

TEST(Model, EncoderIsStable) {
  const MeNodeModel model(small_full(), 11);
  const Series x(4, 2, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  const Posterior a = model.encode(x);
  const Posterior b = model.encode(x);
  EXPECT_EQ(a.mu[0], b.mu[0]);
  EXPECT_EQ(a.sigma[1], b.sigma[1]);
  EXPECT_THROW(model.encode(Series(3, 2)), ContractError);
}

TEST(Model, ZeroNoiseGivesMeanTrajectory) {
  const MeNodeModel model(small_full(), 4);
  const Series x(4, 2, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  const TimeGrid grid = TimeGrid::uniform(0, 1, 4);
  const SubjectSample s =
      model.sample_subject(x, grid, Tensor::zeros({2}), Tensor::zeros({3}));
  const Posterior q = model.encode(x);
  const Tensor beta = model.beta(model.parameters());
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(s.z0[i], q.mu[i]);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.w[i], beta[i]);
}

TEST(Model, IdentityTrajectoryClosedForm) {
  MeNodeModel model(ModelConfig::toy());
  model.parameters()[model.beta_index()].mutable_values()[0] = 0.3;
  const TimeGrid grid({0.0, 1.0, 2.0, 3.0}, 60);
  const SubjectSample s =
      model.sample_subject(column({1.3}), grid, Tensor::zeros({1}), Tensor::zeros({1}));
  const auto x = model.decode(s.trajectory);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(x[i][0], 1.3 * std::exp(0.3 * grid[i]), 1e-8);
    EXPECT_EQ(x[i][0], s.trajectory.states[i][0]);
  }
}

TEST(Model, DifferentEffectNoiseGivesDifferentTrajectories) {
  const MeNodeModel model(ModelConfig::toy());
  const TimeGrid grid = TimeGrid::uniform(0, 3, 5);
  const auto a = model.sample_subject(column({1.3}), grid, Tensor::zeros({1}),
                                      Tensor::vector({0.5}));
  const auto b = model.sample_subject(column({1.3}), grid, Tensor::zeros({1}),
                                      Tensor::vector({-0.5}));
  EXPECT_EQ(a.z0[0], b.z0[0]);
  EXPECT_NE(a.trajectory.states.back()[0], b.trajectory.states.back()[0]);
}

TEST(Model, ZeroWeightDecoderIsConstant) {
  MeNodeModel model(small_full(), 5);
  zero_block(model, "decoder", false);
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (model.parameter_names()[i] == "decoder.1.bias") {
      params[i].mutable_values()[0] = 0.25;
      params[i].mutable_values()[1] = -1.5;
    }
  }
  const Series x(4, 2, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  const auto s = model.sample_subject(x, TimeGrid::uniform(0, 1, 4), Tensor::zeros({2}),
                                      Tensor::vector({0.3, -0.2, 0.1}));
  for (const auto& row : model.decode(s.trajectory)) {
    EXPECT_EQ(row[0], 0.25);
    EXPECT_EQ(row[1], -1.5);
  }
}

TEST(LogLikelihood, Examples) {
  const Series obs = column({0.0});
  const double zero_resid =
      log_likelihood(obs, {Tensor::vector({0.0})}, 0.1).item();
  EXPECT_NEAR(zero_resid, -std::log(0.1 * std::sqrt(2 * M_PI)), 1e-12);
  const double ll = log_likelihood(obs, {Tensor::vector({0.1})}, 0.1).item();
  EXPECT_NEAR(ll, 0.8836, 1e-4);

  const Series obs3 = column({1.0, 2.0, 3.0});
  const std::vector<Tensor> pred = {Tensor::vector({1.1}), Tensor::vector({1.8}),
                                    Tensor::vector({3.3})};
  const std::vector<Tensor> doubled = {Tensor::vector({1.2}), Tensor::vector({1.6}),
                                       Tensor::vector({3.6})};
  const double base = log_likelihood(obs3, {Tensor::vector({1.0}), Tensor::vector({2.0}),
                                            Tensor::vector({3.0})}, 0.1).item();
  const double quad = base - log_likelihood(obs3, pred, 0.1).item();
  const double quad2 = base - log_likelihood(obs3, doubled, 0.1).item();
  EXPECT_NEAR(quad2 - quad, 3 * quad, 1e-9);
}

TEST(Model, ScalesPositiveForAnyParameter) {
  MeNodeModel model(small_full(), 6);
  for (double v : {-30.0, 0.0, 5.0}) {
    for (auto& x : model.parameters()[model.log_sigma_b_index()].mutable_values()) x = v;
    for (double s : model.sigma_b(model.parameters()).values()) EXPECT_GT(s, 0.0);
  }
}

TEST(Model, SampleIsDeterministicInParameters) {
  const MeNodeModel model(small_full(), 7);
  const Series x(4, 2, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  const TimeGrid grid = TimeGrid::uniform(0, 1, 4);
  const Tensor nz = Tensor::vector({0.3, -1.0});
  const Tensor nw = Tensor::vector({1.0, 0.2, -0.4});
  const auto a = model.decode(model.sample_subject(x, grid, nz, nw).trajectory);
  const auto b = model.decode(model.sample_subject(x, grid, nz, nw).trajectory);
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t][0], b[t][0]);
    EXPECT_EQ(a[t][1], b[t][1]);
  }
}

// ME trajectory with Gamma(z~) = f(z~ / w) started at w z0 equals w times the
// plain trajectory of dz/dt = f(z).
class RandomProjection : public ::testing::TestWithParam<double> {};

TEST_P(RandomProjection, ScaledTrajectory) {
  const double w = GetParam();
  const TimeGrid grid = TimeGrid::uniform(0, 3, 20);
  for (const auto& f : std::vector<std::function<Tensor(const Tensor&)>>{
           [](const Tensor& z) { return z; },
           [](const Tensor& z) { return tanh(z); }}) {
    MeNodeModel model(ModelConfig::toy());
    model.set_gamma_override([&](const Tensor& z) { return f(scale(z, 1.0 / w)); });
    const auto me = model.solve(Tensor::vector({1.3 * w}), Tensor::vector({w}), grid);
    const DriftFn plain = [&](const Tensor& z, const Tensor&, double) { return f(z); };
    const auto base = integrate(plain, Tensor::vector({1.3}), Tensor::vector({0}), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double expected = w * base.states[i][0];
      EXPECT_LT(std::abs(me.states[i][0] - expected) / std::abs(expected), 1e-6);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Effects, RandomProjection, ::testing::Values(0.5, 1.0, 2.0));
