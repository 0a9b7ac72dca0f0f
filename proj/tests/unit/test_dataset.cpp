#include "menode/dataset.hpp"
#include "menode/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

using namespace menode;

namespace {

std::string to_csv(const PanelDataset& data) {
  std::ostringstream out;
  write_csv(data, out);
  return out.str();
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_csv(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no parse error for:\n" << text;
  return 0;
}

}  // namespace

TEST(Toy, ClosedFormTrajectories) {
  ToySpec spec;
  spec.n_subjects = 50;
  const auto data = generate_toy(spec, 3);
  ASSERT_EQ(data.times().size(), 20u);
  EXPECT_EQ(data.split(), 10u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& info = data.info(i);
    const Series x = data.full(i);
    for (std::size_t k = 0; k < x.n_times(); ++k) {
      const double expect = info.true_z0[0] * std::exp(info.true_w[0] * data.times()[k]);
      EXPECT_NEAR(x(k, 0), expect, 1e-12 * expect);
    }
  }
}

TEST(Toy, KnownPoint) {
  // z0 = 1.3, w = 0.3 at t = 3: 1.3 e^0.9
  ToySpec spec;
  spec.sigma = 1e-300;
  spec.sigma_b = 1e-300;
  spec.n_subjects = 1;
  const auto data = generate_toy(spec, 0);
  EXPECT_NEAR(data.full(0)(19, 0), 1.3 * std::exp(0.9), 1e-12);
}

TEST(Toy, MomentsMatchSpec) {
  ToySpec spec;
  const auto data = generate_toy(spec, 11);
  double w_mean = 0.0;
  double z_mean = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    w_mean += data.info(i).true_w[0] / data.size();
    z_mean += data.info(i).true_z0[0] / data.size();
  }
  const double se = 0.01 / std::sqrt(1000.0);
  EXPECT_NEAR(w_mean, 0.3, 4 * se);
  EXPECT_NEAR(z_mean, 1.3, 4 * se);
}

TEST(Toy, SatisfiesTheOde) {
  ToySpec spec;
  spec.n_subjects = 5;
  spec.n_times = 3001;
  spec.n_observed = 10;
  const auto data = generate_toy(spec, 2);
  const double h = data.times()[1] - data.times()[0];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Series x = data.full(i);
    const double w = data.info(i).true_w[0];
    for (std::size_t k = 1; k + 1 < x.n_times(); k += 500) {
      const double dzdt = (x(k + 1, 0) - x(k - 1, 0)) / (2 * h);
      EXPECT_NEAR(dzdt, w * x(k, 0), 1e-6);
    }
  }
}

TEST(Toy, ValidatesSpec) {
  ToySpec spec;
  spec.sigma = 0.0;
  EXPECT_THROW(generate_toy(spec, 0), ContractError);
  spec = ToySpec{};
  spec.n_observed = spec.n_times;
  EXPECT_THROW(generate_toy(spec, 0), ContractError);
}

TEST(Toy, JitteredGridIsShared) {
  ToySpec spec;
  spec.jitter = true;
  spec.n_subjects = 3;
  const auto data = generate_toy(spec, 5);
  EXPECT_EQ(data.times().front(), 0.0);
  EXPECT_TRUE(std::is_sorted(data.times().begin(), data.times().end()));
  EXPECT_NE(data.times()[1], 3.0 / 19.0);
}

TEST(Grouped, QuarterTurnAtTwo) {
  Grouped2dSpec spec;
  spec.omegas = {std::numbers::pi / 4};
  spec.angle_lo = {0.0};
  spec.angle_hi = {0.0};
  spec.n_subjects = 2;
  spec.n_times = 4;
  spec.n_observed = 2;
  spec.noise_sigma = 0.0;
  const auto data = generate_grouped_2d(spec, 1);
  const Series x = data.full(0);
  EXPECT_NEAR(x(2, 0), 0.0, 1e-12);
  EXPECT_NEAR(x(2, 1), 1.0, 1e-12);
  EXPECT_EQ(data.obs_dim(), 2u);
}

TEST(Grouped, StandardConfigurations) {
  for (std::size_t g : {1u, 4u, 8u}) {
    const auto spec = Grouped2dSpec::standard(g, 40);
    ASSERT_EQ(spec.omegas.size(), g);
    const double mid = (spec.omegas.front() + spec.omegas.back()) / 2;
    EXPECT_NEAR(mid, std::numbers::pi / 4, 1e-15);
    EXPECT_NEAR(spec.omegas.back() - spec.omegas.front(), (g - 1) * std::numbers::pi / 16, 1e-15);
    const auto data = generate_grouped_2d(g, 40, 9);
    std::vector<std::size_t> counts(g);
    for (std::size_t i = 0; i < data.size(); ++i) {
      ++counts.at(static_cast<std::size_t>(data.info(i).group_id));
      EXPECT_EQ(data.info(i).true_w[0], spec.omegas[data.info(i).group_id]);
    }
    for (auto c : counts) EXPECT_GT(c, 0u);
  }
}

TEST(Dataset, SeedsGiveByteIdenticalFiles) {
  ToySpec spec;
  spec.n_subjects = 30;
  EXPECT_EQ(to_csv(generate_toy(spec, 4)), to_csv(generate_toy(spec, 4)));
  EXPECT_NE(to_csv(generate_toy(spec, 4)), to_csv(generate_toy(spec, 5)));
  EXPECT_EQ(to_csv(generate_grouped_2d(4, 20, 1)), to_csv(generate_grouped_2d(4, 20, 1)));
}

TEST(Dataset, CsvRoundTrip) {
  for (const auto& data : {generate_toy(ToySpec{.n_subjects = 7}, 2),
                           generate_grouped_2d(4, 12, 3)}) {
    const std::string text = to_csv(data);
    std::istringstream in(text);
    const PanelDataset back = read_csv(in);
    EXPECT_TRUE(back.same_content(data));
    EXPECT_EQ(to_csv(back), text);
  }
}

TEST(Dataset, CsvErrors) {
  EXPECT_EQ(parse_error_line(""), 1u);
  EXPECT_EQ(parse_error_line("subject_id,group_id,time,x_0\n0,0,0,1\n"), 1u);
  const std::string header = "subject_id,group_id,time,split,x_0\n";
  EXPECT_EQ(parse_error_line(header + "0,0,0,interp,1\n0,0,1,interp,abc\n"), 3u);
  EXPECT_EQ(parse_error_line(header + "0,0,0,interp,1\n0,0,1,sideways,2\n"), 3u);
  EXPECT_EQ(parse_error_line(header + "0,0,0,interp,1\n0,0,1\n"), 3u);
}

TEST(Dataset, HeldoutReadsAreCounted) {
  const auto data = generate_toy(ToySpec{.n_subjects = 3}, 1);
  const auto before = data.heldout_reads();
  (void)data.observed(0);
  (void)data.observed_grid(3);
  EXPECT_EQ(data.heldout_reads(), before);
  (void)data.heldout(1);
  EXPECT_EQ(data.heldout_reads(), before + 1);
  EXPECT_EQ(data.observed(2).n_times(), 10u);
  EXPECT_EQ(data.heldout(2).n_times(), 10u);
}

TEST(Dataset, SplitSubjects) {
  const auto data = generate_toy(ToySpec{.n_subjects = 10}, 1);
  const auto parts = split_subjects(data, 0.8);
  EXPECT_EQ(parts.train.size(), 8u);
  EXPECT_EQ(parts.test.size(), 2u);
  EXPECT_EQ(parts.test.info(0).subject_id, 8);
  EXPECT_THROW(split_subjects(data, 0.0), ContractError);
}
