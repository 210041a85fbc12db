// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "spreadometer/designs.hpp"
#include "spreadometer/indices.hpp"
#include "test_support.hpp"

namespace spreadometer {
namespace {

using testing::line_fixture;
using testing::to_dense;

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

struct Instance {
  PopulationFrame frame;
  WeightsMatrix w;
};

Instance random_instance(RngStream& rng, std::size_t max_n) {
  const std::size_t N = 6 + rng.below(max_n - 5);
  auto pop = rng.bernoulli(0.2) ? testing::lattice_population(static_cast<std::size_t>(std::sqrt(double(N))))
                                : testing::random_population(N, rng);
  const auto size = pop.size();
  const double n = std::max(1.0, std::floor(static_cast<double>(size) * (0.05 + 0.4 * rng.uniform())));
  auto pi = testing::random_probabilities(size, n, rng);
  PopulationFrame frame(std::move(pop), std::move(pi));
  auto w = build_weights(frame);
  return {std::move(frame), std::move(w)};
}

std::vector<std::size_t> random_sample(std::size_t N, RngStream& rng) {
  std::vector<std::size_t> s;
  while (s.empty() || s.size() == N) {
    s.clear();
    const double rate = 0.05 + 0.6 * rng.uniform();
    for (std::size_t i = 0; i < N; ++i) {
      if (rng.bernoulli(rate)) s.push_back(i);
    }
  }
  return s;
}

TEST(MoranI, LineFixtureAlternating) {
  const auto w = build_weights(line_fixture());
  EXPECT_NEAR(moran_i(std::vector<double>{1, 0, 1, 0}, w), -1.0, 1e-15);
}

TEST(MoranI, DegenerateInputs) {
  const auto w = build_weights(line_fixture());
  EXPECT_THROW(moran_i(std::vector<double>{2, 2, 2, 2}, w), DegenerateVarianceError);
  const PopulationFrame all_certain(Population::from_points({{0, 0}, {1, 0}}), {1.0, 1.0});
  EXPECT_THROW(moran_i(std::vector<double>{1, 0}, build_weights(all_certain)), DegenerateWeightsError);
}

TEST(MoranI, EqualsProjectionForm) {
  RngStream rng(31, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 60);
    std::vector<double> y(inst.frame.size());
    for (auto& v : y) v = rng.uniform(-2.0, 2.0);
    EXPECT_NEAR(moran_i(y, inst.w), testing::projection_moran(to_dense(inst.w), y), 1e-12);
  }
}

TEST(MoranNormalized, LineFixtureHandValues) {
  const auto w = build_weights(line_fixture());
  const auto spread = moran_normalized_parts(std::vector<double>{1, 0, 1, 0}, w);
  EXPECT_NEAR(spread.numerator, -1.0, 1e-15);
  EXPECT_NEAR(spread.z_d_z, 1.0, 1e-15);
  EXPECT_NEAR(spread.z_b_z, 1.0, 1e-15);
  EXPECT_NEAR(spread.value, -1.0, 1e-12);

  const auto clustered = moran_normalized_parts(std::vector<double>{1, 1, 0, 0}, w);
  EXPECT_NEAR(clustered.numerator, 0.5, 1e-15);
  EXPECT_NEAR(clustered.z_d_z, 1.0, 1e-15);
  EXPECT_NEAR(clustered.z_b_z, 0.5, 1e-15);
  EXPECT_NEAR(clustered.value, kInvSqrt2, 1e-12);
}

TEST(MoranNormalized, CentredValuesAndLocalMeans) {
  const auto w = build_weights(line_fixture());
  const auto c = center_values(std::vector<double>{1, 1, 0, 0}, w);
  EXPECT_DOUBLE_EQ(c.weighted_mean, 0.5);
  EXPECT_EQ(c.local_means, (std::vector<double>{0.5, 0.0, 0.0, -0.5}));
  EXPECT_DOUBLE_EQ(c.grand_local_mean, 0.0);
}

TEST(MoranNormalized, DistinctDegenerateKinds) {
  const auto w = build_weights(line_fixture());
  EXPECT_THROW(moran_normalized(std::vector<double>{3, 3, 3, 3}, w), DegenerateVarianceError);

  // Every local mean equals the grand local mean while z itself varies.
  const auto star = WeightsMatrix::from_triplets(3, {{0, 2, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}, {2, 1, 1.0}});
  EXPECT_THROW(moran_normalized(std::vector<double>{1, -1, 0}, star), DegenerateLocalMeansError);

  // Constant on the weighted support; the certainty unit (zero row) differs.
  const PopulationFrame frame(Population::from_points({{0, 0}, {1, 0}, {2, 0}, {9, 0}}), {0.5, 0.5, 0.5, 1.0});
  EXPECT_THROW(moran_normalized(std::vector<double>{1, 1, 1, 0}, build_weights(frame)), DegenerateVarianceError);
}

TEST(MoranNormalized, EqualsWeightedCorrelationAndDenseForm) {
  RngStream rng(41, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 50);
    std::vector<double> y(inst.frame.size());
    for (auto& v : y) v = rng.uniform(-1.0, 3.0);
    const auto dense = to_dense(inst.w);
    const double value = moran_normalized(y, inst.w);
    EXPECT_NEAR(value, testing::weighted_correlation_form(dense, y), 1e-10) << "trial " << trial;
    EXPECT_NEAR(value, testing::dense_normalized_moran(dense, y), 1e-10) << "trial " << trial;
  }
}

TEST(SpatialBalanceIb, LineFixture) {
  const auto frame = line_fixture();
  const auto w = build_weights(frame);
  EXPECT_NEAR(spatial_balance_ib(frame, std::vector<std::size_t>{0, 2}, w), -1.0, 1e-9);
  EXPECT_NEAR(spatial_balance_ib(frame, std::vector<std::size_t>{0, 1}, w), 0.70711, 1e-5);
  EXPECT_NEAR(spatial_balance_ib(frame, std::vector<std::size_t>{0, 1}, w), kInvSqrt2, 1e-9);
  EXPECT_THROW(spatial_balance_ib(frame, std::vector<std::size_t>{0, 1, 2, 3}, w), DegenerateIndicatorError);
  EXPECT_THROW(spatial_balance_ib(frame, std::vector<std::size_t>{}, w), DegenerateIndicatorError);
}

TEST(SpatialBalanceIb, BoundedAndSatisfiesCauchySchwarz) {
  RngStream rng(51, 0);
  int evaluated = 0;
  for (int pop = 0; pop < 100; ++pop) {
    const auto inst = random_instance(rng, 80);
    for (int s = 0; s < 100; ++s) {
      const auto sample = random_sample(inst.frame.size(), rng);
      try {
        const auto parts = moran_normalized_parts(indicator_values(inst.frame.size(), sample), inst.w);
        ASSERT_LE(parts.numerator * parts.numerator, parts.z_d_z * parts.z_b_z * (1.0 + 1e-12));
        ASSERT_LE(std::abs(parts.value), 1.0);
        ++evaluated;
      } catch (const DegenerateError&) {
      }
    }
  }
  EXPECT_GT(evaluated, 9000);
}

TEST(SpatialBalanceIb, ComplementGivesSameValue) {
  RngStream rng(61, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng, 60);
    const auto sample = random_sample(inst.frame.size(), rng);
    std::vector<std::size_t> complement;
    for (std::size_t i = 0; i < inst.frame.size(); ++i) {
      if (std::find(sample.begin(), sample.end(), i) == sample.end()) complement.push_back(i);
    }
    try {
      const auto a = moran_normalized_parts(indicator_values(inst.frame.size(), sample), inst.w);
      const auto b = moran_normalized_parts(indicator_values(inst.frame.size(), complement), inst.w);
      EXPECT_NEAR(a.numerator, b.numerator, 1e-10);
      EXPECT_NEAR(a.z_d_z, b.z_d_z, 1e-10);
      EXPECT_NEAR(a.z_b_z, b.z_b_z, 1e-10);
      EXPECT_NEAR(a.value, b.value, 1e-10);
    } catch (const DegenerateError&) {
    }
  }
}

TEST(SpatialBalanceVoronoi, SquareCornersDiagonalIsPerfect) {
  const PopulationFrame frame(Population::from_points({{0, 0}, {1, 0}, {0, 1}, {1, 1}}), {0.5, 0.5, 0.5, 0.5});
  const auto vb = spatial_balance_voronoi(frame, std::vector<std::size_t>{0, 3});
  EXPECT_EQ(vb.v, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(vb.b, 0.0);
}

TEST(SpatialBalanceVoronoi, LineFixtureWithTie) {
  const auto vb = spatial_balance_voronoi(line_fixture(), std::vector<std::size_t>{0, 2});
  EXPECT_EQ(vb.v, (std::vector<double>{0.75, 1.25}));
  EXPECT_NEAR(vb.b, 0.0625, 1e-12);
}

TEST(SpatialBalanceVoronoi, SingleUnitCollectsEverything) {
  const PopulationFrame frame(Population::from_points({{0, 0}, {1, 0}, {0, 3}}), {0.2, 0.3, 0.5});
  const auto vb = spatial_balance_voronoi(frame, std::vector<std::size_t>{1});
  ASSERT_EQ(vb.v.size(), 1u);
  EXPECT_NEAR(vb.v[0], 1.0, 1e-15);
  EXPECT_NEAR(vb.b, 0.0, 1e-15);
  EXPECT_THROW(spatial_balance_voronoi(frame, std::vector<std::size_t>{}), DomainError);
}

TEST(SpatialBalanceVoronoi, MassIsConserved) {
  RngStream rng(71, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_instance(rng, 100);
    const auto sample = random_sample(inst.frame.size(), rng);
    const auto vb = spatial_balance_voronoi(inst.frame, sample);
    EXPECT_NEAR(std::accumulate(vb.v.begin(), vb.v.end(), 0.0), inst.frame.n_target(), 1e-10);
    EXPECT_GE(vb.b, 0.0);
  }
}

TEST(Indices, InvariantUnderSimilarityTransforms) {
  RngStream rng(81, 0);
  for (int trial = 0; trial < 20; ++trial) {
    // Continuous clouds only: rotated lattices lose their exact ties.
    const std::size_t N = 10 + rng.below(80);
    const auto pop = testing::random_population(N, rng);
    const PopulationFrame frame(pop, testing::random_probabilities(N, std::max<std::size_t>(1, N / 5), rng));
    const double angle = rng.uniform(0.0, 6.0), scale = rng.uniform(0.1, 50.0);
    std::vector<Point> moved;
    for (const auto& p : pop.points()) {
      moved.push_back({scale * (std::cos(angle) * p.x - std::sin(angle) * p.y) + 17.0,
                       scale * (std::sin(angle) * p.x + std::cos(angle) * p.y) - 3.0});
    }
    const PopulationFrame frame2(Population::from_points(std::move(moved)), {frame.pi().begin(), frame.pi().end()});
    const auto sample = random_sample(N, rng);
    const auto a = measure_balance(frame, sample, build_weights(frame));
    const auto b = measure_balance(frame2, sample, build_weights(frame2));
    ASSERT_EQ(a.i_b.has_value(), b.i_b.has_value());
    if (a.i_b) {
      EXPECT_NEAR(*a.i_b, *b.i_b, 1e-9);
    }
    if (a.i_m) {
      EXPECT_NEAR(*a.i_m, *b.i_m, 1e-9);
    }
    EXPECT_NEAR(*a.b, *b.b, 1e-9);
  }
}

TEST(BalanceReport, JsonAndFlags) {
  const auto frame = line_fixture();
  const auto w = build_weights(frame);
  const auto report = measure_balance(frame, std::vector<std::size_t>{0, 2}, w);
  const auto j = to_json(report);
  EXPECT_NEAR(j["i_b"].get<double>(), -1.0, 1e-9);
  EXPECT_NEAR(j["i_m"].get<double>(), -1.0, 1e-9);
  EXPECT_NEAR(j["b"].get<double>(), 0.0625, 1e-12);
  EXPECT_EQ(j["n"], 2);
  EXPECT_EQ(j["N"], 4);
  EXPECT_TRUE(j["flags"].empty());

  const auto full = to_json(measure_balance(frame, std::vector<std::size_t>{0, 1, 2, 3}, w));
  EXPECT_TRUE(full["i_b"].is_null());
  EXPECT_TRUE(full["i_m"].is_null());
  EXPECT_NEAR(full["b"].get<double>(), 0.5 * 0.5, 1e-15);  // each unit keeps only its own 0.5
  EXPECT_EQ(full["flags"][0], "DegenerateIndicatorError");
}

}  // namespace
}  // namespace spreadometer
