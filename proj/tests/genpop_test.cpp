// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "spreadometer/genpop.hpp"
#include "spreadometer/spatial.hpp"

namespace spreadometer {
namespace {

double mean_nn_distance(const Population& pop) {
  const SpatialIndex index(pop);
  double acc = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) acc += index.knn(i, 1.0).ordered.front().distance;
  return acc / static_cast<double>(pop.size());
}

// Mean nearest-neighbour distance over its expectation under CSR.
double clark_evans(const Population& pop, const Window& window) {
  const double lambda = static_cast<double>(pop.size()) / window.area();
  return mean_nn_distance(pop) / (0.5 / std::sqrt(lambda));
}

double min_distance(const Population& pop) {
  double best = INFINITY;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    for (std::size_t j = i + 1; j < pop.size(); ++j) best = std::min(best, squared_distance(pop.point(i), pop.point(j)));
  }
  return std::sqrt(best);
}

void expect_inside(const Population& pop, const Window& window) {
  for (const auto& p : pop.points()) ASSERT_TRUE(window.contains(p)) << p.x << "," << p.y;
}

TEST(GenCsr, CountWindowAndDeterminism) {
  const auto window = Window::square(2.0);
  RngStream a(1, 0), b(1, 0), c(2, 0);
  const auto pa = gen_csr(500, window, a);
  EXPECT_EQ(pa.size(), 500u);
  expect_inside(pa, window);
  const auto pb = gen_csr(500, window, b);
  const auto pc = gen_csr(500, window, c);
  EXPECT_EQ(pa.point(123).x, pb.point(123).x);
  EXPECT_NE(pa.point(123).x, pc.point(123).x);
  EXPECT_THROW(gen_csr(0, window, a), DomainError);
  EXPECT_THROW(gen_csr(5, Window{0, 0, 0, 1}, a), DomainError);
}

TEST(GenCsr, QuadratCountsPassChiSquareAtNominalRate) {
  // 10x10 quadrats, 1000 points: df = 99, 95% critical value 123.225.
  int rejections = 0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    RngStream rng(1000 + t, 0);
    const auto pop = gen_csr(1000, Window::square(1.0), rng);
    std::vector<int> counts(100, 0);
    for (const auto& p : pop.points()) {
      const int cx = std::min(9, static_cast<int>(p.x * 10));
      const int cy = std::min(9, static_cast<int>(p.y * 10));
      ++counts[cy * 10 + cx];
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 10.0) * (c - 10.0) / 10.0;
    rejections += chi2 > 123.225;
  }
  const double rate = static_cast<double>(rejections) / trials;
  EXPECT_GT(rate, 0.01);
  EXPECT_LT(rate, 0.10);
}

TEST(GenNeymanScott, CountWindowAndClustering) {
  const auto window = Window::square(1.0);
  RngStream rng(3, 0);
  const auto pop = gen_neyman_scott(100, 10, 0.03, window, rng);
  EXPECT_EQ(pop.size(), 1000u);
  expect_inside(pop, window);
  EXPECT_LT(clark_evans(pop, window), 0.8);
}

TEST(GenNeymanScott, ZeroRadiusStacksOffspringOnParent) {
  RngStream rng(4, 0);
  const auto pop = gen_neyman_scott(5, 4, 0.0, Window::square(1.0), rng);
  for (std::size_t c = 0; c < 5; ++c) {
    for (std::size_t o = 1; o < 4; ++o) {
      EXPECT_EQ(pop.point(c * 4 + o).x, pop.point(c * 4).x);
      EXPECT_EQ(pop.point(c * 4 + o).y, pop.point(c * 4).y);
    }
  }
}

TEST(GenNeymanScott, Errors) {
  RngStream rng(5, 0);
  EXPECT_THROW(gen_neyman_scott(0, 10, 0.1, Window::square(1.0), rng), DomainError);
  EXPECT_THROW(gen_neyman_scott(10, 0, 0.1, Window::square(1.0), rng), DomainError);
  EXPECT_THROW(gen_neyman_scott(10, 10, -0.1, Window::square(1.0), rng), DomainError);
}

TEST(GenMatern, RespectsInhibitionDistance) {
  const auto window = Window::square(1.5);
  RngStream rng(6, 0);
  const auto pop = gen_matern1(1000, 0.015, window, rng);
  EXPECT_EQ(pop.size(), 1000u);
  expect_inside(pop, window);
  EXPECT_GE(min_distance(pop), 0.015);
}

TEST(GenMatern, PatternOrderingByNearestNeighbourDistance) {
  RngStream rng(7, 0);
  const auto unit = Window::square(1.0);
  const double aggregated = clark_evans(gen_neyman_scott(100, 10, 0.03, unit, rng), unit);
  const double random = clark_evans(gen_csr(1000, unit, rng), unit);
  const auto wide = Window::square(1.5);
  const double regular = clark_evans(gen_matern1(1000, 0.015, wide, rng), wide);
  EXPECT_LT(aggregated, random);
  EXPECT_LT(random, regular);
  EXPECT_NEAR(random, 1.0, 0.1);
}

TEST(GenMatern, PackingAndSaturationErrors) {
  RngStream rng(8, 0);
  EXPECT_THROW(gen_matern1(1000, 0.05, Window::square(1.0), rng), DomainError);
  // Passes the area check but sits beyond the random-packing limit.
  EXPECT_THROW(gen_matern1(1000, 0.034, Window::square(1.0), rng, 50), SaturationError);
}

TEST(GenMatern, ZeroInhibitionIsUniform) {
  RngStream rng(9, 0);
  EXPECT_EQ(gen_matern1(50, 0.0, Window::square(1.0), rng).size(), 50u);
}

}  // namespace
}  // namespace spreadometer
