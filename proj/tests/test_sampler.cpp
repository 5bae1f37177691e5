#include "cde/sampler.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace cde;

namespace {

DensityParams one_harmonic(double c) {
  DensityParams p(1, 1, 1);
  p.c(0, 1, 0) = {c, 0.0};
  return p;
}

}  // namespace

TEST(GridCdf, UniformWithoutHarmonics) {
  const GridCdf g = conditional_grid_cdf(DensityParams(2, 0, 1), 1, 0, 64);
  for (int i = 0; i < g.size; ++i) EXPECT_NEAR(g.cdf[static_cast<std::size_t>(i)], g.node(i), 1e-14);
  EXPECT_FALSE(g.degenerate);
}

TEST(GridCdf, SingleHarmonicQuarter) {
  const GridCdf g = conditional_grid_cdf(one_harmonic(0.25), 0, 0);
  // 0.25 is not a node at S = 1024; interpolate between neighbours.
  const double pos = 0.25 * (g.size - 1);
  const int i = static_cast<int>(pos);
  const double t = pos - i;
  const double v = (1 - t) * g.cdf[static_cast<std::size_t>(i)] + t * g.cdf[static_cast<std::size_t>(i + 1)];
  EXPECT_NEAR(v, 0.25 + 1.0 / (4.0 * std::numbers::pi), 1e-3);
}

TEST(GridCdf, EndpointsAndMonotone) {
  Rng rng(1, "t");
  for (int trial = 0; trial < 20; ++trial) {
    const DensityParams p = random_density_params(2, 6, 3, rng, 1.5);  // often negative somewhere
    for (int f = 0; f < 3; ++f) {
      for (int d = 0; d < 2; ++d) {
        const GridCdf g = conditional_grid_cdf(p, d, f, 256);
        EXPECT_EQ(g.cdf.front(), 0.0);
        EXPECT_EQ(g.cdf.back(), 1.0);
        for (std::size_t i = 1; i < g.cdf.size(); ++i) ASSERT_GE(g.cdf[i], g.cdf[i - 1]);
        for (double v : g.density) ASSERT_GE(v, 0.0);
      }
    }
  }
}

TEST(GridCdf, AgreesWithAnalyticWhenNonNegative) {
  Rng rng(2, "t");
  for (int trial = 0; trial < 10; ++trial) {
    const DensityParams p = random_density_params(1, 4, 1, rng, 0.2);  // 1 - 2*0.2*(1+1/2+1/3+1/4) > 0
    const GridCdf g = conditional_grid_cdf(p, 0, 0);
    for (int i = 0; i < g.size; ++i)
      ASSERT_NEAR(g.cdf[static_cast<std::size_t>(i)], conditional_cdf_analytic(p, 0, 0, g.node(i)), 1e-4);
  }
}

TEST(GridCdf, DegenerateFallsBackToUniform) {
  // With S = 16 nodes at i/15, harmonic 15 aliases to the constant 1, so
  // c_15 = -1 makes g = 1 - 2 = -1 at every node.
  DensityParams p(1, 15, 1);
  p.c(0, 15, 0) = {-1.0, 0.0};
  const GridCdf g = conditional_grid_cdf(p, 0, 0, 16);
  EXPECT_TRUE(g.degenerate);
  for (int i = 0; i < g.size; ++i) EXPECT_NEAR(g.cdf[static_cast<std::size_t>(i)], g.node(i), 1e-15);
  EXPECT_FALSE(conditional_grid_cdf(p, 0, 0, 64).degenerate);
}

TEST(GridCdf, ArgumentErrors) {
  const DensityParams p(2, 1, 2);
  EXPECT_THROW(conditional_grid_cdf(p, 2, 0), Error);
  EXPECT_THROW(conditional_grid_cdf(p, 0, 2), Error);
  EXPECT_THROW(conditional_grid_cdf(p, 0, 0, 15), Error);
}

TEST(AnalyticCdf, EndpointsAndIdentity) {
  Rng rng(3, "t");
  const DensityParams p = random_density_params(2, 5, 2, rng);
  EXPECT_NEAR(conditional_cdf_analytic(p, 1, 1, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(conditional_cdf_analytic(p, 1, 1, 1.0), 1.0, 1e-14);
  const DensityParams flat(1, 0, 1);
  EXPECT_DOUBLE_EQ(conditional_cdf_analytic(flat, 0, 0, 0.37), 0.37);
  EXPECT_THROW(conditional_cdf_analytic(p, 0, 0, 1.5), Error);
}

TEST(AnalyticCdf, MatchesQuadrature) {
  Rng rng(4, "t");
  for (int trial = 0; trial < 10; ++trial) {
    const DensityParams p = random_density_params(1, 5, 1, rng, 1.0);
    for (double z : {0.1, 0.33, 0.5, 0.77, 0.95}) {
      const double q = oracle::simpson([&](double x) { return conditional_density(p, 0, 0, x); }, 0.0, z, 4000);
      EXPECT_NEAR(conditional_cdf_analytic(p, 0, 0, z), q, 1e-8);
    }
  }
}

TEST(SampleLatent, OneHotComponent) {
  Rng rng(5, "t");
  DensityParams p = random_density_params(2, 3, 3, rng);
  p.lambda << 0.0, 1.0, 0.0;
  std::vector<int> comp;
  LatentSampler(p).sample(2000, 1, &comp);
  for (int c : comp) ASSERT_EQ(c, 1);
}

TEST(SampleLatent, UniformMean) {
  const Matrix Z = sample_latent(DensityParams(3, 0, 2), 100000, 2);
  for (int d = 0; d < 3; ++d) EXPECT_NEAR(Z.col(d).mean(), 0.5, 0.01);
}

TEST(SampleLatent, KolmogorovSmirnov) {
  const DensityParams p = one_harmonic(0.25);
  const Matrix Z = sample_latent(p, 10000, 3);
  std::vector<double> x(Z.data(), Z.data() + Z.size());
  const double ks = oracle::ks_statistic(x, [&](double z) { return conditional_cdf_analytic(p, 0, 0, z); });
  EXPECT_LT(ks, 0.02);
}

TEST(SampleLatent, MixtureFrequencies) {
  DensityParams p(1, 1, 2);
  p.lambda << 0.3, 0.7;
  p.c(0, 1, 0) = {0.4, 0.0};
  p.c(0, 1, 1) = {-0.4, 0.0};
  std::vector<int> comp;
  LatentSampler(p).sample(100000, 4, &comp);
  const double freq0 = static_cast<double>(std::count(comp.begin(), comp.end(), 0)) / comp.size();
  EXPECT_NEAR(freq0, 0.3, 0.01);
}

TEST(SampleLatent, OpenCubeAndDeterminism) {
  Rng rng(6, "t");
  const DensityParams p = random_density_params(3, 4, 5, rng, 1.0);
  const Matrix a = sample_latent(p, 5000, 7), b = sample_latent(p, 5000, 7);
  EXPECT_EQ(a, b);
  EXPECT_GT(a.minCoeff(), 0.0);
  EXPECT_LT(a.maxCoeff(), 1.0);
  EXPECT_FALSE(a == sample_latent(p, 5000, 8));
  EXPECT_THROW(sample_latent(p, 0, 1), Error);
}

TEST(SampleLatent, IndependentOfThreadCount) {
  Rng rng(7, "t");
  const DensityParams p = random_density_params(2, 3, 2, rng);
  set_thread_limit(1);
  const Matrix a = sample_latent(p, 5000, 9);
  set_thread_limit(4);
  const Matrix b = sample_latent(p, 5000, 9);
  set_thread_limit(1);
  EXPECT_EQ(a, b);
}

TEST(SampleData, IdentityDecoderAndWidthCheck) {
  Rng rng(8, "t");
  const DensityParams p = random_density_params(2, 2, 2, rng);
  Matrix latent;
  const Matrix X = sample_data(NetworkParams{}, p, 100, 1, &latent);
  EXPECT_EQ(X, latent);
  EXPECT_EQ(X, sample_latent(p, 100, 1));

  const NetworkParams net = init_params(architecture_from_name("mlp:4:tanh", 5, 3), 1);
  EXPECT_THROW(sample_data(net, p, 10, 1), Error);
  const DensityParams p3 = random_density_params(3, 2, 2, rng);
  const Matrix Y = sample_data(net, p3, 10, 1);
  EXPECT_EQ(Y.cols(), 5);
  EXPECT_EQ(Y, sample_data(net, p3, 10, 1));
}
