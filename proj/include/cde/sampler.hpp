#pragma once
// Ancestral sampling from the mixture-of-products latent density: draw the
// component from lambda, then each coordinate independently by inverse
// transform on a tabulated conditional CDF.

#include "cde/autoencoder.hpp"
#include "cde/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace cde {

inline constexpr int kDefaultGridSize = 1024;

/// Clipped, renormalized conditional marginal f_{Z_d | H = f} tabulated on S
/// uniform nodes z_i = i / (S - 1), with its cumulative trapezoid integral.
struct GridCdf {
  int component = 0;
  int dim = 0;
  int size = 0;
  std::vector<double> density;
  std::vector<double> cdf;
  bool degenerate = false;  // clipped density vanished; replaced by uniform

  double node(int i) const { return static_cast<double>(i) / (size - 1); }

  /// Inverse CDF with linear interpolation between nodes.  For u in (0, 1)
  /// the result lies in the open interval (0, 1).
  double inverse(double u) const {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.begin()) return 0.0;
    if (it == cdf.end()) return 1.0;
    const auto j = static_cast<int>(it - cdf.begin());
    const int i = j - 1;
    const double t = (u - cdf[static_cast<std::size_t>(i)]) / (cdf[static_cast<std::size_t>(j)] - cdf[static_cast<std::size_t>(i)]);
    return node(i) + t * (node(j) - node(i));
  }
};

/// Unclipped conditional marginal g(z) = 1 + 2 sum_k [Re c cos + Im c sin].
inline double conditional_density(const DensityParams& p, int d, int f, double z) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double g = 1.0;
  for (int k = 1; k <= p.K; ++k) {
    const Complex& c = p.c(d, k, f);
    g += 2.0 * (c.real() * std::cos(two_pi * k * z) + c.imag() * std::sin(two_pi * k * z));
  }
  return g;
}

inline GridCdf conditional_grid_cdf(const DensityParams& p, int d, int f, int S = kDefaultGridSize) {
  if (d < 0 || d >= p.D || f < 0 || f >= p.F) throw Error("conditional_grid_cdf: index out of range");
  if (S < 16) throw Error("conditional_grid_cdf: grid size must be >= 16");
  GridCdf g;
  g.component = f;
  g.dim = d;
  g.size = S;
  g.density.resize(static_cast<std::size_t>(S));
  for (int i = 0; i < S; ++i) g.density[static_cast<std::size_t>(i)] = std::max(0.0, conditional_density(p, d, f, g.node(i)));

  const double h = 1.0 / (S - 1);
  g.cdf.assign(static_cast<std::size_t>(S), 0.0);
  for (std::size_t i = 1; i < g.cdf.size(); ++i) g.cdf[i] = g.cdf[i - 1] + 0.5 * h * (g.density[i - 1] + g.density[i]);
  const double total = g.cdf.back();
  if (!(total > 0.0)) {
    g.degenerate = true;
    std::fill(g.density.begin(), g.density.end(), 1.0);
    for (int i = 0; i < S; ++i) g.cdf[static_cast<std::size_t>(i)] = g.node(i);
  } else {
    for (auto& v : g.density) v /= total;
    for (auto& v : g.cdf) v /= total;
  }
  g.cdf.front() = 0.0;
  g.cdf.back() = 1.0;
  return g;
}

/// Closed-form antiderivative of the unclipped conditional marginal:
/// z + (1/pi) sum_k (1/k) [Re c sin(2 pi k z) + Im c (1 - cos(2 pi k z))].
inline double conditional_cdf_analytic(const DensityParams& p, int d, int f, double z) {
  if (!(z >= 0.0 && z <= 1.0)) throw Error("conditional_cdf_analytic: z outside [0,1]");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double s = 0.0;
  for (int k = 1; k <= p.K; ++k) {
    const Complex& c = p.c(d, k, f);
    s += (c.real() * std::sin(two_pi * k * z) + c.imag() * (1.0 - std::cos(two_pi * k * z))) / k;
  }
  return z + s / std::numbers::pi;
}

/// Tables for every (component, dimension) pair, built once per model.
class LatentSampler {
 public:
  explicit LatentSampler(const DensityParams& p, int S = kDefaultGridSize) : params_(p) {
    tables_.reserve(static_cast<std::size_t>(p.F * p.D));
    for (int f = 0; f < p.F; ++f) {
      for (int d = 0; d < p.D; ++d) tables_.push_back(conditional_grid_cdf(p, d, f, S));
    }
    cumulative_.resize(static_cast<std::size_t>(p.F));
    double acc = 0.0;
    for (int f = 0; f < p.F; ++f) cumulative_[static_cast<std::size_t>(f)] = acc += std::max(0.0, p.lambda(f));
    for (auto& c : cumulative_) c /= acc;
    cumulative_.back() = 1.0;
  }

  const GridCdf& table(int f, int d) const { return tables_[static_cast<std::size_t>(f * params_.D + d)]; }

  int draw_component(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative_.begin(), params_.F - 1));
  }

  /// M latent draws; components[m] receives the mixture component of row m
  /// when requested.  Rows are generated in fixed blocks with independent
  /// substreams, so output does not depend on the worker count.
  Matrix sample(int M, std::uint64_t seed, std::vector<int>* components = nullptr) const {
    if (M < 1) throw Error("sample_latent: M must be >= 1");
    Matrix Z(M, params_.D);
    std::vector<int> comp(static_cast<std::size_t>(M));
    constexpr int kBlock = 1024;
    const auto blocks = static_cast<std::size_t>((M + kBlock - 1) / kBlock);
    parallel_for(blocks, [&](std::size_t b) {
      Rng rng(seed, "sampling", b);
      const int begin = static_cast<int>(b) * kBlock;
      const int end = std::min(M, begin + kBlock);
      for (int m = begin; m < end; ++m) {
        const int f = draw_component(rng);
        comp[static_cast<std::size_t>(m)] = f;
        for (int d = 0; d < params_.D; ++d) Z(m, d) = table(f, d).inverse(rng.open_unit());
      }
    });
    if (components) *components = std::move(comp);
    return Z;
  }

 private:
  DensityParams params_;
  std::vector<GridCdf> tables_;
  std::vector<double> cumulative_;
};

inline Matrix sample_latent(const DensityParams& p, int M, std::uint64_t seed) {
  return LatentSampler(p).sample(M, seed);
}

/// Latent draws decoded through g.
inline Matrix sample_data(const NetworkParams& net, const DensityParams& p, int M, std::uint64_t seed,
                          Matrix* latent = nullptr) {
  if (!net.bypass() && net.decoder.front().spec.in_width != p.D) {
    throw Error("sample_data: decoder input width does not match latent dimension");
  }
  Matrix Z = sample_latent(p, M, seed);
  Matrix X = decode(net, Z);
  if (latent) *latent = std::move(Z);
  return X;
}

}  // namespace cde
