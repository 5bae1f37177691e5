#pragma once
// Low-rank (CPD) model of the truncated Fourier-coefficient tensor of a
// density on [0,1]^D, read as a mixture of F product distributions.
//
// Each factor column holds the Fourier coefficients of one conditional
// marginal.  Only harmonics k = 1..K are stored: the k = 0 coefficient is
// pinned to 1 and negative harmonics are the complex conjugates, so every
// factor response is real and integrates to one by construction.

#include "cde/common.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace cde {

using Complex = std::complex<double>;

inline constexpr double kDefaultEpsFloor = 1e-10;

struct DensityParams {
  int D = 1;
  int K = 0;
  int F = 1;
  Vector lambda;                 // mixture weights, on the probability simplex
  std::vector<Complex> coef;     // half spectrum, D x K x F, k = 1..K

  DensityParams() = default;
  DensityParams(int dims, int harmonics, int rank)
      : D(checked_dims(dims, harmonics, rank)), K(harmonics), F(rank),
        lambda(Vector::Constant(rank, 1.0 / rank)),
        coef(static_cast<std::size_t>(dims) * harmonics * rank, Complex(0.0, 0.0)) {}

  static int checked_dims(int dims, int harmonics, int rank) {
    if (dims < 1 || harmonics < 0 || rank < 1) throw Error("DensityParams: need D >= 1, K >= 0, F >= 1");
    return dims;
  }

  std::size_t index(int d, int k, int f) const {
    return (static_cast<std::size_t>(d) * K + static_cast<std::size_t>(k - 1)) * F + static_cast<std::size_t>(f);
  }
  /// Coefficient of harmonic k (1-based) for dimension d and component f.
  Complex& c(int d, int k, int f) { return coef[index(d, k, f)]; }
  const Complex& c(int d, int k, int f) const { return coef[index(d, k, f)]; }

  /// Real view of the half spectrum: (Re, Im) pairs in storage order.
  std::span<double> coef_reals() { return {reinterpret_cast<double*>(coef.data()), coef.size() * 2}; }
  std::span<const double> coef_reals() const {
    return {reinterpret_cast<const double*>(coef.data()), coef.size() * 2};
  }

  bool operator==(const DensityParams&) const = default;
};

/// Gradients of the batch NLL.  grad_coef uses the real part for d/dRe and
/// the imaginary part for d/dIm; the pinned k = 0 row has no entry.
struct NllGradient {
  double value = 0.0;
  Vector grad_lambda;
  std::vector<Complex> grad_coef;
  Matrix grad_z;
};

namespace detail {

inline void check_point(std::span<const double> z, int D) {
  if (static_cast<int>(z.size()) != D) throw Error("latent point has wrong dimension");
  for (double v : z) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("latent point outside [0,1]^D");
  }
}

// V(d, f) and, when dv is non-null, dV(d, f)/dz_d.
inline void factor_response_into(const DensityParams& p, std::span<const double> z, Matrix& v, Matrix* dv) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  v.setOnes(p.D, p.F);
  if (dv) dv->setZero(p.D, p.F);
  for (int d = 0; d < p.D; ++d) {
    for (int k = 1; k <= p.K; ++k) {
      const double arg = two_pi * k * z[static_cast<std::size_t>(d)];
      const double cs = std::cos(arg);
      const double sn = std::sin(arg);
      const Complex* row = &p.coef[p.index(d, k, 0)];
      for (int f = 0; f < p.F; ++f) {
        v(d, f) += 2.0 * (row[f].real() * cs + row[f].imag() * sn);
        if (dv) (*dv)(d, f) += 2.0 * two_pi * k * (-row[f].real() * sn + row[f].imag() * cs);
      }
    }
  }
}

inline void check_batch(const Matrix& Z, int D) {
  if (Z.cols() != D) throw Error("latent batch has wrong column count");
  if (!((Z.array() >= 0.0).all() && (Z.array() <= 1.0).all())) throw Error("latent point outside [0,1]^D");
}

inline double density_unchecked(const DensityParams& p, std::span<const double> z, Matrix& v) {
  factor_response_into(p, z, v, nullptr);
  double total = 0.0;
  for (int f = 0; f < p.F; ++f) total += p.lambda(f) * v.col(f).prod();
  return total;
}

}  // namespace detail

/// D x F matrix of per-dimension, per-component responses
/// V(d,f) = 1 + 2 sum_k [Re c cos(2 pi k z_d) + Im c sin(2 pi k z_d)].
inline Matrix factor_response(const DensityParams& p, std::span<const double> z) {
  detail::check_point(z, p.D);
  Matrix v;
  detail::factor_response_into(p, z, v, nullptr);
  return v;
}

/// Truncated-series density at z.  The raw value is returned; it can be
/// slightly negative where truncation rings.
inline double density_eval(const DensityParams& p, std::span<const double> z) {
  detail::check_point(z, p.D);
  Matrix v;
  return detail::density_unchecked(p, z, v);
}

inline double density_eval(const DensityParams& p, const Vector& z) {
  return density_eval(p, std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
}

/// log(max(density, eps_floor)) for every row of Z.
inline Vector log_density_batch(const DensityParams& p, const Matrix& Z, double eps_floor = kDefaultEpsFloor) {
  detail::check_batch(Z, p.D);
  Vector out(Z.rows());
  parallel_for(static_cast<std::size_t>(Z.rows()), [&](std::size_t m) {
    Matrix v;
    const double f = detail::density_unchecked(
        p, std::span<const double>(Z.row(static_cast<Eigen::Index>(m)).data(), static_cast<std::size_t>(p.D)), v);
    out(static_cast<Eigen::Index>(m)) = std::log(std::max(f, eps_floor));
  });
  return out;
}

inline double nll_batch(const DensityParams& p, const Matrix& Z, double eps_floor = kDefaultEpsFloor) {
  if (Z.rows() == 0) throw Error("nll_batch: empty batch");
  if (!(eps_floor > 0.0)) throw Error("nll_batch: eps_floor must be positive");
  return -log_density_batch(p, Z, eps_floor).mean();
}

/// Exact gradients of nll_batch with respect to lambda, every stored
/// coefficient (Re and Im as independent reals) and every latent row.
/// Rows whose density is at or below the floor contribute nothing.
inline NllGradient nll_gradients(const DensityParams& p, const Matrix& Z, double eps_floor = kDefaultEpsFloor) {
  const auto M = Z.rows();
  if (M == 0) throw Error("nll_gradients: empty batch");
  if (!(eps_floor > 0.0)) throw Error("nll_gradients: eps_floor must be positive");
  detail::check_batch(Z, p.D);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  // Fixed-size row blocks reduced in order keep results independent of the
  // worker count.
  constexpr Eigen::Index kBlock = 256;
  const auto blocks = static_cast<std::size_t>((M + kBlock - 1) / kBlock);
  std::vector<Vector> block_lambda(blocks, Vector::Zero(p.F));
  std::vector<std::vector<Complex>> block_coef(blocks, std::vector<Complex>(p.coef.size()));
  std::vector<double> block_value(blocks, 0.0);

  NllGradient g;
  g.grad_z = Matrix::Zero(M, p.D);
  const double inv_m = 1.0 / static_cast<double>(M);

  parallel_for(blocks, [&](std::size_t b) {
    Matrix v, dv;
    Vector prod(p.F);
    Matrix others(p.D, p.F);
    std::vector<double> cs(static_cast<std::size_t>(p.K)), sn(static_cast<std::size_t>(p.K));
    auto& gl = block_lambda[b];
    auto& gc = block_coef[b];
    const Eigen::Index begin = static_cast<Eigen::Index>(b) * kBlock;
    const Eigen::Index end = std::min(M, begin + kBlock);
    for (Eigen::Index m = begin; m < end; ++m) {
      std::span<const double> z(Z.row(m).data(), static_cast<std::size_t>(p.D));
      detail::factor_response_into(p, z, v, &dv);
      double fhat = 0.0;
      for (int f = 0; f < p.F; ++f) {
        prod(f) = v.col(f).prod();
        fhat += p.lambda(f) * prod(f);
      }
      if (fhat <= eps_floor) {
        block_value[b] -= std::log(eps_floor) * inv_m;
        continue;
      }
      block_value[b] -= std::log(fhat) * inv_m;
      const double w = -inv_m / fhat;
      gl += w * prod;
      // Product over d' != d via prefix/suffix products (no division by V).
      for (int f = 0; f < p.F; ++f) {
        double prefix = 1.0;
        for (int d = 0; d < p.D; ++d) {
          others(d, f) = prefix;
          prefix *= v(d, f);
        }
        double suffix = 1.0;
        for (int d = p.D - 1; d >= 0; --d) {
          others(d, f) *= suffix;
          suffix *= v(d, f);
        }
      }
      for (int d = 0; d < p.D; ++d) {
        double gz = 0.0;
        for (int f = 0; f < p.F; ++f) gz += p.lambda(f) * others(d, f) * dv(d, f);
        g.grad_z(m, d) = w * gz;
        for (int k = 1; k <= p.K; ++k) {
          const double arg = two_pi * k * z[static_cast<std::size_t>(d)];
          cs[static_cast<std::size_t>(k - 1)] = std::cos(arg);
          sn[static_cast<std::size_t>(k - 1)] = std::sin(arg);
        }
        for (int f = 0; f < p.F; ++f) {
          const double scale = 2.0 * w * p.lambda(f) * others(d, f);
          for (int k = 1; k <= p.K; ++k) {
            gc[p.index(d, k, f)] += Complex(scale * cs[static_cast<std::size_t>(k - 1)],
                                            scale * sn[static_cast<std::size_t>(k - 1)]);
          }
        }
      }
    }
  });

  g.grad_lambda = Vector::Zero(p.F);
  g.grad_coef.assign(p.coef.size(), Complex(0.0, 0.0));
  for (std::size_t b = 0; b < blocks; ++b) {
    g.value += block_value[b];
    g.grad_lambda += block_lambda[b];
    for (std::size_t i = 0; i < g.grad_coef.size(); ++i) g.grad_coef[i] += block_coef[b][i];
  }
  return g;
}

/// Euclidean projection onto the probability simplex (sort and threshold).
/// The result is non-negative and sums to one when accumulated left to right.
inline Vector project_simplex(const Vector& v) {
  const auto n = v.size();
  if (n == 0) throw Error("project_simplex: empty vector");
  if (!v.allFinite()) throw Error("project_simplex: non-finite input");
  std::vector<double> sorted(v.data(), v.data() + n);
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += sorted[static_cast<std::size_t>(i)];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[static_cast<std::size_t>(i)] - t > 0.0) theta = t;
  }
  Vector w = (v.array() - theta).max(0.0);
  double sum = w.sum();
  if (sum <= 0.0) {
    // Only reachable through rounding when all entries tie; fall back to uniform.
    w.setConstant(1.0 / static_cast<double>(n));
    sum = w.sum();
  }
  w /= sum;
  Eigen::Index imax = 0;
  w.maxCoeff(&imax);
  for (int pass = 0; pass < 4; ++pass) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += w(i);
    if (s == 1.0) break;
    w(imax) += 1.0 - s;
  }
  return w;
}

/// Mean coefficient magnitude per dimension and harmonic, m_d(k).
/// Reporting only; empty when K = 0.
inline std::vector<std::vector<double>> decay_diagnostic(const DensityParams& p) {
  std::vector<std::vector<double>> out;
  if (p.K == 0) return out;
  out.assign(static_cast<std::size_t>(p.D), std::vector<double>(static_cast<std::size_t>(p.K), 0.0));
  for (int d = 0; d < p.D; ++d) {
    for (int k = 1; k <= p.K; ++k) {
      double s = 0.0;
      for (int f = 0; f < p.F; ++f) s += std::abs(p.c(d, k, f));
      out[static_cast<std::size_t>(d)][static_cast<std::size_t>(k - 1)] = s / p.F;
    }
  }
  return out;
}

/// Sum over d of ||A_d||_F^2 restricted to the learnable entries: each stored
/// coefficient appears twice (k and -k).  The constant origin row is omitted.
inline double frobenius_penalty(const DensityParams& p) {
  double s = 0.0;
  for (const auto& c : p.coef) s += std::norm(c);
  return 2.0 * s;
}

/// Gradient of frobenius_penalty, same layout as NllGradient::grad_coef.
inline std::vector<Complex> frobenius_gradient(const DensityParams& p) {
  std::vector<Complex> g(p.coef.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 4.0 * p.coef[i];
  return g;
}

/// Optional post-step: caps |c| at 1, a property every valid characteristic
/// function has.  Off by default in training.
inline void clip_coefficient_magnitudes(DensityParams& p) {
  for (auto& c : p.coef) {
    const double r = std::abs(c);
    if (r > 1.0) c /= r;
  }
}

/// lambda = 1/F; coefficient k gets a uniform random phase and a magnitude
/// drawn uniformly from [0, scale / k].
inline DensityParams random_density_params(int D, int K, int F, Rng& rng, double scale = 0.5) {
  DensityParams p(D, K, F);
  for (int d = 0; d < D; ++d) {
    for (int k = 1; k <= K; ++k) {
      for (int f = 0; f < F; ++f) {
        const double r = rng.uniform(0.0, scale / k);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        p.c(d, k, f) = std::polar(r, phase);
      }
    }
  }
  return p;
}

inline bool all_finite(const DensityParams& p) {
  if (!p.lambda.allFinite()) return false;
  for (const auto& c : p.coef) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  }
  return true;
}

}  // namespace cde
