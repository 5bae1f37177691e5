#pragma once
// Downstream uses of a trained model: likelihood-ranked anomaly detection,
// missing-value imputation by gradient ascent on the latent log-density, and
// the regression-by-imputation MAE protocol.

#include "cde/autoencoder.hpp"
#include "cde/density.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace cde {

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision, recall and F1 of binary flags against labels (1 = anomaly).
/// Zero denominators yield 0.
inline Prf1 prf1(const std::vector<int>& flags, const std::vector<int>& labels) {
  if (flags.size() != labels.size()) throw Error("prf1: flags and labels differ in length");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    const bool flag = flags[i] != 0;
    const bool anomaly = labels[i] != 0;
    tp += flag && anomaly;
    fp += flag && !anomaly;
    fn += !flag && anomaly;
  }
  Prf1 r;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

/// Latent log-likelihood log f_Z(h(x)) of every row, floored at eps_floor.
inline Vector score_rows(const NetworkParams& net, const DensityParams& dens, const Matrix& X,
                         double eps_floor = kDefaultEpsFloor) {
  return log_density_batch(dens, encode(net, X), eps_floor);
}

struct AnomalyResult {
  Vector scores;
  std::vector<int> flags;
  double threshold = 0.0;  // largest flagged score
  Prf1 metrics;
};

/// Flags the round(ratio * M) lowest-scoring rows; ties keep input order.
inline AnomalyResult anomaly_detect(const NetworkParams& net, const DensityParams& dens, const Matrix& X,
                                    const std::vector<int>& labels, double ratio,
                                    double eps_floor = kDefaultEpsFloor) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("anomaly_detect: ratio must be in (0, 1)");
  if (labels.size() != static_cast<std::size_t>(X.rows())) throw Error("anomaly_detect: one label per row required");
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error("anomaly_detect: labels must be 0 or 1");
  }
  const auto n_flag = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(X.rows())));
  if (n_flag == 0) throw Error("anomaly_detect: ratio flags no rows");

  AnomalyResult r;
  r.scores = score_rows(net, dens, X, eps_floor);
  std::vector<std::size_t> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.scores(static_cast<Eigen::Index>(a)) < r.scores(static_cast<Eigen::Index>(b));
  });
  r.flags.assign(order.size(), 0);
  for (std::size_t i = 0; i < n_flag; ++i) r.flags[order[i]] = 1;
  r.threshold = r.scores(static_cast<Eigen::Index>(order[n_flag - 1]));
  r.metrics = prf1(r.flags, labels);
  return r;
}

enum class ImputeInit { train_mean, observed_copy, zeros };

struct ImputeConfig {
  int steps = 500;
  double step_size = 1e-2;
  ImputeInit init = ImputeInit::train_mean;
  std::vector<bool> mask;        // true = observed
  std::vector<double> train_mean;  // used by ImputeInit::train_mean
  double eps_floor = kDefaultEpsFloor;
  bool clamp_unit = true;  // keep imputed values inside the normalized box [0, 1]
};

struct ImputeOutcome {
  std::vector<double> x;
  int steps_taken = 0;
  bool aborted = false;  // objective went non-finite; x is the last finite iterate
  double log_density = 0.0;
};

/// Fixed-step gradient ascent on log f_Z(h(x_O, x_M)) over the missing
/// coordinates.  Observed coordinates are never written.
inline ImputeOutcome impute_missing(const NetworkParams& net, const DensityParams& dens,
                                    const std::vector<double>& x_observed, const ImputeConfig& cfg) {
  const std::size_t N = x_observed.size();
  if (cfg.mask.size() != N) throw Error("impute_missing: mask length does not match the row");
  if (std::all_of(cfg.mask.begin(), cfg.mask.end(), [](bool b) { return b; })) {
    throw Error("impute_missing: nothing to impute (mask has no missing coordinate)");
  }
  if (!(cfg.step_size > 0.0)) throw Error("impute_missing: step size must be positive");
  if (cfg.steps < 0) throw Error("impute_missing: steps must be >= 0");
  if (cfg.init == ImputeInit::train_mean && cfg.train_mean.size() != N) {
    throw Error("impute_missing: train_mean init needs one mean per column");
  }

  ImputeOutcome out;
  out.x = x_observed;
  for (std::size_t j = 0; j < N; ++j) {
    if (cfg.mask[j]) continue;
    switch (cfg.init) {
      case ImputeInit::train_mean: out.x[j] = cfg.train_mean[j]; break;
      case ImputeInit::zeros: out.x[j] = 0.0; break;
      case ImputeInit::observed_copy:
        if (!std::isfinite(out.x[j])) out.x[j] = 0.0;
        break;
    }
  }

  Matrix x(1, static_cast<Eigen::Index>(N));
  for (std::size_t j = 0; j < N; ++j) x(0, static_cast<Eigen::Index>(j)) = out.x[j];
  for (int s = 0; s < cfg.steps; ++s) {
    const ForwardResult fw = forward(net, x);
    const NllGradient g = nll_gradients(dens, fw.Z, cfg.eps_floor);
    if (!std::isfinite(g.value) || !g.grad_z.allFinite()) {
      out.aborted = true;
      break;
    }
    // nll = -log f, so ascent on log f moves against d(nll)/dx.
    const BackwardResult bw = backward(net, fw.tape, Matrix::Zero(1, fw.Xhat.cols()), g.grad_z);
    Matrix next = x;
    for (std::size_t j = 0; j < N; ++j) {
      if (cfg.mask[j]) continue;
      const auto c = static_cast<Eigen::Index>(j);
      double v = x(0, c) - cfg.step_size * bw.dX(0, c);
      if (cfg.clamp_unit) v = std::clamp(v, 0.0, 1.0);
      next(0, c) = v;
    }
    if (!next.allFinite()) {
      out.aborted = true;
      break;
    }
    x = std::move(next);
    out.steps_taken = s + 1;
  }
  for (std::size_t j = 0; j < N; ++j) {
    if (!cfg.mask[j]) out.x[j] = x(0, static_cast<Eigen::Index>(j));
  }
  out.log_density = -nll_batch(dens, encode(net, x), cfg.eps_floor);
  return out;
}

/// Imputes every row independently; rows are processed in parallel.
inline std::vector<ImputeOutcome> impute_rows(const NetworkParams& net, const DensityParams& dens, const Matrix& X,
                                              const std::vector<std::vector<bool>>& masks, const ImputeConfig& base) {
  if (masks.size() != static_cast<std::size_t>(X.rows())) throw Error("impute_rows: one mask per row required");
  // Validate on the calling thread so worker threads never throw.
  for (const auto& m : masks) {
    if (m.size() != static_cast<std::size_t>(X.cols())) throw Error("impute_rows: mask width mismatch");
  }
  std::vector<ImputeOutcome> out(masks.size());
  std::vector<char> skip(masks.size(), 0);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    skip[i] = std::all_of(masks[i].begin(), masks[i].end(), [](bool b) { return b; });
  }
  if (base.init == ImputeInit::train_mean && base.train_mean.size() != static_cast<std::size_t>(X.cols())) {
    throw Error("impute_rows: train_mean init needs one mean per column");
  }
  parallel_for(masks.size(), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::vector<double> x(X.row(row).data(), X.row(row).data() + X.cols());
    if (skip[i]) {
      out[i].x = std::move(x);
      return;
    }
    ImputeConfig cfg = base;
    cfg.mask = masks[i];
    out[i] = impute_missing(net, dens, x, cfg);
  });
  return out;
}

struct RegressionResult {
  double mae = 0.0;
  double mean_predictor_mae = 0.0;  // baseline: predict the training mean
  Vector predictions;
};

/// Masks target_column in every row, imputes it and reports the mean
/// absolute error in normalized units, alongside the column-mean baseline.
inline RegressionResult regression_mae(const NetworkParams& net, const DensityParams& dens, const Matrix& X,
                                       int target_column, const ImputeConfig& cfg) {
  if (target_column < 0 || target_column >= X.cols()) throw Error("regression_mae: target column out of range");
  if (X.rows() == 0) throw Error("regression_mae: empty test set");
  std::vector<bool> mask(static_cast<std::size_t>(X.cols()), true);
  mask[static_cast<std::size_t>(target_column)] = false;
  const std::vector<std::vector<bool>> masks(static_cast<std::size_t>(X.rows()), mask);
  const auto imputed = impute_rows(net, dens, X, masks, cfg);

  RegressionResult r;
  r.predictions.resize(X.rows());
  const double baseline = cfg.train_mean.size() == static_cast<std::size_t>(X.cols())
                              ? cfg.train_mean[static_cast<std::size_t>(target_column)]
                              : X.col(target_column).mean();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double truth = X(i, target_column);
    const double pred = imputed[static_cast<std::size_t>(i)].x[static_cast<std::size_t>(target_column)];
    r.predictions(i) = pred;
    r.mae += std::abs(pred - truth);
    r.mean_predictor_mae += std::abs(baseline - truth);
  }
  r.mae /= static_cast<double>(X.rows());
  r.mean_predictor_mae /= static_cast<double>(X.rows());
  return r;
}

}  // namespace cde
