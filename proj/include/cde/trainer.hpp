#pragma once
// Joint training of the autoencoder and the latent density:
//
//   L = L_rec + mu * L_NLL(h(X)) + rho * sum_d ||A_d||_F^2
//
// optimized by projected SGD: Adam on the network and the half spectrum,
// plain gradient steps on lambda followed by projection onto the simplex,
// validation-based early stopping and best-snapshot return.

#include "cde/autoencoder.hpp"
#include "cde/density.hpp"

#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace cde {

struct TrainConfig {
  double mu = 0.1;
  double rho = 0.1;
  double lr_net = 1e-4;
  double lr_tensor = 1e-4;
  double lr_lambda = 1e-4;
  int batch = 500;
  int max_iter = 1000;
  int patience = 10;
  int pretrain_epochs = 50;
  double eps_floor = kDefaultEpsFloor;
  int K = 5;
  int F = 10;
  int D = 2;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int eval_every = 0;  // iterations between validations; 0 = once per epoch
  std::string arch = "mlp:32,16:tanh";
  double coef_init = 0.5;  // half-spectrum init magnitude bound is coef_init / k
  bool clip_magnitude = false;
  bool paper_init = false;
  double bound_margin = 0.01;

  bool operator==(const TrainConfig&) const = default;
};

inline void validate_config(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(std::string("invalid config: ") + what);
  };
  require(c.mu >= 0.0, "mu must be >= 0");
  require(c.rho >= 0.0, "rho must be >= 0");
  require(c.lr_net > 0.0 && c.lr_tensor > 0.0 && c.lr_lambda > 0.0, "learning rates must be positive");
  require(c.batch > 0, "batch must be positive");
  require(c.max_iter >= 0, "max_iter must be >= 0");
  require(c.patience > 0, "patience must be positive");
  require(c.pretrain_epochs >= 0, "pretrain_epochs must be >= 0");
  require(c.eps_floor > 0.0, "eps_floor must be positive");
  require(c.K >= 0 && c.F >= 1 && c.D >= 1, "need K >= 0, F >= 1, D >= 1");
  require(c.val_fraction > 0.0 && c.val_fraction < 1.0, "val_fraction must be in (0, 1)");
  require(c.eval_every >= 0, "eval_every must be >= 0");
  require(c.coef_init >= 0.0, "coef_init must be >= 0");
  require(c.bound_margin > 0.0 && c.bound_margin <= 0.1, "bound_margin must be in (0, 0.1]");
}

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Flat key=value text, one key per line; '#' starts a comment.
inline std::string to_config_text(const TrainConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "mu=" << format_double(c.mu) << '\n'
    << "rho=" << format_double(c.rho) << '\n'
    << "lr_net=" << format_double(c.lr_net) << '\n'
    << "lr_tensor=" << format_double(c.lr_tensor) << '\n'
    << "lr_lambda=" << format_double(c.lr_lambda) << '\n'
    << "batch=" << c.batch << '\n'
    << "max_iter=" << c.max_iter << '\n'
    << "patience=" << c.patience << '\n'
    << "pretrain_epochs=" << c.pretrain_epochs << '\n'
    << "eps_floor=" << format_double(c.eps_floor) << '\n'
    << "K=" << c.K << '\n'
    << "F=" << c.F << '\n'
    << "D=" << c.D << '\n'
    << "seed=" << c.seed << '\n'
    << "val_fraction=" << format_double(c.val_fraction) << '\n'
    << "eval_every=" << c.eval_every << '\n'
    << "arch=" << c.arch << '\n'
    << "coef_init=" << format_double(c.coef_init) << '\n'
    << "clip_magnitude=" << (c.clip_magnitude ? "true" : "false") << '\n'
    << "paper_init=" << (c.paper_init ? "true" : "false") << '\n'
    << "bound_margin=" << format_double(c.bound_margin) << '\n';
  return o.str();
}

/// Applies the keys found in text on top of base.  Unknown keys and
/// malformed values are errors naming the line.
inline TrainConfig parse_config_text(const std::string& text, TrainConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    try {
      if (key == "mu") base.mu = std::stod(val);
      else if (key == "rho") base.rho = std::stod(val);
      else if (key == "lr_net") base.lr_net = std::stod(val);
      else if (key == "lr_tensor") base.lr_tensor = std::stod(val);
      else if (key == "lr_lambda") base.lr_lambda = std::stod(val);
      else if (key == "batch") base.batch = std::stoi(val);
      else if (key == "max_iter") base.max_iter = std::stoi(val);
      else if (key == "patience") base.patience = std::stoi(val);
      else if (key == "pretrain_epochs") base.pretrain_epochs = std::stoi(val);
      else if (key == "eps_floor") base.eps_floor = std::stod(val);
      else if (key == "K") base.K = std::stoi(val);
      else if (key == "F") base.F = std::stoi(val);
      else if (key == "D") base.D = std::stoi(val);
      else if (key == "seed") base.seed = std::stoull(val);
      else if (key == "val_fraction") base.val_fraction = std::stod(val);
      else if (key == "eval_every") base.eval_every = std::stoi(val);
      else if (key == "arch") base.arch = val;
      else if (key == "coef_init") base.coef_init = std::stod(val);
      else if (key == "clip_magnitude") base.clip_magnitude = detail::parse_bool(key, val);
      else if (key == "paper_init") base.paper_init = detail::parse_bool(key, val);
      else if (key == "bound_margin") base.bound_margin = std::stod(val);
      else throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw Error("config line " + std::to_string(lineno) + ": bad value '" + val + "' for key '" + key + "'");
    }
  }
  return base;
}

// ---------------------------------------------------------------------------

struct JointGradients {
  double rec = 0.0;
  double nll = 0.0;
  double frob = 0.0;
  double total = 0.0;
  NetworkGradients net;
  Vector grad_lambda;
  std::vector<Complex> grad_coef;
};

/// Loss components and gradients of every parameter group on one batch.
/// The NLL's latent gradient is injected at the bottleneck, scaled by mu.
inline JointGradients joint_loss_and_grads(const NetworkParams& net, const DensityParams& dens, const Matrix& Xb,
                                           const TrainConfig& cfg) {
  if (Xb.rows() == 0) throw Error("joint_loss_and_grads: empty batch");
  JointGradients g;
  const ForwardResult fw = forward(net, Xb);
  g.rec = reconstruction_loss(Xb, fw.Xhat);
  const NllGradient ng = nll_gradients(dens, fw.Z, cfg.eps_floor);
  g.nll = ng.value;
  g.frob = frobenius_penalty(dens);
  g.total = g.rec + cfg.mu * g.nll + cfg.rho * g.frob;

  const Matrix dZ = cfg.mu * ng.grad_z;
  BackwardResult bw = backward(net, fw.tape, reconstruction_grad(Xb, fw.Xhat), dZ);
  g.net = std::move(bw.grads);
  g.grad_lambda = cfg.mu * ng.grad_lambda;
  const auto fg = frobenius_gradient(dens);
  g.grad_coef.resize(dens.coef.size());
  for (std::size_t i = 0; i < g.grad_coef.size(); ++i) g.grad_coef[i] = cfg.mu * ng.grad_coef[i] + cfg.rho * fg[i];
  return g;
}

/// Validation score L_rec + mu * L_NLL (the rho penalty is not data fit).
inline double validate(const NetworkParams& net, const DensityParams& dens, const Matrix& Xval, const TrainConfig& cfg) {
  if (Xval.rows() == 0) throw Error("validate: empty validation set");
  const ForwardResult fw = forward(net, Xval);
  return reconstruction_loss(Xval, fw.Xhat) + cfg.mu * nll_batch(dens, fw.Z, cfg.eps_floor);
}

enum class StopReason { max_iter, patience };

inline std::string to_string(StopReason r) { return r == StopReason::max_iter ? "max_iter" : "patience"; }

struct TrainReport {
  std::vector<double> rec;   // per iteration, training batch
  std::vector<double> nll;
  std::vector<double> frob;
  std::vector<int> val_iteration;  // iteration of each validation (0 = before training)
  std::vector<double> val;
  StopReason stop = StopReason::max_iter;
  int iterations = 0;
  int best_iteration = 0;
  double best_val = 0.0;
  double wall_seconds = 0.0;
};

/// Raised when a loss component or a parameter becomes non-finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int iteration, const std::string& component)
      : Error("training diverged at iteration " + std::to_string(iteration) + ": " + component + " is not finite"),
        iteration_(iteration), component_(component) {}
  int iteration() const { return iteration_; }
  const std::string& component() const { return component_; }

 private:
  int iteration_;
  std::string component_;
};

struct TrainResult {
  NetworkParams net;
  DensityParams density;
  TrainReport report;
};

/// Metrics CSV: iteration,rec,nll,frob,val.  Training columns are empty for
/// the initial validation row; val is empty where no validation ran.
inline std::string metrics_csv(const TrainReport& r) {
  using detail::format_double;
  std::ostringstream o;
  o << "iteration,rec,nll,frob,val\n";
  std::size_t v = 0;
  if (!r.val_iteration.empty() && r.val_iteration.front() == 0) {
    o << "0,,,," << format_double(r.val.front()) << '\n';
    v = 1;
  }
  for (std::size_t i = 0; i < r.rec.size(); ++i) {
    const int it = static_cast<int>(i) + 1;
    o << it << ',' << format_double(r.rec[i]) << ',' << format_double(r.nll[i]) << ',' << format_double(r.frob[i])
      << ',';
    if (v < r.val_iteration.size() && r.val_iteration[v] == it) o << format_double(r.val[v++]);
    o << '\n';
  }
  return o.str();
}

/// Projected-SGD joint training starting from an initial network.
inline TrainResult train(NetworkParams init_net, const Matrix& Xtrain, const Matrix& Xval, const TrainConfig& cfg) {
  validate_config(cfg);
  if (Xtrain.rows() == 0 || Xval.rows() == 0) throw Error("train: training and validation sets must be non-empty");
  if (Xtrain.cols() != Xval.cols()) throw Error("train: training and validation widths differ");
  const int latent = init_net.bypass() ? static_cast<int>(Xtrain.cols()) : init_net.latent_width();
  if (latent != cfg.D) {
    throw Error("train: network latent width " + std::to_string(latent) + " does not match D=" + std::to_string(cfg.D));
  }
  const auto start = std::chrono::steady_clock::now();

  TrainResult out;
  TrainReport& rep = out.report;
  const std::uint64_t pretrain_seed = Rng(cfg.seed, "pretrain").engine()();
  NetworkParams net = pretrain(std::move(init_net), Xtrain, cfg.pretrain_epochs, cfg.lr_net,
                               static_cast<std::size_t>(cfg.batch), pretrain_seed);
  Rng tensor_rng(cfg.seed, "tensor-init");
  DensityParams dens = random_density_params(cfg.D, cfg.K, cfg.F, tensor_rng, cfg.coef_init);

  BatchSchedule schedule(static_cast<std::size_t>(Xtrain.rows()), static_cast<std::size_t>(cfg.batch),
                         Rng(cfg.seed, "batching"));
  const int eval_every = cfg.eval_every > 0 ? cfg.eval_every : static_cast<int>(schedule.batches_per_epoch());
  AdamState adam_net(parameter_count(net));
  AdamState adam_tensor(dens.coef.size() * 2);

  auto evaluate = [&](int it) {
    const double v = validate(net, dens, Xval, cfg);
    if (!std::isfinite(v)) throw TrainingDiverged(it, "validation loss");
    rep.val_iteration.push_back(it);
    rep.val.push_back(v);
    return v;
  };

  rep.best_val = evaluate(0);
  rep.best_iteration = 0;
  out.net = net;
  out.density = dens;
  int stale = 0;

  for (int it = 1; it <= cfg.max_iter; ++it) {
    const Matrix xb = gather_rows(Xtrain, schedule.next());
    JointGradients g = joint_loss_and_grads(net, dens, xb, cfg);
    if (!std::isfinite(g.rec)) throw TrainingDiverged(it, "reconstruction loss");
    if (!std::isfinite(g.nll)) throw TrainingDiverged(it, "nll");
    if (!std::isfinite(g.frob)) throw TrainingDiverged(it, "frobenius penalty");

    if (!net.bypass()) adam_step(net, g.net, adam_net, cfg.lr_net);
    const std::span<const double> coef_grad(reinterpret_cast<const double*>(g.grad_coef.data()),
                                            g.grad_coef.size() * 2);
    adam_step(dens.coef_reals(), coef_grad, adam_tensor, cfg.lr_tensor);
    if (cfg.clip_magnitude) clip_coefficient_magnitudes(dens);
    dens.lambda = project_simplex(dens.lambda - cfg.lr_lambda * g.grad_lambda);

    if (!all_finite(net)) throw TrainingDiverged(it, "network parameters");
    if (!all_finite(dens)) throw TrainingDiverged(it, "density parameters");
    rep.rec.push_back(g.rec);
    rep.nll.push_back(g.nll);
    rep.frob.push_back(g.frob);
    rep.iterations = it;

    if (it % eval_every == 0 || it == cfg.max_iter) {
      const double v = evaluate(it);
      if (v < rep.best_val) {
        rep.best_val = v;
        rep.best_iteration = it;
        out.net = net;
        out.density = dens;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        rep.stop = StopReason::patience;
        break;
      }
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Builds the network named by cfg.arch for data of width N, then trains.
inline TrainResult train(const Matrix& Xtrain, const Matrix& Xval, const TrainConfig& cfg) {
  validate_config(cfg);
  InitOptions opt;
  opt.paper_uniform = cfg.paper_init;
  opt.bound_margin = cfg.bound_margin;
  const Architecture arch = architecture_from_name(cfg.arch, static_cast<int>(Xtrain.cols()), cfg.D);
  return train(init_params(arch, Rng(cfg.seed, "network").engine()(), opt), Xtrain, Xval, cfg);
}

}  // namespace cde
