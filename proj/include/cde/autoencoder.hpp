#pragma once
// Fully-connected encoder/decoder with hand-written reverse mode.
//
// Batches are row-major (one sample per row).  A layer computes
// act(X * W + b) with W stored in_width x out_width.  The encoder ends in a
// "bounded" scaled logistic so latent codes stay inside [delta, 1 - delta]
// where the periodic density model lives.

#include "cde/common.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace cde {

enum class Activation { relu, tanh, identity, bounded };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    case Activation::bounded: return "bounded";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity" || s == "none") return Activation::identity;
  if (s == "bounded") return Activation::bounded;
  throw Error("unknown activation '" + s + "'");
}

struct LayerSpec {
  int in_width = 0;
  int out_width = 0;
  Activation activation = Activation::identity;
  bool operator==(const LayerSpec&) const = default;
};

struct Layer {
  Matrix weight;  // in_width x out_width
  Vector bias;    // out_width
  LayerSpec spec;
  bool operator==(const Layer&) const = default;
};

/// Encoder and decoder stacks.  Both empty means identity bypass: z = x and
/// x~ = z, used to fit the latent density directly on data in [0,1]^N.
struct NetworkParams {
  std::vector<Layer> encoder;
  std::vector<Layer> decoder;
  double bound_margin = 0.01;

  bool bypass() const { return encoder.empty() && decoder.empty(); }
  std::size_t layer_count() const { return encoder.size() + decoder.size(); }
  const Layer& layer(std::size_t i) const { return i < encoder.size() ? encoder[i] : decoder[i - encoder.size()]; }
  Layer& layer(std::size_t i) { return i < encoder.size() ? encoder[i] : decoder[i - encoder.size()]; }

  int input_width() const { return encoder.empty() ? -1 : encoder.front().spec.in_width; }
  int latent_width() const { return encoder.empty() ? -1 : encoder.back().spec.out_width; }
  int output_width() const { return decoder.empty() ? -1 : decoder.back().spec.out_width; }

  bool operator==(const NetworkParams&) const = default;
};

struct Architecture {
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;
  bool bypass() const { return encoder.empty() && decoder.empty(); }
};

struct InitOptions {
  bool paper_uniform = false;  // weights uniform on [-1, 1]
  bool require_bounded_bottleneck = true;
  double bound_margin = 0.01;
};

namespace detail {

inline void check_chain(const std::vector<LayerSpec>& enc, const std::vector<LayerSpec>& dec, bool require_bounded) {
  if (enc.empty() != dec.empty()) throw Error("encoder and decoder must both be empty (bypass) or both non-empty");
  std::vector<std::pair<std::string, LayerSpec>> all;
  for (std::size_t i = 0; i < enc.size(); ++i) all.emplace_back("encoder layer " + std::to_string(i), enc[i]);
  for (std::size_t i = 0; i < dec.size(); ++i) all.emplace_back("decoder layer " + std::to_string(i), dec[i]);
  for (const auto& [name, s] : all) {
    if (s.in_width <= 0 || s.out_width <= 0) throw Error(name + ": widths must be positive");
  }
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    if (all[i].second.out_width != all[i + 1].second.in_width) {
      std::ostringstream msg;
      msg << "width mismatch between " << all[i].first << " (out " << all[i].second.out_width << ") and "
          << all[i + 1].first << " (in " << all[i + 1].second.in_width << ")";
      throw Error(msg.str());
    }
  }
  if (require_bounded && !enc.empty() && enc.back().activation != Activation::bounded) {
    throw Error("encoder must end with a bounded activation");
  }
}

inline double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

inline void apply_activation(Activation act, double margin, const Matrix& pre, Matrix& out) {
  switch (act) {
    case Activation::relu: out = pre.cwiseMax(0.0); break;
    case Activation::tanh: out = pre.array().tanh().matrix(); break;
    case Activation::identity: out = pre; break;
    case Activation::bounded:
      out = pre.unaryExpr([margin](double a) { return margin + (1.0 - 2.0 * margin) * sigmoid(a); });
      break;
  }
}

// dL/dpre given dL/dpost.
inline Matrix activation_backward(Activation act, double margin, const Matrix& pre, const Matrix& post,
                                  const Matrix& grad_post) {
  switch (act) {
    case Activation::relu: return grad_post.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    case Activation::tanh: return grad_post.cwiseProduct((1.0 - post.array().square()).matrix());
    case Activation::identity: return grad_post;
    case Activation::bounded: {
      const double span = 1.0 - 2.0 * margin;
      Matrix s = pre.unaryExpr([](double a) { return sigmoid(a); });
      return grad_post.cwiseProduct((span * s.array() * (1.0 - s.array())).matrix());
    }
  }
  return grad_post;
}

}  // namespace detail

/// Builds a network with uniform weights on [-s, s], s = min(1, sqrt(6/(in+out)))
/// (or [-1, 1] with paper_uniform) and zero biases.
inline NetworkParams init_params(const std::vector<LayerSpec>& enc, const std::vector<LayerSpec>& dec,
                                 std::uint64_t seed, const InitOptions& opt = {}) {
  detail::check_chain(enc, dec, opt.require_bounded_bottleneck);
  if (!(opt.bound_margin > 0.0 && opt.bound_margin <= 0.1)) throw Error("bound margin must be in (0, 0.1]");
  Rng rng(seed, "init");
  NetworkParams net;
  net.bound_margin = opt.bound_margin;
  auto build = [&](const LayerSpec& s) {
    const double scale = opt.paper_uniform ? 1.0 : std::min(1.0, std::sqrt(6.0 / (s.in_width + s.out_width)));
    Layer l;
    l.spec = s;
    l.weight.resize(s.in_width, s.out_width);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-scale, scale);
    l.bias = Vector::Zero(s.out_width);
    return l;
  };
  for (const auto& s : enc) net.encoder.push_back(build(s));
  for (const auto& s : dec) net.decoder.push_back(build(s));
  return net;
}

inline NetworkParams init_params(const Architecture& arch, std::uint64_t seed, const InitOptions& opt = {}) {
  return init_params(arch.encoder, arch.decoder, seed, opt);
}

/// Named architectures.  Presets fix the data width N and latent width D;
/// "mlp:h1,h2,...:act" builds N -> h1 -> ... -> D with a mirrored decoder;
/// "identity" is the bypass (requires N == D).  Every encoder ends bounded.
inline Architecture architecture_from_name(const std::string& name, int N, int D) {
  auto stack = [](std::vector<int> widths, Activation hidden) {
    Architecture a;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const bool last = i + 2 == widths.size();
      a.encoder.push_back({widths[i], widths[i + 1], last ? Activation::bounded : hidden});
    }
    for (std::size_t i = widths.size() - 1; i > 0; --i) {
      const bool last = i == 1;
      a.decoder.push_back({widths[i], widths[i - 1], last ? Activation::identity : hidden});
    }
    return a;
  };
  auto preset = [&](std::vector<int> widths, Activation hidden) {
    if (N != widths.front() || D != widths.back()) {
      throw Error("architecture '" + name + "' expects N=" + std::to_string(widths.front()) +
                  " and D=" + std::to_string(widths.back()) + ", got N=" + std::to_string(N) +
                  " and D=" + std::to_string(D));
    }
    return stack(std::move(widths), hidden);
  };
  if (name == "identity") {
    if (N != D) throw Error("identity bypass requires N == D");
    return {};
  }
  if (name == "toy3d") return preset({3, 128, 64, 32, 2}, Activation::relu);
  if (name == "mnist") return preset({784, 128, 64, 32}, Activation::relu);
  if (name == "fmnist") return preset({784, 256, 128, 64, 32, 16}, Activation::relu);
  if (name == "thyroid") return preset({6, 12, 4, 2}, Activation::tanh);
  if (name == "kddcup" || name == "kddcup_rev") return preset({120, 60, 30, 20, 10}, Activation::tanh);
  if (name == "arrhythmia") return preset({274, 64, 32}, Activation::tanh);
  if (name.rfind("mlp:", 0) == 0) {
    const auto colon = name.find(':', 4);
    if (colon == std::string::npos) throw Error("mlp architecture must look like mlp:16,8:tanh");
    std::vector<int> widths{N};
    std::stringstream hidden(name.substr(4, colon - 4));
    for (std::string tok; std::getline(hidden, tok, ',');) {
      if (tok.empty()) continue;
      try {
        widths.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw Error("bad hidden width '" + tok + "' in architecture '" + name + "'");
      }
    }
    widths.push_back(D);
    return stack(std::move(widths), activation_from_string(name.substr(colon + 1)));
  }
  throw Error("unknown architecture '" + name + "'");
}

/// Per-layer activations saved by forward.  acts[0] is the input and
/// acts[i + 1] the output of layer i (encoder layers first).
struct Tape {
  std::vector<Matrix> pre;
  std::vector<Matrix> acts;
};

struct ForwardResult {
  Matrix Z;
  Matrix Xhat;
  Tape tape;
};

struct NetworkGradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

struct BackwardResult {
  NetworkGradients grads;
  Matrix dX;
};

namespace detail {

inline void run_layers(const NetworkParams& net, std::size_t first, std::size_t last, Tape& tape) {
  for (std::size_t i = first; i < last; ++i) {
    const Layer& l = net.layer(i);
    Matrix pre = tape.acts.back() * l.weight;
    pre.rowwise() += l.bias.transpose();
    Matrix post;
    apply_activation(l.spec.activation, net.bound_margin, pre, post);
    tape.pre.push_back(std::move(pre));
    tape.acts.push_back(std::move(post));
  }
}

inline void check_input(const NetworkParams& net, const Matrix& X) {
  if (!net.bypass() && X.cols() != net.input_width()) {
    throw Error("input has " + std::to_string(X.cols()) + " columns, network expects " +
                std::to_string(net.input_width()));
  }
}

}  // namespace detail

/// Encoder only: z = h(X).
inline Matrix encode(const NetworkParams& net, const Matrix& X) {
  detail::check_input(net, X);
  if (net.bypass()) return X;
  Tape t;
  t.acts.push_back(X);
  detail::run_layers(net, 0, net.encoder.size(), t);
  return std::move(t.acts.back());
}

/// Decoder only: x~ = g(Z).
inline Matrix decode(const NetworkParams& net, const Matrix& Z) {
  if (net.bypass()) return Z;
  if (Z.cols() != net.decoder.front().spec.in_width) throw Error("latent width does not match decoder input");
  Tape t;
  t.acts.push_back(Z);
  detail::run_layers(net, net.encoder.size(), net.layer_count(), t);
  return std::move(t.acts.back());
}

inline ForwardResult forward(const NetworkParams& net, const Matrix& X) {
  detail::check_input(net, X);
  ForwardResult r;
  if (net.bypass()) {
    r.Z = X;
    r.Xhat = X;
    return r;
  }
  r.tape.acts.reserve(net.layer_count() + 1);
  r.tape.acts.push_back(X);
  detail::run_layers(net, 0, net.layer_count(), r.tape);
  r.Z = r.tape.acts[net.encoder.size()];
  r.Xhat = r.tape.acts.back();
  return r;
}

/// Mean over rows of the squared Euclidean reconstruction error.
inline double reconstruction_loss(const Matrix& X, const Matrix& Xhat) {
  if (X.rows() != Xhat.rows() || X.cols() != Xhat.cols()) throw Error("reconstruction_loss: shape mismatch");
  if (X.rows() == 0) return 0.0;
  return (X - Xhat).squaredNorm() / static_cast<double>(X.rows());
}

/// d reconstruction_loss / d Xhat.
inline Matrix reconstruction_grad(const Matrix& X, const Matrix& Xhat) {
  return 2.0 * (Xhat - X) / static_cast<double>(X.rows());
}

inline NetworkGradients zero_gradients(const NetworkParams& net) {
  NetworkGradients g;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    g.weight.push_back(Matrix::Zero(net.layer(i).weight.rows(), net.layer(i).weight.cols()));
    g.bias.push_back(Vector::Zero(net.layer(i).bias.size()));
  }
  return g;
}

/// Reverse pass.  dXhat is the sensitivity at the decoder output and dZ the
/// sensitivity injected at the bottleneck; returns parameter gradients and
/// the input gradient dX.
inline BackwardResult backward(const NetworkParams& net, const Tape& tape, const Matrix& dXhat, const Matrix& dZ) {
  BackwardResult r;
  if (net.bypass()) {
    if (dXhat.rows() != dZ.rows() || dXhat.cols() != dZ.cols()) throw Error("backward: sensitivity shape mismatch");
    r.dX = dXhat + dZ;
    return r;
  }
  const std::size_t L = net.layer_count();
  if (tape.acts.size() != L + 1 || tape.pre.size() != L) throw Error("backward: tape does not match network");
  for (std::size_t i = 0; i < L; ++i) {
    const auto& s = net.layer(i).spec;
    if (tape.acts[i].cols() != s.in_width || tape.pre[i].cols() != s.out_width) {
      throw Error("backward: tape does not match network at layer " + std::to_string(i));
    }
  }
  const auto M = tape.acts.front().rows();
  if (dXhat.rows() != M || dXhat.cols() != tape.acts.back().cols()) throw Error("backward: dXhat shape mismatch");
  if (dZ.rows() != M || dZ.cols() != net.latent_width()) throw Error("backward: dZ shape mismatch");

  r.grads = zero_gradients(net);
  Matrix grad = dXhat;
  for (std::size_t i = L; i-- > 0;) {
    if (i + 1 == net.encoder.size()) grad += dZ;
    const Layer& l = net.layer(i);
    const Matrix gpre =
        detail::activation_backward(l.spec.activation, net.bound_margin, tape.pre[i], tape.acts[i + 1], grad);
    r.grads.weight[i].noalias() = tape.acts[i].transpose() * gpre;
    r.grads.bias[i] = gpre.colwise().sum().transpose();
    grad = gpre * l.weight.transpose();
  }
  r.dX = std::move(grad);
  return r;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, double lr) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw Error("adam_step: shape mismatch");
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

inline std::size_t parameter_count(const NetworkParams& net) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    n += static_cast<std::size_t>(net.layer(i).weight.size() + net.layer(i).bias.size());
  }
  return n;
}

/// Weights then bias for each layer, encoder first.
inline std::vector<double> flatten(const NetworkParams& net) {
  std::vector<double> out;
  out.reserve(parameter_count(net));
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const Layer& l = net.layer(i);
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

inline std::vector<double> flatten(const NetworkGradients& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    out.insert(out.end(), g.weight[i].data(), g.weight[i].data() + g.weight[i].size());
    out.insert(out.end(), g.bias[i].data(), g.bias[i].data() + g.bias[i].size());
  }
  return out;
}

inline void unflatten(std::span<const double> flat, NetworkParams& net) {
  if (flat.size() != parameter_count(net)) throw Error("unflatten: size mismatch");
  std::size_t off = 0;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    Layer& l = net.layer(i);
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), l.weight.size(), l.weight.data());
    off += static_cast<std::size_t>(l.weight.size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), l.bias.size(), l.bias.data());
    off += static_cast<std::size_t>(l.bias.size());
  }
}

inline void adam_step(NetworkParams& net, const NetworkGradients& g, AdamState& s, double lr) {
  std::vector<double> p = flatten(net);
  const std::vector<double> gf = flatten(g);
  adam_step(p, gf, s, lr);
  unflatten(p, net);
}

inline bool all_finite(const NetworkParams& net) {
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    if (!net.layer(i).weight.allFinite() || !net.layer(i).bias.allFinite()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Mini-batching

/// Index batches over M rows; the order is reshuffled at the start of every
/// epoch.  The last batch of an epoch holds the remainder.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t rows, std::size_t batch, Rng rng) : rng_(std::move(rng)), batch_(batch), order_(rows) {
    if (rows == 0) throw Error("BatchSchedule: no rows");
    if (batch == 0) throw Error("BatchSchedule: batch must be positive");
    for (std::size_t i = 0; i < rows; ++i) order_[i] = i;
    cursor_ = rows;
  }

  std::size_t batches_per_epoch() const { return (order_.size() + batch_ - 1) / batch_; }

  std::vector<std::size_t> next() {
    if (cursor_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_.engine());
      cursor_ = 0;
    }
    const std::size_t end = std::min(order_.size(), cursor_ + batch_);
    std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end;
    return idx;
  }

 private:
  Rng rng_;
  std::size_t batch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

inline Matrix gather_rows(const Matrix& X, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct PretrainResult {
  NetworkParams net;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Reconstruction-only training with Adam mini-batch SGD.  Batches come from
/// the "batching" substream of seed, identical to the joint trainer's.
inline PretrainResult pretrain_with_history(NetworkParams net, const Matrix& X, int epochs, double lr,
                                            std::size_t batch, std::uint64_t seed) {
  if (epochs < 0) throw Error("pretrain: epochs must be non-negative");
  if (X.rows() == 0) throw Error("pretrain: empty training set");
  detail::check_input(net, X);
  PretrainResult r;
  if (epochs == 0 || net.bypass()) {
    r.net = std::move(net);
    return r;
  }
  BatchSchedule schedule(static_cast<std::size_t>(X.rows()), batch, Rng(seed, "batching"));
  AdamState adam(parameter_count(net));
  for (int e = 0; e < epochs; ++e) {
    double total = 0.0;
    const std::size_t steps = schedule.batches_per_epoch();
    for (std::size_t s = 0; s < steps; ++s) {
      const Matrix xb = gather_rows(X, schedule.next());
      const ForwardResult fw = forward(net, xb);
      total += reconstruction_loss(xb, fw.Xhat);
      const BackwardResult bw =
          backward(net, fw.tape, reconstruction_grad(xb, fw.Xhat), Matrix::Zero(xb.rows(), fw.Z.cols()));
      adam_step(net, bw.grads, adam, lr);
    }
    r.epoch_loss.push_back(total / static_cast<double>(steps));
  }
  r.net = std::move(net);
  return r;
}

inline NetworkParams pretrain(NetworkParams net, const Matrix& X, int epochs, double lr, std::size_t batch,
                              std::uint64_t seed) {
  return pretrain_with_history(std::move(net), X, epochs, lr, batch, seed).net;
}

}  // namespace cde
