#include "cde/trainer.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace cde;

namespace {

Matrix unit_data(int M, int N, std::uint64_t seed) {
  Rng rng(seed, "data");
  Matrix X(M, N);
  for (int m = 0; m < M; ++m) {
    const double t = rng.uniform();
    for (int n = 0; n < N; ++n) X(m, n) = std::clamp(0.2 + 0.6 * t * (n + 1) / N + rng.normal(0.0, 0.03), 0.0, 1.0);
  }
  return X;
}

TrainConfig small_config() {
  TrainConfig c;
  c.arch = "mlp:5:tanh";
  c.D = 2;
  c.K = 2;
  c.F = 3;
  c.batch = 16;
  c.max_iter = 40;
  c.pretrain_epochs = 2;
  c.patience = 100;
  c.lr_net = 1e-3;
  c.lr_tensor = 1e-3;
  c.lr_lambda = 1e-3;
  c.seed = 3;
  return c;
}

NetworkParams small_net(std::uint64_t seed) {
  NetworkParams net = init_params(architecture_from_name("mlp:4:tanh", 3, 2), seed);
  Rng rng(seed, "bias");
  for (std::size_t i = 0; i < net.layer_count(); ++i)
    for (Eigen::Index j = 0; j < net.layer(i).bias.size(); ++j) net.layer(i).bias(j) = rng.uniform(-0.3, 0.3);
  return net;
}

void expect_same_report(const TrainReport& a, const TrainReport& b) {
  EXPECT_EQ(a.rec, b.rec);
  EXPECT_EQ(a.nll, b.nll);
  EXPECT_EQ(a.frob, b.frob);
  EXPECT_EQ(a.val_iteration, b.val_iteration);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.stop, b.stop);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.best_iteration, b.best_iteration);
  EXPECT_EQ(a.best_val, b.best_val);
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  const TrainConfig c;
  EXPECT_NO_THROW(validate_config(c));
  EXPECT_EQ(c.batch, 500);
  EXPECT_DOUBLE_EQ(c.mu, 0.1);
  EXPECT_DOUBLE_EQ(c.rho, 0.1);
  EXPECT_DOUBLE_EQ(c.lr_net, 1e-4);
}

TEST(Config, InvalidValuesRejected) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(validate_config(c), Error);
  };
  bad([](TrainConfig& c) { c.mu = -1; });
  bad([](TrainConfig& c) { c.rho = -0.1; });
  bad([](TrainConfig& c) { c.lr_tensor = 0; });
  bad([](TrainConfig& c) { c.batch = 0; });
  bad([](TrainConfig& c) { c.patience = 0; });
  bad([](TrainConfig& c) { c.val_fraction = 1.0; });
  bad([](TrainConfig& c) { c.eps_floor = 0; });
  bad([](TrainConfig& c) { c.F = 0; });
  bad([](TrainConfig& c) { c.bound_margin = 0.5; });
}

TEST(Config, TextRoundTrip) {
  TrainConfig c = small_config();
  c.mu = 0.123456789012345;
  c.clip_magnitude = true;
  c.seed = 18446744073709551615ull;
  EXPECT_EQ(parse_config_text(to_config_text(c)), c);
}

TEST(Config, ParsesCommentsAndOverlaysBase) {
  TrainConfig base;
  base.K = 9;
  const TrainConfig c = parse_config_text("# comment\n\n  mu = 0.5  # trailing\nF=4\n", base);
  EXPECT_DOUBLE_EQ(c.mu, 0.5);
  EXPECT_EQ(c.F, 4);
  EXPECT_EQ(c.K, 9);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config_text("mu=0.1\nbogus=3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
  EXPECT_THROW(parse_config_text("K=abc\n"), Error);
  EXPECT_THROW(parse_config_text("just words\n"), Error);
  EXPECT_THROW(parse_config_text("clip_magnitude=maybe\n"), Error);
}

TEST(JointLoss, DecouplesWithoutDensityTerms) {
  const NetworkParams net = small_net(1);
  Rng rng(1, "d");
  const DensityParams dens = random_density_params(2, 3, 2, rng);
  const Matrix X = unit_data(8, 3, 2);
  TrainConfig cfg;
  cfg.mu = 0.0;
  cfg.rho = 0.0;
  const JointGradients g = joint_loss_and_grads(net, dens, X, cfg);
  EXPECT_EQ(g.total, reconstruction_loss(X, forward(net, X).Xhat));
  for (const auto& c : g.grad_coef) EXPECT_EQ(std::abs(c), 0.0);
  EXPECT_TRUE((g.grad_lambda.array() == 0.0).all());
}

TEST(JointLoss, UniformDensityContributesNothing) {
  const NetworkParams net = small_net(2);
  const DensityParams dens(2, 0, 2);
  const Matrix X = unit_data(8, 3, 3);
  TrainConfig cfg;
  cfg.mu = 0.7;
  const JointGradients g = joint_loss_and_grads(net, dens, X, cfg);
  EXPECT_EQ(g.nll, 0.0);
  const ForwardResult fw = forward(net, X);
  const BackwardResult ref = backward(net, fw.tape, reconstruction_grad(X, fw.Xhat), Matrix::Zero(8, 2));
  EXPECT_EQ(flatten(g.net), flatten(ref.grads));
  EXPECT_EQ(g.total, g.rec);
}

TEST(JointLoss, EmptyBatchRejected) {
  EXPECT_THROW(joint_loss_and_grads(small_net(1), DensityParams(2, 1, 1), Matrix(0, 3), TrainConfig{}), Error);
}

TEST(JointLoss, MatchesFiniteDifferencesOverAllGroups) {
  for (int trial = 0; trial < 20; ++trial) {
    const NetworkParams net = small_net(50 + static_cast<std::uint64_t>(trial));
    Rng rng(static_cast<std::uint64_t>(trial), "joint");
    DensityParams dens = random_density_params(2, 2, 2, rng, 0.3);
    dens.lambda << 0.3, 0.7;
    const Matrix X = unit_data(6, 3, 100 + static_cast<std::uint64_t>(trial));
    TrainConfig cfg;
    cfg.mu = 0.4;
    cfg.rho = 0.2;
    const JointGradients g = joint_loss_and_grads(net, dens, X, cfg);

    // Parameter vector: network, coefficient reals, lambda.
    std::vector<double> theta = flatten(net);
    const std::size_t n_net = theta.size();
    for (double v : dens.coef_reals()) theta.push_back(v);
    const std::size_t n_coef = theta.size() - n_net;
    for (int f = 0; f < dens.F; ++f) theta.push_back(dens.lambda(f));

    std::vector<double> analytic = flatten(g.net);
    for (const auto& c : g.grad_coef) {
      analytic.push_back(c.real());
      analytic.push_back(c.imag());
    }
    for (int f = 0; f < dens.F; ++f) analytic.push_back(g.grad_lambda(f));
    ASSERT_EQ(analytic.size(), theta.size());

    auto total = [&](const std::vector<double>& t) {
      NetworkParams q = net;
      unflatten(std::span<const double>(t.data(), n_net), q);
      DensityParams p = dens;
      std::copy(t.begin() + static_cast<std::ptrdiff_t>(n_net),
                t.begin() + static_cast<std::ptrdiff_t>(n_net + n_coef), p.coef_reals().begin());
      for (int f = 0; f < p.F; ++f) p.lambda(f) = t[n_net + n_coef + static_cast<std::size_t>(f)];
      return joint_loss_and_grads(q, p, X, cfg).total;
    };
    EXPECT_NEAR(total(theta), g.total, 1e-14);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double num = oracle::central_difference(total, theta, i);
      ASSERT_LT(oracle::rel_error(analytic[i], num), 1e-4) << "trial " << trial << " coordinate " << i;
    }
  }
}

TEST(Validate, Examples) {
  const Matrix X = unit_data(10, 2, 4);
  TrainConfig cfg;
  cfg.mu = 0.0;
  EXPECT_EQ(validate(NetworkParams{}, DensityParams(2, 3, 2), X, cfg), 0.0);

  const NetworkParams net = init_params(architecture_from_name("mlp:4:tanh", 2, 2), 1);
  cfg.mu = 0.5;
  EXPECT_EQ(validate(net, DensityParams(2, 0, 2), X, cfg), reconstruction_loss(X, forward(net, X).Xhat));

  Rng rng(5, "d");
  const DensityParams dens = random_density_params(2, 3, 2, rng, 0.3);
  const double ref = reconstruction_loss(X, decode(net, encode(net, X))) + 0.5 * nll_batch(dens, encode(net, X));
  EXPECT_NEAR(validate(net, dens, X, cfg), ref, 1e-14);
  EXPECT_THROW(validate(net, dens, Matrix(0, 2), cfg), Error);
}

TEST(Train, ZeroIterationsReturnsInitialState) {
  TrainConfig cfg = small_config();
  cfg.max_iter = 0;
  const Matrix X = unit_data(64, 3, 5), V = unit_data(16, 3, 6);
  const TrainResult r = train(X, V, cfg);
  EXPECT_EQ(r.report.stop, StopReason::max_iter);
  EXPECT_EQ(r.report.iterations, 0);

  const Architecture arch = architecture_from_name(cfg.arch, 3, cfg.D);
  const NetworkParams init = init_params(arch, Rng(cfg.seed, "network").engine()());
  const NetworkParams pre = pretrain(init, X, cfg.pretrain_epochs, cfg.lr_net, static_cast<std::size_t>(cfg.batch),
                                     Rng(cfg.seed, "pretrain").engine()());
  EXPECT_EQ(r.net, pre);
  Rng trng(cfg.seed, "tensor-init");
  EXPECT_EQ(r.density, random_density_params(cfg.D, cfg.K, cfg.F, trng, cfg.coef_init));
}

TEST(Train, DeterministicReport) {
  const TrainConfig cfg = small_config();
  const Matrix X = unit_data(64, 3, 7), V = unit_data(16, 3, 8);
  const TrainResult a = train(X, V, cfg), b = train(X, V, cfg);
  expect_same_report(a.report, b.report);
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.density, b.density);
}

TEST(Train, ThreadCountDoesNotChangeReport) {
  const TrainConfig cfg = small_config();
  const Matrix X = unit_data(600, 3, 9), V = unit_data(50, 3, 10);
  set_thread_limit(1);
  const TrainResult a = train(X, V, cfg);
  set_thread_limit(3);
  const TrainResult b = train(X, V, cfg);
  set_thread_limit(1);
  expect_same_report(a.report, b.report);
}

TEST(Train, InvariantsHoldAndBestSnapshotReturned) {
  TrainConfig cfg = small_config();
  cfg.max_iter = 120;
  cfg.eval_every = 5;
  cfg.lr_lambda = 0.05;
  const Matrix X = unit_data(80, 3, 11), V = unit_data(20, 3, 12);
  const TrainResult r = train(X, V, cfg);
  double sum = 0.0;
  for (int f = 0; f < r.density.F; ++f) {
    EXPECT_GE(r.density.lambda(f), 0.0);
    sum += r.density.lambda(f);
  }
  EXPECT_EQ(sum, 1.0);
  EXPECT_EQ(r.density.coef.size(), static_cast<std::size_t>(cfg.D * cfg.K * cfg.F));
  const double best = *std::min_element(r.report.val.begin(), r.report.val.end());
  EXPECT_EQ(r.report.best_val, best);
  EXPECT_EQ(validate(r.net, r.density, V, cfg), best);
  EXPECT_EQ(r.report.rec.size(), static_cast<std::size_t>(r.report.iterations));
  EXPECT_EQ(r.report.val_iteration.front(), 0);
}

TEST(Train, PatienceStops) {
  TrainConfig cfg = small_config();
  cfg.max_iter = 10000;
  cfg.patience = 2;
  cfg.eval_every = 1;
  cfg.lr_net = 0.5;  // noisy enough to stall quickly
  cfg.lr_tensor = 0.5;
  const Matrix X = unit_data(64, 3, 13), V = unit_data(16, 3, 14);
  const TrainResult r = train(X, V, cfg);
  EXPECT_EQ(r.report.stop, StopReason::patience);
  EXPECT_LT(r.report.iterations, cfg.max_iter);
}

TEST(Train, NoDensityWeightMatchesPretraining) {
  TrainConfig cfg = small_config();
  cfg.mu = 0.0;
  cfg.pretrain_epochs = 0;
  cfg.batch = 64;  // full batch, one step per epoch
  cfg.max_iter = 30;
  cfg.lr_net = 1e-3;
  const Matrix X = unit_data(64, 3, 15);
  const NetworkParams init = small_net(4);
  const TrainResult r = train(init, X, X, cfg);
  ASSERT_EQ(r.report.best_iteration, r.report.iterations) << "validation must improve monotonically here";
  const NetworkParams ref = pretrain(init, X, 30, cfg.lr_net, 64, cfg.seed);
  EXPECT_EQ(r.net, ref);
}

TEST(Train, MiniBatchNoDensityWeightMatchesPretraining) {
  TrainConfig cfg = small_config();
  cfg.mu = 0.0;
  cfg.pretrain_epochs = 0;
  cfg.batch = 16;
  cfg.max_iter = 4 * 10;  // 10 epochs of 4 batches
  cfg.eval_every = cfg.max_iter;
  cfg.lr_net = 1e-3;
  const Matrix X = unit_data(64, 3, 16);
  const NetworkParams init = small_net(5);
  const TrainResult r = train(init, X, X, cfg);
  ASSERT_EQ(r.report.best_iteration, r.report.iterations);
  EXPECT_EQ(r.net, pretrain(init, X, 10, cfg.lr_net, 16, cfg.seed));
}

TEST(Train, DivergenceIsReported) {
  TrainConfig cfg = small_config();
  cfg.arch = "mlp:5:relu";
  cfg.lr_net = 1e200;
  cfg.pretrain_epochs = 0;
  const Matrix X = unit_data(64, 3, 17), V = unit_data(16, 3, 18);
  try {
    train(X, V, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_GE(e.iteration(), 1);
    EXPECT_FALSE(e.component().empty());
  }
}

TEST(Train, InputErrors) {
  const TrainConfig cfg = small_config();
  EXPECT_THROW(train(Matrix(0, 3), unit_data(4, 3, 1), cfg), Error);
  EXPECT_THROW(train(unit_data(4, 3, 1), Matrix(0, 3), cfg), Error);
  EXPECT_THROW(train(unit_data(4, 3, 1), unit_data(4, 2, 1), cfg), Error);
  TrainConfig wrong_d = cfg;
  wrong_d.D = 3;
  EXPECT_THROW(train(small_net(1), unit_data(4, 3, 1), unit_data(4, 3, 1), wrong_d), Error);
}

TEST(Metrics, CsvLayout) {
  TrainConfig cfg = small_config();
  cfg.max_iter = 6;
  cfg.eval_every = 3;
  const Matrix X = unit_data(32, 3, 19), V = unit_data(8, 3, 20);
  const TrainResult r = train(X, V, cfg);
  const std::string csv = metrics_csv(r.report);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iteration,rec,nll,frob,val");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("0,,,,", 0), 0u);
  int rows = 0, with_val = 0;
  while (std::getline(in, line)) {
    ++rows;
    with_val += line.back() != ',';
  }
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(with_val, 2);
}
