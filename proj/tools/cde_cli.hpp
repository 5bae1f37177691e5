#pragma once
// Command-line front end: one executable, one subcommand per pipeline step.
// Data files are CSV, models use the CDE1 container.  Human-readable
// summaries go to stdout; data goes to files.

#include "cde/cde.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace cde::cli {

namespace detail {

using cde::detail::format_double;

struct TrainFlags {
  std::optional<double> mu, rho, lr, lr_net, lr_tensor, lr_lambda, eps_floor, val_fraction, coef_init, bound_margin;
  std::optional<int> batch, max_iter, patience, pretrain_epochs, K, F, D, eval_every;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arch;
  bool clip_magnitude = false;
  bool paper_init = false;

  void apply(TrainConfig& c) const {
    if (lr) c.lr_net = c.lr_tensor = c.lr_lambda = *lr;
    if (mu) c.mu = *mu;
    if (rho) c.rho = *rho;
    if (lr_net) c.lr_net = *lr_net;
    if (lr_tensor) c.lr_tensor = *lr_tensor;
    if (lr_lambda) c.lr_lambda = *lr_lambda;
    if (eps_floor) c.eps_floor = *eps_floor;
    if (val_fraction) c.val_fraction = *val_fraction;
    if (coef_init) c.coef_init = *coef_init;
    if (bound_margin) c.bound_margin = *bound_margin;
    if (batch) c.batch = *batch;
    if (max_iter) c.max_iter = *max_iter;
    if (patience) c.patience = *patience;
    if (pretrain_epochs) c.pretrain_epochs = *pretrain_epochs;
    if (K) c.K = *K;
    if (F) c.F = *F;
    if (D) c.D = *D;
    if (eval_every) c.eval_every = *eval_every;
    if (seed) c.seed = *seed;
    if (arch) c.arch = *arch;
    if (clip_magnitude) c.clip_magnitude = true;
    if (paper_init) c.paper_init = true;
  }
};

template <typename T>
CLI::Option* flag_with_default(CLI::App* app, const std::string& name, std::optional<T>& target,
                               const std::string& desc, const std::string& def) {
  return app->add_option(name, target, desc)->default_str(def);
}

inline std::string fmt(double v) { return format_double(v); }

inline ImputeInit parse_init(const std::string& s) {
  if (s == "train_mean") return ImputeInit::train_mean;
  if (s == "observed_copy") return ImputeInit::observed_copy;
  if (s == "zeros") return ImputeInit::zeros;
  throw Error("unknown imputation init '" + s + "' (expected train_mean, observed_copy or zeros)");
}

// Loads a CSV, drops an optional label column and normalizes with the
// model's ranges.
inline Dataset load_for_model(const ModelFile& mf, const std::string& path, std::optional<int> label_column,
                              bool allow_missing = false) {
  CsvOptions opt;
  opt.allow_missing = allow_missing;
  if (label_column) {
    opt.has_labels = true;
    opt.label_column = *label_column;
  }
  Dataset ds = load_csv(path, opt);
  if (ds.cols() != mf.column_min.size()) {
    throw Error(path + ": has " + std::to_string(ds.cols()) + " feature columns, model expects " +
                std::to_string(mf.column_min.size()));
  }
  return minmax_apply(ds, mf.column_min, mf.column_max);
}

inline std::vector<std::string> column_names(const Dataset& ds) {
  if (!ds.header.empty()) return ds.header;
  std::vector<std::string> h;
  for (Eigen::Index c = 0; c < ds.cols(); ++c) h.push_back("c" + std::to_string(c));
  return h;
}

}  // namespace detail

/// Runs one CLI invocation.  args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Compressed-domain density estimation: autoencoder + low-rank Fourier latent density", "cde"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  int threads = 1;
  app.add_option("--threads", threads, "Maximum worker threads")->check(CLI::PositiveNumber);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV");
  std::string gen_kind, gen_out;
  int gen_n = 3000;
  double gen_noise = 0.0, gen_cap = 60.0, gen_anomaly_fraction = 0.05;
  std::uint64_t gen_seed = 0;
  gen->add_option("--kind", gen_kind, "swiss_roll | s_curve | fishbowl | annulus | linear")->required();
  gen->add_option("--n", gen_n, "Number of rows")->check(CLI::PositiveNumber);
  gen->add_option("--noise", gen_noise, "Noise standard deviation");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--cap-angle", gen_cap, "Fishbowl: removed polar cap half-angle in degrees");
  gen->add_option("--anomaly-fraction", gen_anomaly_fraction, "Annulus: fraction of rows drawn from the centre blob");
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  // train
  auto* tr = app.add_subcommand("train", "Jointly train autoencoder and latent density");
  std::string tr_data, tr_out, tr_metrics, tr_config;
  std::optional<int> tr_label;
  TrainFlags tf;
  const TrainConfig defaults;
  tr->add_option("--data", tr_data, "Training CSV")->required();
  tr->add_option("--config", tr_config, "key=value config file (flags override it)");
  tr->add_option("--out", tr_out, "Output model file")->required();
  tr->add_option("--metrics", tr_metrics, "Metrics CSV (iteration,rec,nll,frob,val)");
  tr->add_option("--label-column", tr_label, "Drop this column (negative counts from the end)");
  flag_with_default(tr, "--K", tf.K, "Harmonic cutoff per dimension", std::to_string(defaults.K));
  flag_with_default(tr, "--F", tf.F, "CPD rank (mixture components)", std::to_string(defaults.F));
  flag_with_default(tr, "--D", tf.D, "Latent dimension", std::to_string(defaults.D));
  flag_with_default(tr, "--mu", tf.mu, "NLL weight", fmt(defaults.mu));
  flag_with_default(tr, "--rho", tf.rho, "Frobenius penalty weight", fmt(defaults.rho));
  flag_with_default(tr, "--lr", tf.lr, "Set all three learning rates", fmt(defaults.lr_net));
  flag_with_default(tr, "--lr-net", tf.lr_net, "Network learning rate (Adam)", fmt(defaults.lr_net));
  flag_with_default(tr, "--lr-tensor", tf.lr_tensor, "Half-spectrum learning rate (Adam)", fmt(defaults.lr_tensor));
  flag_with_default(tr, "--lr-lambda", tf.lr_lambda, "Mixture-weight step size (projected SGD)",
                    fmt(defaults.lr_lambda));
  flag_with_default(tr, "--batch", tf.batch, "Mini-batch size", std::to_string(defaults.batch));
  flag_with_default(tr, "--max-iter", tf.max_iter, "Maximum joint iterations", std::to_string(defaults.max_iter));
  flag_with_default(tr, "--patience", tf.patience, "Non-improving validations before stopping",
                    std::to_string(defaults.patience));
  flag_with_default(tr, "--pretrain-epochs", tf.pretrain_epochs, "Reconstruction-only epochs first",
                    std::to_string(defaults.pretrain_epochs));
  flag_with_default(tr, "--eps-floor", tf.eps_floor, "Density floor inside the log", fmt(defaults.eps_floor));
  flag_with_default(tr, "--seed", tf.seed, "Random seed", std::to_string(defaults.seed));
  flag_with_default(tr, "--val-fraction", tf.val_fraction, "Held-out validation fraction", fmt(defaults.val_fraction));
  flag_with_default(tr, "--eval-every", tf.eval_every, "Iterations between validations (0 = once per epoch)",
                    std::to_string(defaults.eval_every));
  flag_with_default(tr, "--arch", tf.arch,
                    "identity | toy3d | mnist | fmnist | thyroid | kddcup | kddcup_rev | arrhythmia | mlp:<w,...>:<act>",
                    defaults.arch);
  flag_with_default(tr, "--coef-init", tf.coef_init, "Initial coefficient magnitude bound (divided by k)",
                    fmt(defaults.coef_init));
  flag_with_default(tr, "--bound-margin", tf.bound_margin, "Bottleneck margin delta", fmt(defaults.bound_margin));
  tr->add_flag("--clip-magnitude", tf.clip_magnitude, "Cap coefficient magnitudes at 1 after each step");
  tr->add_flag("--paper-init", tf.paper_init, "Initialize weights uniformly on [-1, 1]");

  // sample
  auto* sm = app.add_subcommand("sample", "Draw synthetic samples from a trained model");
  std::string sm_model, sm_out, sm_latent;
  int sm_n = 1000;
  std::uint64_t sm_seed = 0;
  bool sm_normalized = false;
  sm->add_option("--model", sm_model, "Model file")->required();
  sm->add_option("--n", sm_n, "Number of samples")->check(CLI::PositiveNumber);
  sm->add_option("--seed", sm_seed, "Random seed");
  sm->add_option("--out", sm_out, "Output CSV (data space)")->required();
  sm->add_option("--latent-out", sm_latent, "Also write the latent samples here");
  sm->add_flag("--normalized", sm_normalized, "Write data-space samples in normalized [0,1] units");

  // score
  auto* sc = app.add_subcommand("score", "Per-row latent log-likelihood");
  std::string sc_model, sc_data, sc_out;
  std::optional<int> sc_label;
  sc->add_option("--model", sc_model, "Model file")->required();
  sc->add_option("--data", sc_data, "Input CSV")->required();
  sc->add_option("--out", sc_out, "Output CSV (row,score)")->required();
  sc->add_option("--label-column", sc_label, "Ignore this column");

  // impute
  auto* im = app.add_subcommand("impute", "Fill empty CSV cells by likelihood ascent");
  std::string im_model, im_data, im_out, im_init = "train_mean";
  int im_steps = 500;
  double im_step = 1e-2;
  im->add_option("--model", im_model, "Model file")->required();
  im->add_option("--data", im_data, "Input CSV with empty cells for missing values")->required();
  im->add_option("--out", im_out, "Output CSV (values plus a 'filled' bitmask column)")->required();
  im->add_option("--steps", im_steps, "Ascent steps");
  im->add_option("--step-size", im_step, "Ascent step size");
  im->add_option("--init", im_init, "train_mean | observed_copy | zeros");

  // eval-anomaly
  auto* ea = app.add_subcommand("eval-anomaly", "Flag the lowest-likelihood rows and score against labels");
  std::string ea_model, ea_data, ea_out;
  int ea_label = -1;
  double ea_ratio = 0.0;
  ea->add_option("--model", ea_model, "Model file")->required();
  ea->add_option("--data", ea_data, "Labelled test CSV")->required();
  ea->add_option("--label-column", ea_label, "Label column (1 = anomaly; negative counts from the end)");
  ea->add_option("--ratio", ea_ratio, "Known anomaly ratio in (0, 1)")->required();
  ea->add_option("--out", ea_out, "Output CSV (row,score,flag,label) with a metrics trailer");

  // eval-regression
  auto* er = app.add_subcommand("eval-regression", "Impute one column per row and report MAE");
  std::string er_model, er_data, er_out, er_init = "train_mean";
  int er_target = -1, er_steps = 500;
  double er_step = 1e-2;
  std::optional<int> er_label;
  er->add_option("--model", er_model, "Model file")->required();
  er->add_option("--data", er_data, "Test CSV")->required();
  er->add_option("--target", er_target, "Response column (negative counts from the end)");
  er->add_option("--steps", er_steps, "Ascent steps");
  er->add_option("--step-size", er_step, "Ascent step size");
  er->add_option("--init", er_init, "train_mean | observed_copy | zeros");
  er->add_option("--label-column", er_label, "Ignore this column");
  er->add_option("--out", er_out, "Output CSV (row,truth,prediction) in normalized units");

  // inspect
  auto* in = app.add_subcommand("inspect", "Print mixture weights and coefficient decay");
  std::string in_model;
  in->add_option("--model", in_model, "Model file")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    set_thread_limit(threads);
    if (*gen) {
      Dataset ds;
      std::vector<std::string> header{"x", "y", "z"};
      if (gen_kind == "annulus") {
        if (!(gen_anomaly_fraction >= 0.0 && gen_anomaly_fraction < 1.0)) {
          throw Error("--anomaly-fraction must be in [0, 1)");
        }
        const int anomalies = static_cast<int>(std::llround(gen_anomaly_fraction * gen_n));
        ds = gen_annulus_blob(gen_n - anomalies, anomalies, gen_seed);
        ds = split(ds, {1.0}, gen_seed).front();  // shuffle rows
        Matrix m(ds.rows(), 3);
        m.leftCols(2) = ds.data;
        for (Eigen::Index r = 0; r < ds.rows(); ++r) m(r, 2) = (*ds.labels)[static_cast<std::size_t>(r)];
        ds.data = m;
        header = {"x", "y", "label"};
      } else if (gen_kind == "linear") {
        ds = gen_linear(gen_n, gen_noise, gen_seed);
        header = {"x", "y"};
      } else {
        ds = gen_toy(gen_kind, gen_n, gen_noise, gen_seed, gen_cap);
      }
      write_csv(gen_out, ds.data, header);
      out << "wrote " << ds.rows() << " rows to " << gen_out << '\n';
    } else if (*tr) {
      TrainConfig cfg;
      if (!tr_config.empty()) cfg = parse_config_text(read_file(tr_config), cfg);
      tf.apply(cfg);
      validate_config(cfg);
      CsvOptions opt;
      if (tr_label) {
        opt.has_labels = true;
        opt.label_column = *tr_label;
      }
      const Dataset raw = load_csv(tr_data, opt);
      const Dataset norm = minmax_fit_apply(raw);
      const auto parts = split(norm, {1.0 - cfg.val_fraction, cfg.val_fraction}, cfg.seed);
      TrainResult res = train(parts[0].data, parts[1].data, cfg);
      ModelFile mf;
      mf.net = res.net;
      mf.density = res.density;
      mf.column_min = norm.column_min;
      mf.column_max = norm.column_max;
      mf.column_mean = norm.data.colwise().mean().transpose();
      mf.config = cfg;
      save_model(tr_out, mf);
      if (!tr_metrics.empty()) write_file(tr_metrics, metrics_csv(res.report));
      out << "iterations=" << res.report.iterations << " stop=" << to_string(res.report.stop)
          << " best_iteration=" << res.report.best_iteration << " best_val=" << fmt(res.report.best_val)
          << " wall_seconds=" << std::fixed << std::setprecision(2) << res.report.wall_seconds << '\n';
      out.unsetf(std::ios::floatfield);
    } else if (*sm) {
      const ModelFile mf = load_model(sm_model);
      Matrix Z;
      Matrix X = sample_data(mf.net, mf.density, sm_n, sm_seed, &Z);
      if (!sm_normalized) X = denormalize(X, mf.column_min, mf.column_max);
      write_csv(sm_out, X);
      if (!sm_latent.empty()) write_csv(sm_latent, Z);
      out << "wrote " << X.rows() << " samples to " << sm_out << '\n';
    } else if (*sc) {
      const ModelFile mf = load_model(sc_model);
      const Dataset ds = load_for_model(mf, sc_data, sc_label);
      const Vector s = score_rows(mf.net, mf.density, ds.data, mf.config.eps_floor);
      std::ostringstream o;
      o << "row,score\n";
      for (Eigen::Index r = 0; r < s.size(); ++r) o << r << ',' << fmt(s(r)) << '\n';
      write_file(sc_out, o.str());
      out << "scored " << s.size() << " rows, mean log-likelihood " << fmt(s.mean()) << '\n';
    } else if (*im) {
      const ModelFile mf = load_model(im_model);
      const Dataset ds = load_for_model(mf, im_data, std::nullopt, true);
      std::vector<std::vector<bool>> masks;
      for (Eigen::Index r = 0; r < ds.rows(); ++r) {
        std::vector<bool> m;
        for (Eigen::Index c = 0; c < ds.cols(); ++c) m.push_back(!std::isnan(ds.data(r, c)));
        masks.push_back(std::move(m));
      }
      ImputeConfig icfg;
      icfg.steps = im_steps;
      icfg.step_size = im_step;
      icfg.init = parse_init(im_init);
      icfg.train_mean.assign(mf.column_mean.data(), mf.column_mean.data() + mf.column_mean.size());
      icfg.eps_floor = mf.config.eps_floor;
      const auto filled = impute_rows(mf.net, mf.density, ds.data, masks, icfg);
      Matrix Xn(ds.rows(), ds.cols());
      for (Eigen::Index r = 0; r < ds.rows(); ++r) {
        for (Eigen::Index c = 0; c < ds.cols(); ++c) Xn(r, c) = filled[static_cast<std::size_t>(r)].x[static_cast<std::size_t>(c)];
      }
      Matrix X = denormalize(Xn, mf.column_min, mf.column_max);
      // Observed cells are copied from the input rather than round-tripped
      // through normalization.
      const Dataset raw = load_csv(im_data, CsvOptions{false, -1, true});
      std::ostringstream o;
      auto names = column_names(raw);
      for (const auto& n : names) o << n << ',';
      o << "filled\n";
      std::size_t total_filled = 0;
      for (Eigen::Index r = 0; r < X.rows(); ++r) {
        std::string bits;
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
          const bool missing = !masks[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
          o << fmt(missing ? X(r, c) : raw.data(r, c)) << ',';
          bits += missing ? '1' : '0';
          total_filled += missing;
        }
        o << bits << '\n';
      }
      write_file(im_out, o.str());
      out << "filled " << total_filled << " cells in " << X.rows() << " rows\n";
    } else if (*ea) {
      const ModelFile mf = load_model(ea_model);
      const Dataset ds = load_for_model(mf, ea_data, ea_label);
      const AnomalyResult r = anomaly_detect(mf.net, mf.density, ds.data, *ds.labels, ea_ratio, mf.config.eps_floor);
      std::ostringstream metrics;
      metrics << "precision=" << fmt(r.metrics.precision) << ",recall=" << fmt(r.metrics.recall)
              << ",f1=" << fmt(r.metrics.f1) << ",threshold=" << fmt(r.threshold);
      if (!ea_out.empty()) {
        std::ostringstream o;
        o << "row,score,flag,label\n";
        for (Eigen::Index i = 0; i < r.scores.size(); ++i) {
          o << i << ',' << fmt(r.scores(i)) << ',' << r.flags[static_cast<std::size_t>(i)] << ','
            << (*ds.labels)[static_cast<std::size_t>(i)] << '\n';
        }
        o << "# " << metrics.str() << '\n';
        write_file(ea_out, o.str());
      }
      out << metrics.str() << '\n';
    } else if (*er) {
      const ModelFile mf = load_model(er_model);
      const Dataset ds = load_for_model(mf, er_data, er_label);
      const int target = er_target < 0 ? static_cast<int>(ds.cols()) + er_target : er_target;
      ImputeConfig icfg;
      icfg.steps = er_steps;
      icfg.step_size = er_step;
      icfg.init = parse_init(er_init);
      icfg.train_mean.assign(mf.column_mean.data(), mf.column_mean.data() + mf.column_mean.size());
      icfg.eps_floor = mf.config.eps_floor;
      const RegressionResult r = regression_mae(mf.net, mf.density, ds.data, target, icfg);
      if (!er_out.empty()) {
        std::ostringstream o;
        o << "row,truth,prediction\n";
        for (Eigen::Index i = 0; i < ds.rows(); ++i) {
          o << i << ',' << fmt(ds.data(i, target)) << ',' << fmt(r.predictions(i)) << '\n';
        }
        write_file(er_out, o.str());
      }
      out << "mae=" << fmt(r.mae) << " mean_predictor_mae=" << fmt(r.mean_predictor_mae) << '\n';
    } else if (*in) {
      const ModelFile mf = load_model(in_model);
      const DensityParams& p = mf.density;
      out << "D=" << p.D << " K=" << p.K << " F=" << p.F << " arch=" << mf.config.arch
          << " layers=" << mf.net.layer_count() << '\n';
      out << "mixture weights (sorted):\n";
      std::vector<std::pair<double, int>> w;
      for (int f = 0; f < p.F; ++f) w.emplace_back(p.lambda(f), f);
      std::stable_sort(w.begin(), w.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      const double top = w.front().first > 0.0 ? w.front().first : 1.0;
      for (const auto& [value, f] : w) {
        out << "  h=" << std::setw(3) << f << "  " << std::fixed << std::setprecision(4) << value << "  "
            << std::string(static_cast<std::size_t>(std::lround(40.0 * value / top)), '#') << '\n';
      }
      const auto decay = decay_diagnostic(p);
      out << "mean |coefficient| by harmonic:\n";
      for (std::size_t d = 0; d < decay.size(); ++d) {
        out << "  d=" << d << ':';
        for (double m : decay[d]) out << ' ' << std::setprecision(4) << m;
        out << '\n';
      }
      out.unsetf(std::ios::floatfield);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace cde::cli
