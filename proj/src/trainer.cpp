#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "rng.hpp"

namespace dnnh {

void TrainConfig::Validate() const {
  Require(!depth_grid.empty() && !width_grid.empty() && !lr_grid.empty(), ErrorKind::kConfig,
          "hyperparameter grids must be nonempty");
  for (int d : depth_grid) Require(d >= 0, ErrorKind::kConfig, "depth must be >= 0");
  for (int w : width_grid) Require(w > 0, ErrorKind::kConfig, "width must be positive");
  for (double lr : lr_grid) Require(lr > 0.0, ErrorKind::kConfig, "learning rate must be positive");
  Require(max_epochs > 0 && patience > 0, ErrorKind::kConfig,
          "max_epochs and patience must be positive");
  Require(patience <= max_epochs, ErrorKind::kConfig, "patience must not exceed max_epochs");
  Require(split.train > 0.0 && split.validation > 0.0 && split.test >= 0.0, ErrorKind::kConfig,
          "split fractions must be positive");
  Require(split.test > 0.0 || allow_empty_test, ErrorKind::kConfig,
          "zero test fraction requires allow_empty_test");
  Require(std::abs(split.train + split.validation + split.test - 1.0) < 1e-9, ErrorKind::kConfig,
          "split fractions must sum to 1");
  if (output_bound) Require(*output_bound > 1.0, ErrorKind::kConfig, "output bound must exceed 1");
  if (parameter_clamp)
    Require(*parameter_clamp > 0.0, ErrorKind::kConfig, "parameter clamp must be positive");
}

nlohmann::json TrainConfig::ToJson() const {
  nlohmann::json j = {{"depth_grid", depth_grid},
                      {"width_grid", width_grid},
                      {"lr_grid", lr_grid},
                      {"max_epochs", max_epochs},
                      {"patience", patience},
                      {"split", {split.train, split.validation, split.test}},
                      {"allow_empty_test", allow_empty_test},
                      {"seed", seed},
                      {"quadrature", quadrature.ToJson()},
                      {"minibatch", minibatch},
                      {"init_output_bias", init_output_bias}};
  j["output_bound"] = output_bound ? nlohmann::json(*output_bound) : nlohmann::json();
  j["parameter_clamp"] = parameter_clamp ? nlohmann::json(*parameter_clamp) : nlohmann::json();
  return j;
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.depth_grid = j.value("depth_grid", c.depth_grid);
    c.width_grid = j.value("width_grid", c.width_grid);
    c.lr_grid = j.value("lr_grid", c.lr_grid);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    if (j.contains("split")) {
      auto s = j["split"].get<std::vector<double>>();
      Require(s.size() == 3, ErrorKind::kConfig, "split needs three fractions");
      c.split = {s[0], s[1], s[2]};
    }
    c.allow_empty_test = j.value("allow_empty_test", c.allow_empty_test);
    c.seed = j.value("seed", c.seed);
    if (j.contains("quadrature")) c.quadrature = QuadratureSettings::FromJson(j["quadrature"]);
    c.minibatch = j.value("minibatch", c.minibatch);
    c.init_output_bias = j.value("init_output_bias", c.init_output_bias);
    if (j.contains("output_bound") && !j["output_bound"].is_null())
      c.output_bound = j["output_bound"].get<double>();
    if (j.contains("parameter_clamp") && !j["parameter_clamp"].is_null())
      c.parameter_clamp = j["parameter_clamp"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("malformed training config: ") + e.what());
  }
  c.Validate();
  return c;
}

nlohmann::json HyperParams::ToJson() const {
  return {{"depth", depth}, {"width", width}, {"learning_rate", learning_rate}};
}

DataSplit SplitDataset(std::size_t n, const SplitFractions& f, std::uint64_t seed,
                       bool allow_empty_test) {
  Require(f.train > 0 && f.validation >= 0 && f.test >= 0, ErrorKind::kConfig,
          "split fractions must be nonnegative with a positive training part");
  Require(std::abs(f.train + f.validation + f.test - 1.0) < 1e-9, ErrorKind::kConfig,
          "split fractions must sum to 1");
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * n));
  const auto n_val = static_cast<std::size_t>(std::llround(f.validation * n));
  Require(n_train + n_val <= n, ErrorKind::kConfig, "split fractions overflow the sample");
  const std::size_t n_test = n - n_train - n_val;
  Require(n_train > 0, ErrorKind::kConfig, "training split is empty");
  Require(n_val > 0 || f.validation == 0.0, ErrorKind::kConfig, "validation split is empty");
  Require(n_test > 0 || (f.test == 0.0 && allow_empty_test), ErrorKind::kConfig,
          "test split is empty");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.Below(i)]);

  DataSplit s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.validation.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

nlohmann::json FitResult::ToJson() const {
  nlohmann::json grid_json = nlohmann::json::array();
  for (const auto& g : grid)
    grid_json.push_back({{"hyperparameters", g.hp.ToJson()},
                         {"best_validation_loglik", g.best_validation_loglik},
                         {"best_epoch", g.best_epoch},
                         {"epochs_run", g.epochs_run},
                         {"stop_reason", g.stop_reason}});
  return {{"chosen", chosen.ToJson()},
          {"epochs_run", epochs_run},
          {"best_epoch", best_epoch},
          {"stop_reason", stop_reason},
          {"initial_train_loglik", initial_train_loglik},
          {"initial_validation_loglik", initial_validation_loglik},
          {"best_validation_loglik", best_validation_loglik},
          {"train_loglik", train_loglik},
          {"clipped_exponentials", clipped_exponentials},
          {"train_curve", train_curve},
          {"validation_curve", validation_curve},
          {"grid", grid_json},
          {"split_sizes", {split.train.size(), split.validation.size(), split.test.size()}}};
}

namespace {

// Columns of the selected subjects, with coefficients rescaled from 1/m to
// 1/|batch| so the minibatch loss is an empirical mean.
LikelihoodPoints Gather(const LikelihoodPoints& all, std::span<const std::size_t> subjects) {
  const std::size_t m = all.subject_offsets.size() - 1;
  const double rescale = static_cast<double>(m) / static_cast<double>(subjects.size());
  std::size_t cols = 0;
  for (std::size_t s : subjects) cols += all.subject_offsets[s + 1] - all.subject_offsets[s];
  LikelihoodPoints out;
  out.clip = all.clip;
  out.inputs.resize(all.inputs.rows(), static_cast<Eigen::Index>(cols));
  out.linear.resize(cols);
  out.expo.resize(cols);
  Eigen::Index c = 0;
  for (std::size_t s : subjects) {
    out.subject_offsets.push_back(c);
    const auto a = static_cast<Eigen::Index>(all.subject_offsets[s]);
    const auto len = static_cast<Eigen::Index>(all.subject_offsets[s + 1]) - a;
    out.inputs.middleCols(c, len) = all.inputs.middleCols(a, len);
    out.linear.segment(c, len) = all.linear.segment(a, len) * rescale;
    out.expo.segment(c, len) = all.expo.segment(a, len) * rescale;
    c += len;
  }
  out.subject_offsets.push_back(c);
  return out;
}

struct GridRun {
  GridPointSummary summary;
  MlpNetwork best_net;
  std::vector<double> train_curve;
  std::vector<double> validation_curve;
  double initial_train = 0.0;
  double initial_val = 0.0;
  double best_train = 0.0;
  std::uint64_t clipped = 0;
  bool diverged = false;
};

GridRun TrainOne(const FittedHazard& shell, const LikelihoodPoints& train_pts,
                 const LikelihoodPoints& val_pts, const HyperParams& hp, const TrainConfig& cfg,
                 double init_bias, std::uint64_t seed) {
  GridRun run;
  run.summary.hp = hp;
  MlpNetwork net =
      MlpNetwork::RandomInit(MlpNetwork::UniformWidths(shell.net().input_dim(), hp.depth, hp.width),
                             DeriveSeed(seed, {0}));
  net.output_bound = cfg.output_bound;
  if (cfg.init_output_bias) net.biases.back()(0) = init_bias;

  AdamState adam = AdamState::For(net, hp.learning_rate);
  NetworkGrad grad = NetworkGrad::ZerosLike(net);
  const std::size_t m = train_pts.subject_offsets.size() - 1;
  const bool minibatch = cfg.minibatch > 0 && cfg.minibatch < m;
  Rng shuffle_rng(DeriveSeed(seed, {1}));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);

  auto val_ll = [&](const MlpNetwork& n) {
    LossEval ev = EvaluateLoss(n, val_pts, nullptr);
    run.clipped += ev.clipped;
    return -ev.loss;
  };

  // Full-batch loss at the current parameters; reused as the train-curve
  // entry of the previous epoch.
  grad.SetZero();
  LossEval cur = EvaluateLoss(net, train_pts, minibatch ? nullptr : &grad);
  run.clipped += cur.clipped;
  run.initial_train = -cur.loss;
  run.initial_val = val_ll(net);
  double best = run.initial_val;
  run.best_net = net;
  run.best_train = run.initial_train;
  int since_improve = 0;
  run.summary.stop_reason = "max_epochs";

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    try {
      if (!std::isfinite(cur.loss))
        Fail(ErrorKind::kOptimization, "non-finite training loss");
      if (minibatch) {
        for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.Below(i)]);
        for (std::size_t start = 0; start < m; start += cfg.minibatch) {
          const std::size_t len = std::min(cfg.minibatch, m - start);
          LikelihoodPoints batch =
              Gather(train_pts, std::span<const std::size_t>(order.data() + start, len));
          grad.SetZero();
          EvaluateLoss(net, batch, &grad);
          AdamStep(net, grad, adam);
          if (cfg.parameter_clamp) net.ClampParameters(*cfg.parameter_clamp);
        }
      } else {
        AdamStep(net, grad, adam);
        if (cfg.parameter_clamp) net.ClampParameters(*cfg.parameter_clamp);
      }
      grad.SetZero();
      cur = EvaluateLoss(net, train_pts, minibatch ? nullptr : &grad);
      run.clipped += cur.clipped;
      const double v = val_ll(net);
      if (!std::isfinite(cur.loss) || !std::isfinite(v))
        Fail(ErrorKind::kOptimization, "non-finite log-likelihood");
      run.train_curve.push_back(-cur.loss);
      run.validation_curve.push_back(v);
      run.summary.epochs_run = epoch;
      if (v > best) {
        best = v;
        run.best_net = net;
        run.best_train = -cur.loss;
        run.summary.best_epoch = epoch;
        since_improve = 0;
      } else if (++since_improve >= cfg.patience) {
        run.summary.stop_reason = "early_stop";
        break;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kOptimization) throw;
      run.summary.stop_reason = "diverged";
      run.diverged = true;
      break;
    }
  }
  run.summary.best_validation_loglik = best;
  return run;
}

}  // namespace

double MeanLogLikelihood(const FittedHazard& fh, const Dataset& data) {
  const LikelihoodPoints pts = BuildLikelihoodPoints(fh, data);
  const LossEval ev = EvaluateLoss(fh.net(), pts, nullptr);
  fh.AddClips(ev.clipped);
  return -ev.loss;
}

FitResult FitSplit(const Dataset& train, const Dataset& validation, double tau,
                   const TrainConfig& cfg) {
  cfg.Validate();
  Require(!train.empty(), ErrorKind::kData, "training split is empty");
  Require(!validation.empty(), ErrorKind::kConfig, "validation split is empty");
  Require(train.events() > 0, ErrorKind::kDegenerate,
          "training data are all censored; the hazard is not estimable");
  Require(train.p == validation.p, ErrorKind::kData, "train/validation dimension mismatch");

  // Shell model: scaling maps and quadrature; the network is replaced per
  // grid point.
  const FittedHazard shell =
      FittedHazard::ForData(MlpNetwork::Zeros({train.p + 1, 1}), train, tau, cfg.quadrature);
  const LikelihoodPoints train_pts = BuildLikelihoodPoints(shell, train);
  const LikelihoodPoints val_pts = BuildLikelihoodPoints(shell, validation);

  double total_time = 0.0;
  for (const auto& s : train.subjects) total_time += s.y;
  const double init_bias =
      std::log(static_cast<double>(train.events()) / std::max(total_time, 1e-300));

  FitResult result;
  bool have_best = false;
  GridRun best;
  std::uint64_t clipped = 0;
  std::size_t diverged = 0;
  for (std::size_t di = 0; di < cfg.depth_grid.size(); ++di)
    for (std::size_t wi = 0; wi < cfg.width_grid.size(); ++wi)
      for (std::size_t li = 0; li < cfg.lr_grid.size(); ++li) {
        HyperParams hp{cfg.depth_grid[di], cfg.width_grid[wi], cfg.lr_grid[li]};
        GridRun run = TrainOne(shell, train_pts, val_pts, hp, cfg, init_bias,
                               DeriveSeed(cfg.seed, {di, wi, li}));
        clipped += run.clipped;
        if (run.diverged) ++diverged;
        result.grid.push_back(run.summary);
        // Strict improvement keeps the earliest grid point on ties.
        if (!have_best ||
            run.summary.best_validation_loglik > best.summary.best_validation_loglik) {
          best = std::move(run);
          have_best = true;
        }
      }
  Require(diverged < result.grid.size(), ErrorKind::kOptimization,
          "training diverged at every grid point; lower the learning rates");

  result.model = FittedHazard(best.best_net, tau, shell.cov_min(), shell.cov_span(), cfg.quadrature);
  result.model.AddClips(clipped);
  result.chosen = best.summary.hp;
  result.train_curve = std::move(best.train_curve);
  result.validation_curve = std::move(best.validation_curve);
  result.initial_train_loglik = best.initial_train;
  result.initial_validation_loglik = best.initial_val;
  result.best_validation_loglik = best.summary.best_validation_loglik;
  result.train_loglik = best.best_train;
  result.epochs_run = best.summary.epochs_run;
  result.best_epoch = best.summary.best_epoch;
  result.stop_reason = best.summary.stop_reason;
  result.clipped_exponentials = clipped;
  return result;
}

FitResult Fit(const Dataset& data, const TrainConfig& cfg) {
  cfg.Validate();
  DataSplit split = SplitDataset(data.size(), cfg.split, DeriveSeed(cfg.seed, {0x5b17}),
                                 cfg.allow_empty_test);
  FitResult r = FitSplit(data.Subset(split.train), data.Subset(split.validation), data.tau, cfg);
  r.split = std::move(split);
  return r;
}

}  // namespace dnnh
