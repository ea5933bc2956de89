#pragma once

// Maximizes the empirical censored log-likelihood over ReLU networks with
// Adam, early stopping on a validation split and a hyperparameter grid.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "hazard.hpp"

namespace dnnh {

struct SplitFractions {
  double train = 0.64;
  double validation = 0.16;
  double test = 0.20;
};

struct TrainConfig {
  std::vector<int> depth_grid{2, 3};
  std::vector<int> width_grid{16, 32, 64};
  std::vector<double> lr_grid{1e-2, 1e-3};
  int max_epochs = 2000;
  int patience = 50;
  SplitFractions split;
  bool allow_empty_test = false;
  std::uint64_t seed = 0;
  QuadratureSettings quadrature;
  std::size_t minibatch = 0;  // 0 = full batch
  // Optional smooth output clamp B tanh(g / B).
  std::optional<double> output_bound;
  // Optional post-step clamp of every parameter to [-c, c].
  std::optional<double> parameter_clamp;
  // Start the output bias at the constant-hazard MLE log(D / sum Y).
  bool init_output_bias = true;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

struct HyperParams {
  int depth = 2;
  int width = 32;
  double learning_rate = 1e-2;

  nlohmann::json ToJson() const;
};

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Disjoint exhaustive random partition with sizes round(f n) for train and
// validation; the test part takes the remainder. Throws kConfig when a part
// with a positive fraction (or the test part without allow_empty_test) is
// empty.
DataSplit SplitDataset(std::size_t n, const SplitFractions& fractions, std::uint64_t seed,
                       bool allow_empty_test = false);

struct GridPointSummary {
  HyperParams hp;
  double best_validation_loglik = -INFINITY;
  int best_epoch = 0;
  int epochs_run = 0;
  std::string stop_reason;
};

struct FitResult {
  FittedHazard model;
  HyperParams chosen;
  std::vector<double> train_curve;       // mean log-likelihood after each epoch
  std::vector<double> validation_curve;  // same, on the validation split
  double initial_train_loglik = 0.0;
  double initial_validation_loglik = 0.0;
  double best_validation_loglik = 0.0;
  double train_loglik = 0.0;  // at the returned parameters
  int epochs_run = 0;
  int best_epoch = 0;  // 0 = initialization
  std::string stop_reason;
  std::uint64_t clipped_exponentials = 0;
  std::vector<GridPointSummary> grid;
  DataSplit split;

  nlohmann::json ToJson() const;  // curves and metadata (not the model)
};

// Trains on `train`, early-stops on `validation`; tau is the study horizon.
FitResult FitSplit(const Dataset& train, const Dataset& validation, double tau,
                   const TrainConfig& cfg);

// Splits `data` by cfg.split / cfg.seed, then FitSplit on train/validation.
FitResult Fit(const Dataset& data, const TrainConfig& cfg);

// Mean log-likelihood (1/m) sum l(g; Z_i).
double MeanLogLikelihood(const FittedHazard& fh, const Dataset& data);

}  // namespace dnnh
