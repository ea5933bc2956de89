#pragma once

// Conditional hazard models lambda(t|x) = exp{g(t,x)}: the censored-data
// log-likelihood, its quadrature, and evaluation of g, lambda, Lambda and S.

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "nn.hpp"
#include "quadrature.hpp"

namespace dnnh {

// Anything that can evaluate a conditional cumulative hazard Lambda(t|x).
class CumHazardModel {
 public:
  virtual ~CumHazardModel() = default;

  // Lambda(t|x) for nondecreasing `ts` (one covariate vector).
  virtual void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                             std::span<double> out) const = 0;

  // Throws kDomain when a probe cannot be evaluated (used by curve export).
  virtual void CheckProbe(std::span<const double> /*x*/) const {}

  double CumHazard(double t, std::span<const double> x) const;
  double Survival(double t, std::span<const double> x) const;
};

// A model that also exposes the log-hazard g(t,x).
class LogHazardModel : public CumHazardModel {
 public:
  virtual void LogHazard(std::span<const double> x, std::span<const double> ts,
                         std::span<double> out) const = 0;

  double LogHazard(double t, std::span<const double> x) const;
};

struct QuadratureSettings {
  int order = 8;                   // Q, nodes per subinterval
  int likelihood_subintervals = 4; // K for the integral over [0, Y]
  int cum_subintervals_per_tau = 16;  // grid density for Lambda(t|x)
  double exp_clip = 30.0;          // exp arguments are clipped here

  nlohmann::json ToJson() const;
  static QuadratureSettings FromJson(const nlohmann::json& j);
};

// A trained network plus the maps that take raw (t, x) into the network's
// input domain [0,1] x [0,1]^p. Immutable after training.
class FittedHazard : public LogHazardModel {
 public:
  FittedHazard() = default;
  FittedHazard(MlpNetwork net, double tau, std::vector<double> cov_min,
               std::vector<double> cov_span, QuadratureSettings quad = {});

  // Scaling maps fitted on `train`: t -> t / tau, x_j -> (x_j - min_j) / span_j.
  static FittedHazard ForData(MlpNetwork net, const Dataset& train, double tau,
                              QuadratureSettings quad = {});

  const MlpNetwork& net() const { return net_; }
  MlpNetwork& mutable_net() { return net_; }
  double tau() const { return tau_; }
  int dim() const { return static_cast<int>(cov_min_.size()); }
  const QuadratureSettings& quadrature() const { return quad_; }
  const std::vector<double>& cov_min() const { return cov_min_; }
  const std::vector<double>& cov_span() const { return cov_span_; }

  // Network input column for raw (t, x).
  void Encode(double t, std::span<const double> x, double* column) const;
  std::vector<double> ScaleCovariates(std::span<const double> x) const;

  void LogHazard(std::span<const double> x, std::span<const double> ts,
                 std::span<double> out) const override;
  void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                     std::span<double> out) const override;
  void CheckProbe(std::span<const double> x) const override;

  // Number of exp() evaluations that hit the overflow clip.
  std::uint64_t clip_count() const { return clip_count_ ? clip_count_->load() : 0; }
  void AddClips(std::uint64_t n) const {
    if (clip_count_ && n) clip_count_->fetch_add(n);
  }

  nlohmann::json ToJson() const;
  static FittedHazard FromJson(const nlohmann::json& j);

 private:
  void CheckTime(double t) const;

  MlpNetwork net_;
  double tau_ = 1.0;
  std::vector<double> cov_min_;
  std::vector<double> cov_span_;
  QuadratureSettings quad_;
  std::shared_ptr<std::atomic<std::uint64_t>> clip_count_ =
      std::make_shared<std::atomic<std::uint64_t>>(0);
};

// Generic Lambda(t|x) = integral of exp(g) on the fixed grid of width
// tau / per_tau anchored at 0, with a Q-point partial rule for the last piece.
void IntegrateLogHazardPath(const LogHazardModel& model, double tau, const QuadratureSettings& quad,
                            std::span<const double> x, std::span<const double> ts,
                            std::span<double> out);

// l(g; Z) = Delta g(Y,X) - integral_0^Y exp{g(s,X)} ds, K x Q composite rule.
double LogLikelihood(const LogHazardModel& model, const QuadratureSettings& quad, const Subject& z);
double LogLikelihood(const FittedHazard& fh, const Subject& z);

// Precomputed network inputs and coefficients for the empirical negative
// log-likelihood: loss = sum_p linear_p * g_p + expo_p * exp(min(g_p, clip)).
struct LikelihoodPoints {
  Matrix inputs;        // p0 x N
  RowVector linear;     // -Delta_i / m at event points
  RowVector expo;       // Y_i w_k / m at quadrature nodes
  std::vector<std::size_t> subject_offsets;  // columns of subject i: [off[i], off[i+1])
  double clip = 30.0;
};

LikelihoodPoints BuildLikelihoodPoints(const FittedHazard& fh, const Dataset& batch);

struct LossEval {
  double loss = 0.0;
  std::uint64_t clipped = 0;
};

// Evaluates the loss (and accumulates the gradient when `grad` is non-null)
// in fixed-size column chunks; the reduction order is deterministic.
LossEval EvaluateLoss(const MlpNetwork& net, const LikelihoodPoints& pts, NetworkGrad* grad);

struct LossAndGrad {
  double loss = 0.0;
  NetworkGrad grad;
};

// loss = -(1/m) sum_i l(g; Z_i) and its gradient. Throws kOptimization when
// the loss is not finite.
LossAndGrad NegLogLikAndGrad(const FittedHazard& fh, const Dataset& batch);

// sum Delta_i |Lambda(Y_i|X_i) - Lambda_hat(Y_i|X_i)| / sum Delta_i.
double ChfDiscrepancy(const CumHazardModel& truth, const CumHazardModel& estimate,
                      const Dataset& data);

}  // namespace dnnh
