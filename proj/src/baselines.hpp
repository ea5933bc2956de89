#pragma once

// Classical comparators: Cox partial likelihood with the Breslow baseline,
// the Lin-Ying additive-hazards estimator, the normal AFT MLE, and a
// log-linear Cox model with a spline log-baseline used as a parametric null.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "hazard.hpp"

namespace dnnh {

// Right-continuous step function: value(t) = values[k] for the last
// times[k] <= t, and 0 before times[0].
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;

  double At(double t) const;
  nlohmann::json ToJson() const;
};

class CoxFit : public CumHazardModel {
 public:
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::MatrixXd covariance;
  StepFunction breslow;  // baseline cumulative hazard
  double log_partial_likelihood = 0.0;
  double score_norm = 0.0;
  int iterations = 0;

  double LinearPredictor(std::span<const double> x) const;
  void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                     std::span<double> out) const override;
  nlohmann::json ToJson() const;
};

// Newton-Raphson on the Breslow-ties log partial likelihood.
CoxFit FitCox(const Dataset& data);
// Breslow baseline for a given coefficient vector.
StepFunction BreslowBaseline(const Dataset& data, std::span<const double> beta);
// Log partial likelihood (Breslow ties) and its score at beta.
double CoxLogPartialLikelihood(const Dataset& data, std::span<const double> beta,
                               Eigen::VectorXd* score = nullptr);

// lambda(t|x) = lambda0(t) + x'beta.
class AhFit : public CumHazardModel {
 public:
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::MatrixXd covariance;
  double residual_norm = 0.0;
  // Raw baseline Lambda0(t) = jumps(t) - integral_0^t xbar(s)'beta ds, stored
  // on the sorted distinct follow-up times.
  std::vector<double> knots;       // breakpoints (distinct Y, ascending)
  std::vector<double> jump_cum;    // cumulative 1/S0 jumps at each knot
  std::vector<double> drift_cum;   // integral of xbar'beta up to each knot
  // drift_slope[k] is xbar'beta on (knots[k-1], knots[k]] with knots[-1] = 0;
  // the extra last entry (beyond the largest time) is 0.
  std::vector<double> drift_slope;

  double RawBaseline(double t) const;
  // Floored, monotone Lambda(t|x): running maximum of max(0, raw) over [0, t].
  void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                     std::span<double> out) const override;
  // How often the running-maximum floor changed a returned value.
  std::uint64_t floor_count() const { return floors_->load(); }
  nlohmann::json ToJson() const;

 private:
  std::shared_ptr<std::atomic<std::uint64_t>> floors_ =
      std::make_shared<std::atomic<std::uint64_t>>(0);
};

AhFit FitAdditiveHazards(const Dataset& data);

// log T = b0 + x'beta + sigma eps, eps ~ N(0,1). The intercept is optional.
class AftFit : public CumHazardModel {
 public:
  Eigen::VectorXd beta;
  double intercept = 0.0;
  bool has_intercept = false;
  double sigma = 1.0;
  Eigen::VectorXd se;  // (beta, [intercept], log sigma)
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;

  double Location(std::span<const double> x) const;
  void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                     std::span<double> out) const override;
  nlohmann::json ToJson() const;
};

AftFit FitAftNormal(const Dataset& data, bool intercept = false);
// Censored normal log-likelihood of log y at params (beta, [intercept], log sigma).
double AftLogLikelihood(const Dataset& data, const Eigen::VectorXd& params, bool intercept,
                        Eigen::VectorXd* gradient = nullptr, Eigen::MatrixXd* hessian = nullptr);

// -log(1 - Phi(z)), accurate in the upper tail.
double NegLogNormalSf(double z);

// Cubic B-spline basis on [lo, hi] with clamped boundary knots; interior + 4
// functions forming a partition of unity.
class BSplineBasis {
 public:
  BSplineBasis(double lo, double hi, std::vector<double> interior);
  // Equally spaced interior knots.
  static BSplineBasis Uniform(double lo, double hi, int interior_knots);
  int size() const { return static_cast<int>(knots_.size()) - 4; }
  // Values of every basis function at t (clamped into [lo, hi]).
  void Evaluate(double t, double* out) const;
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  std::vector<double> interior() const;

 private:
  double lo_, hi_;
  std::vector<double> knots_;
};

// A linear functional F(g) = sum_k coef_k g(t_k, x_k) of a log-hazard.
struct LinearFunctional {
  std::vector<double> times;
  std::vector<std::vector<double>> covariates;
  std::vector<double> coefficients;

  double Apply(const LogHazardModel& g) const;
};

// g(t,x) = B(t)'theta + x'beta: a log-linear Cox model whose log-baseline is a
// cubic spline; fitted by full maximum likelihood.
class SplineCoxFit : public LogHazardModel {
 public:
  SplineCoxFit(BSplineBasis basis, Eigen::VectorXd params, int p, double horizon,
               QuadratureSettings quad);

  const Eigen::VectorXd& params() const { return params_; }
  const BSplineBasis& basis() const { return basis_; }
  int p() const { return p_; }
  int num_params() const { return static_cast<int>(params_.size()); }
  // Feature vector (B(t), x) of the log-linear form.
  void Features(double t, std::span<const double> x, double* out) const;

  void LogHazard(std::span<const double> x, std::span<const double> ts,
                 std::span<double> out) const override;
  void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                     std::span<double> out) const override;
  nlohmann::json ToJson() const;

  double log_likelihood = 0.0;
  double score_norm = 0.0;
  int iterations = 0;

 private:
  BSplineBasis basis_;
  Eigen::VectorXd params_;
  int p_;
  double horizon_;
  QuadratureSettings quad_;
};

struct SplineCoxOptions {
  // Interior knots sit at equally spaced quantiles of the event times; the
  // boundary knots are 0 and the largest follow-up time.
  int interior_knots = 5;
  QuadratureSettings quadrature;
};

// `horizon` is the evaluation range for Lambda; `start` warm-starts Newton
// and `basis` (when given) fixes the knots.
SplineCoxFit FitSplineCox(const Dataset& data, double horizon, const SplineCoxOptions& opt = {},
                          const Eigen::VectorXd* start = nullptr,
                          const BSplineBasis* basis = nullptr);

// Null-model contract for the goodness-of-fit test: fit on one sample, then
// supply per-subject influence values phi_i of a linear functional, so that
// F(g0_hat) - F(g0) ~ (1/m) sum phi_i over the m fitting subjects.
class NullFitter {
 public:
  virtual ~NullFitter() = default;
  virtual std::shared_ptr<const LogHazardModel> Fit(const Dataset& data, double horizon) const = 0;
  // Refit on a perturbed sample starting from an earlier fit.
  virtual std::shared_ptr<const LogHazardModel> Refit(const Dataset& data, double horizon,
                                                      const LogHazardModel& warm) const {
    (void)warm;
    return Fit(data, horizon);
  }
  // Analytic influence values; nullopt when the fitter has none.
  virtual std::optional<std::vector<double>> Influence(const LogHazardModel& fit,
                                                       const Dataset& data,
                                                       const LinearFunctional& f) const {
    (void)fit, (void)data, (void)f;
    return std::nullopt;
  }
  virtual const char* name() const = 0;
};

// Leave-one-out jackknife influence for any fitter:
// phi_i = (m - 1) (F(fit) - F(fit without i)).
std::vector<double> JackknifeInfluence(const NullFitter& fitter, const LogHazardModel& fit,
                                       const Dataset& data, double horizon,
                                       const LinearFunctional& f);
// Several functionals sharing the m leave-one-out refits.
std::vector<std::vector<double>> JackknifeInfluence(const NullFitter& fitter,
                                                    const LogHazardModel& fit, const Dataset& data,
                                                    double horizon,
                                                    const std::vector<LinearFunctional>& fs);

class SplineCoxNull : public NullFitter {
 public:
  explicit SplineCoxNull(SplineCoxOptions opt = {}) : opt_(opt) {}
  std::shared_ptr<const LogHazardModel> Fit(const Dataset& data, double horizon) const override;
  std::shared_ptr<const LogHazardModel> Refit(const Dataset& data, double horizon,
                                              const LogHazardModel& warm) const override;
  // phi_i = D' I^{-1} s_i with D the gradient of F, I the mean information and
  // s_i the per-subject score.
  std::optional<std::vector<double>> Influence(const LogHazardModel& fit, const Dataset& data,
                                               const LinearFunctional& f) const override;
  const char* name() const override { return "spline_cox"; }

 private:
  SplineCoxOptions opt_;
};

}  // namespace dnnh
