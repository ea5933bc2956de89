#include "baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "errors.hpp"
#include "stats.hpp"

namespace dnnh {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd Row(const Subject& s) {
  return Eigen::Map<const VectorXd>(s.x.data(), static_cast<Eigen::Index>(s.x.size()));
}

std::vector<std::size_t> OrderByTime(const Dataset& data) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.subjects[a].y < data.subjects[b].y;
  });
  return order;
}

void RequireEvents(const Dataset& data, const char* what) {
  Require(!data.empty(), ErrorKind::kData, std::string(what) + ": empty dataset");
  Require(data.events() > 0, ErrorKind::kData, std::string(what) + ": no events");
  for (const auto& s : data.subjects)
    Require(static_cast<int>(s.x.size()) == data.p, ErrorKind::kShape,
            std::string(what) + ": covariate dimension mismatch");
}

// Inverse of a symmetric positive definite matrix, or nullopt.
std::optional<MatrixXd> SpdInverse(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  MatrixXd inv = llt.solve(MatrixXd::Identity(m.rows(), m.cols()));
  if (!inv.allFinite()) return std::nullopt;
  return inv;
}

VectorXd DiagSqrt(const MatrixXd& m) { return m.diagonal().cwiseMax(0.0).cwiseSqrt(); }

nlohmann::json ToVec(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Newton ascent with step halving; gradient steps when the negative Hessian
// is not positive definite. `eval` returns the objective and fills g, H.
template <class Eval>
int NewtonAscent(VectorXd& theta, Eval eval, double tol, int max_iter, const char* what,
                 double* grad_norm, double* objective) {
  VectorXd g, gn;
  MatrixXd h, hn;
  double f = eval(theta, &g, &h);
  Require(std::isfinite(f), ErrorKind::kEstimation, std::string(what) + ": non-finite start");
  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() < tol) {
      *grad_norm = g.norm();
      *objective = f;
      return it;
    }
    VectorXd step;
    Eigen::LDLT<MatrixXd> ldlt(-h);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        (ldlt.vectorD().array() > 0.0).all()) {
      step = ldlt.solve(g);
    }
    if (step.size() == 0 || !step.allFinite() || step.dot(g) <= 0.0)
      step = g / std::max(1.0, g.norm());
    double scale = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, scale *= 0.5) {
      VectorXd cand = theta + scale * step;
      const double fn = eval(cand, &gn, &hn);
      if (std::isfinite(fn) && fn >= f - 1e-12 * std::max(1.0, std::abs(f))) {
        theta = std::move(cand);
        moved = fn > f || gn.norm() < g.norm();
        f = fn;
        g = gn;
        h = hn;
        break;
      }
    }
    if (!moved && g.norm() >= tol) {
      // No ascent direction makes progress: accept only a numerically flat optimum.
      if (g.norm() < 1e3 * tol) {
        *grad_norm = g.norm();
        *objective = f;
        return it + 1;
      }
      Fail(ErrorKind::kEstimation, std::string(what) + ": line search failed");
    }
  }
  if (g.norm() < tol) {
    *grad_norm = g.norm();
    *objective = f;
    return max_iter;
  }
  Fail(ErrorKind::kEstimation,
       std::string(what) + ": no convergence in " + std::to_string(max_iter) + " iterations");
}

}  // namespace

// --- step function ---

double StepFunction::At(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

nlohmann::json StepFunction::ToJson() const { return {{"times", times}, {"values", values}}; }

// --- Cox ---

namespace {

double CoxObjective(const Dataset& data, const std::vector<std::size_t>& order,
                    const VectorXd& mean, const VectorXd& beta, VectorXd* grad, MatrixXd* info) {
  const int p = data.p;
  double s0 = 0.0, ll = 0.0;
  VectorXd s1 = VectorXd::Zero(p);
  MatrixXd s2 = MatrixXd::Zero(p, p);
  *grad = VectorXd::Zero(p);
  *info = MatrixXd::Zero(p, p);
  for (std::size_t end = order.size(); end > 0;) {
    std::size_t start = end;
    const double t = data.subjects[order[end - 1]].y;
    while (start > 0 && data.subjects[order[start - 1]].y == t) --start;
    int d = 0;
    VectorXd xsum = VectorXd::Zero(p);
    double eta_sum = 0.0;
    for (std::size_t k = start; k < end; ++k) {
      const Subject& s = data.subjects[order[k]];
      const VectorXd xc = Row(s) - mean;
      const double eta = xc.dot(beta);
      const double w = std::exp(eta);
      s0 += w;
      s1 += w * xc;
      s2.noalias() += w * xc * xc.transpose();
      if (s.delta) {
        ++d;
        xsum += xc;
        eta_sum += eta;
      }
    }
    if (d > 0) {
      ll += eta_sum - d * std::log(s0);
      const VectorXd xbar = s1 / s0;
      *grad += xsum - d * xbar;
      *info += d * (s2 / s0 - xbar * xbar.transpose());
    }
    end = start;
  }
  return ll;
}

}  // namespace

double CoxLogPartialLikelihood(const Dataset& data, std::span<const double> beta, VectorXd* score) {
  Require(static_cast<int>(beta.size()) == data.p, ErrorKind::kShape,
          "coefficient dimension mismatch");
  VectorXd mean = VectorXd::Zero(data.p);
  for (const auto& s : data.subjects) mean += Row(s);
  mean /= static_cast<double>(std::max<std::size_t>(data.size(), 1));
  VectorXd g;
  MatrixXd info;
  const double ll = CoxObjective(data, OrderByTime(data), mean,
                                 Eigen::Map<const VectorXd>(beta.data(), data.p), &g, &info);
  if (score) *score = g;
  return ll;
}

StepFunction BreslowBaseline(const Dataset& data, std::span<const double> beta) {
  RequireEvents(data, "Breslow baseline");
  Require(static_cast<int>(beta.size()) == data.p, ErrorKind::kShape,
          "coefficient dimension mismatch");
  const Eigen::Map<const VectorXd> b(beta.data(), data.p);
  const auto order = OrderByTime(data);
  std::vector<double> times, jumps;
  double s0 = 0.0;
  for (std::size_t end = order.size(); end > 0;) {
    std::size_t start = end;
    const double t = data.subjects[order[end - 1]].y;
    while (start > 0 && data.subjects[order[start - 1]].y == t) --start;
    int d = 0;
    for (std::size_t k = start; k < end; ++k) {
      const Subject& s = data.subjects[order[k]];
      s0 += std::exp(Row(s).dot(b));
      d += s.delta;
    }
    if (d > 0) {
      times.push_back(t);
      jumps.push_back(d / s0);
    }
    end = start;
  }
  StepFunction f;
  f.times.assign(times.rbegin(), times.rend());
  f.values.resize(jumps.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    cum += jumps[jumps.size() - 1 - k];
    f.values[k] = cum;
  }
  return f;
}

CoxFit FitCox(const Dataset& data) {
  RequireEvents(data, "Cox fit");
  const int p = data.p;
  const auto order = OrderByTime(data);
  VectorXd mean = VectorXd::Zero(p);
  for (const auto& s : data.subjects) mean += Row(s);
  mean /= static_cast<double>(data.size());

  CoxFit fit;
  VectorXd beta = VectorXd::Zero(p);
  auto eval = [&](const VectorXd& b, VectorXd* g, MatrixXd* h) {
    MatrixXd info;
    const double ll = CoxObjective(data, order, mean, b, g, &info);
    *h = -info;
    return ll;
  };
  fit.iterations = NewtonAscent(beta, eval, 1e-8, 100, "Cox fit", &fit.score_norm,
                                &fit.log_partial_likelihood);
  Require(beta.cwiseAbs().maxCoeff() < 50.0, ErrorKind::kEstimation,
          "Cox fit: coefficients diverge (monotone likelihood / perfect separation)");
  VectorXd g;
  MatrixXd info;
  CoxObjective(data, order, mean, beta, &g, &info);
  auto cov = SpdInverse(info);
  Require(cov.has_value(), ErrorKind::kEstimation,
          "Cox fit: singular information (collinear covariates)");
  fit.beta = beta;
  fit.covariance = *cov;
  fit.se = DiagSqrt(*cov);
  fit.breslow = BreslowBaseline(data, std::span<const double>(beta.data(), p));
  return fit;
}

double CoxFit::LinearPredictor(std::span<const double> x) const {
  Require(static_cast<Eigen::Index>(x.size()) == beta.size(), ErrorKind::kShape,
          "covariate dimension mismatch");
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += x[j] * beta(j);
  return eta;
}

void CoxFit::CumHazardPath(std::span<const double> x, std::span<const double> ts,
                           std::span<double> out) const {
  Require(out.size() == ts.size(), ErrorKind::kShape, "output size mismatch");
  const double r = std::exp(LinearPredictor(x));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Require(ts[i] >= 0.0, ErrorKind::kDomain, "time must be >= 0");
    out[i] = breslow.At(ts[i]) * r;
  }
}

nlohmann::json CoxFit::ToJson() const {
  return {{"kind", "cox"},
          {"beta", ToVec(beta)},
          {"se", ToVec(se)},
          {"log_partial_likelihood", log_partial_likelihood},
          {"score_norm", score_norm},
          {"iterations", iterations},
          {"baseline", breslow.ToJson()}};
}

// --- Lin-Ying additive hazards ---

AhFit FitAdditiveHazards(const Dataset& data) {
  RequireEvents(data, "additive-hazards fit");
  const int p = data.p;
  const auto order = OrderByTime(data);
  const std::size_t n = order.size();

  // Suffix sums over the risk set {j : Y_j >= Y_(k)} in sorted order.
  std::vector<double> s0(n + 1, 0.0);
  std::vector<VectorXd> s1(n + 1, VectorXd::Zero(p));
  std::vector<MatrixXd> s2(n + 1, MatrixXd::Zero(p, p));
  for (std::size_t k = n; k > 0; --k) {
    const VectorXd x = Row(data.subjects[order[k - 1]]);
    s0[k - 1] = s0[k] + 1.0;
    s1[k - 1] = s1[k] + x;
    s2[k - 1] = s2[k] + x * x.transpose();
  }

  AhFit fit;
  MatrixXd a = MatrixXd::Zero(p, p);
  MatrixXd bmat = MatrixXd::Zero(p, p);
  VectorXd b = VectorXd::Zero(p);
  std::vector<VectorXd> xbar;
  std::vector<double> jumps;
  double prev = 0.0;
  for (std::size_t k = 0; k < n;) {
    const double t = data.subjects[order[k]].y;
    std::size_t end = k;
    while (end < n && data.subjects[order[end]].y == t) ++end;
    // Risk set on (prev, t] is everyone from sorted position k on.
    const VectorXd xb = s1[k] / s0[k];
    a += (t - prev) * (s2[k] - s1[k] * s1[k].transpose() / s0[k]);
    int d = 0;
    for (std::size_t j = k; j < end; ++j) {
      const Subject& s = data.subjects[order[j]];
      if (!s.delta) continue;
      ++d;
      const VectorXd r = Row(s) - xb;
      b += r;
      bmat += r * r.transpose();
    }
    fit.knots.push_back(t);
    xbar.push_back(xb);
    jumps.push_back(d / s0[k]);
    prev = t;
    k = end;
  }

  Eigen::FullPivLU<MatrixXd> lu(a);
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  Require(lu.rank() == p && std::abs(lu.determinant()) > std::pow(1e-12 * scale, p),
          ErrorKind::kEstimation,
          "additive-hazards fit: singular design (constant or collinear covariates)");
  fit.beta = lu.solve(b);
  fit.residual_norm = (a * fit.beta - b).norm();
  const MatrixXd ainv = lu.inverse();
  fit.covariance = ainv * bmat * ainv.transpose();
  fit.se = DiagSqrt(fit.covariance);

  const std::size_t m = fit.knots.size();
  fit.jump_cum.resize(m);
  fit.drift_cum.resize(m);
  fit.drift_slope.resize(m + 1);
  double jc = 0.0, dc = 0.0;
  prev = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double slope = xbar[k].dot(fit.beta);
    dc += (fit.knots[k] - prev) * slope;
    jc += jumps[k];
    fit.drift_slope[k] = slope;
    fit.drift_cum[k] = dc;
    fit.jump_cum[k] = jc;
    prev = fit.knots[k];
  }
  fit.drift_slope[m] = 0.0;
  return fit;
}

double AhFit::RawBaseline(double t) const {
  const auto j = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), t) -
                                          knots.begin());
  const double kprev = j == 0 ? 0.0 : knots[j - 1];
  const double dprev = j == 0 ? 0.0 : drift_cum[j - 1];
  const double jprev = j == 0 ? 0.0 : jump_cum[j - 1];
  return jprev - (dprev + (t - kprev) * drift_slope[j]);
}

void AhFit::CumHazardPath(std::span<const double> x, std::span<const double> ts,
                          std::span<double> out) const {
  Require(out.size() == ts.size(), ErrorKind::kShape, "output size mismatch");
  Require(static_cast<Eigen::Index>(x.size()) == beta.size(), ErrorKind::kShape,
          "covariate dimension mismatch");
  double xb = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) xb += x[j] * beta(j);
  double running = 0.0;  // sup of the raw curve over [0, last knot passed]
  double jprev = 0.0;
  std::size_t k = 0;
  std::uint64_t floors = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double t = ts[i];
    Require(t >= 0.0, ErrorKind::kDomain, "time must be >= 0");
    Require(i == 0 || t >= ts[i - 1], ErrorKind::kDomain, "path times must be nondecreasing");
    while (k < knots.size() && knots[k] <= t) {
      // Left limit, then the value after the jump.
      running = std::max(running, jprev + xb * knots[k] - drift_cum[k]);
      jprev = jump_cum[k];
      running = std::max(running, jprev + xb * knots[k] - drift_cum[k]);
      ++k;
    }
    const double raw = RawBaseline(t) + xb * t;
    const double v = std::max(running, raw);
    if (v > raw) ++floors;
    out[i] = v;
  }
  if (floors) floors_->fetch_add(floors);
}

nlohmann::json AhFit::ToJson() const {
  return {{"kind", "additive_hazards"},
          {"beta", ToVec(beta)},
          {"se", ToVec(se)},
          {"residual_norm", residual_norm},
          {"floor_count", floor_count()},
          {"baseline",
           {{"times", knots},
            {"jump_cumulative", jump_cum},
            {"drift_cumulative", drift_cum},
            {"drift_slope", drift_slope}}}};
}

// --- normal AFT ---

double NegLogNormalSf(double z) {
  if (z < 0.0) return -std::log1p(-NormalCdf(z));
  if (z < 8.0) return -std::log(NormalSf(z));
  return 0.5 * z * z + 0.5 * std::log(2.0 * std::numbers::pi) + std::log(InverseMillsRatio(z));
}

double AftLogLikelihood(const Dataset& data, const VectorXd& params, bool intercept,
                        VectorXd* gradient, MatrixXd* hessian) {
  const int p = data.p;
  const int q = p + (intercept ? 1 : 0) + 1;
  Require(params.size() == q, ErrorKind::kShape, "AFT parameter dimension mismatch");
  const double u = params(q - 1);
  const double sigma = std::exp(u);
  if (gradient) *gradient = VectorXd::Zero(q);
  if (hessian) *hessian = MatrixXd::Zero(q, q);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double ll = 0.0;
  VectorXd d(q);  // d mu / d params (last slot unused)
  for (const auto& s : data.subjects) {
    Require(s.y > 0.0, ErrorKind::kDomain, "AFT fit needs positive follow-up times");
    double mu = intercept ? params(p) : 0.0;
    for (int j = 0; j < p; ++j) mu += s.x[j] * params(j);
    const double ly = std::log(s.y);
    const double z = (ly - mu) / sigma;
    double g_mu, g_u, h_mumu, h_muu, h_uu;
    if (s.delta) {
      ll += -u - 0.5 * z * z - half_log_2pi - ly;
      g_mu = z / sigma;
      g_u = -1.0 + z * z;
      h_mumu = -1.0 / (sigma * sigma);
      h_muu = -2.0 * z / sigma;
      h_uu = -2.0 * z * z;
    } else {
      ll += -NegLogNormalSf(z);
      const double m = InverseMillsRatio(z);
      const double dm = m * (m - z);
      g_mu = m / sigma;
      g_u = m * z;
      h_mumu = -dm / (sigma * sigma);
      h_muu = -(dm * z + m) / sigma;
      h_uu = -z * (dm * z + m);
    }
    if (!gradient && !hessian) continue;
    for (int j = 0; j < p; ++j) d(j) = s.x[j];
    if (intercept) d(p) = 1.0;
    if (gradient) {
      gradient->head(q - 1) += g_mu * d.head(q - 1);
      (*gradient)(q - 1) += g_u;
    }
    if (hessian) {
      hessian->topLeftCorner(q - 1, q - 1).noalias() +=
          h_mumu * d.head(q - 1) * d.head(q - 1).transpose();
      hessian->col(q - 1).head(q - 1) += h_muu * d.head(q - 1);
      hessian->row(q - 1).head(q - 1) += h_muu * d.head(q - 1).transpose();
      (*hessian)(q - 1, q - 1) += h_uu;
    }
  }
  return ll;
}

AftFit FitAftNormal(const Dataset& data, bool intercept) {
  RequireEvents(data, "AFT fit");
  const int p = data.p;
  const int q = p + (intercept ? 1 : 0) + 1;
  // Least squares of log y on the design as a start.
  MatrixXd design(data.size(), q - 1);
  VectorXd ly(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data.subjects[i];
    Require(s.y > 0.0, ErrorKind::kDomain, "AFT fit needs positive follow-up times");
    for (int j = 0; j < p; ++j) design(i, j) = s.x[j];
    if (intercept) design(i, p) = 1.0;
    ly(i) = std::log(s.y);
  }
  VectorXd theta = VectorXd::Zero(q);
  VectorXd ls = design.colPivHouseholderQr().solve(ly);
  if (ls.allFinite()) theta.head(q - 1) = ls;
  const VectorXd resid = ly - design * theta.head(q - 1);
  const double rsd = std::sqrt(resid.squaredNorm() / static_cast<double>(data.size()));
  theta(q - 1) = std::log(std::max(rsd, 0.1));

  AftFit fit;
  auto eval = [&](const VectorXd& th, VectorXd* g, MatrixXd* h) {
    return AftLogLikelihood(data, th, intercept, g, h);
  };
  fit.iterations =
      NewtonAscent(theta, eval, 1e-8, 200, "AFT fit", &fit.gradient_norm, &fit.log_likelihood);
  VectorXd g;
  MatrixXd h;
  AftLogLikelihood(data, theta, intercept, &g, &h);
  auto cov = SpdInverse(-h);
  Require(cov.has_value(), ErrorKind::kEstimation, "AFT fit: singular information");
  fit.beta = theta.head(p);
  fit.has_intercept = intercept;
  fit.intercept = intercept ? theta(p) : 0.0;
  fit.sigma = std::exp(theta(q - 1));
  fit.se = DiagSqrt(*cov);
  return fit;
}

double AftFit::Location(std::span<const double> x) const {
  Require(static_cast<Eigen::Index>(x.size()) == beta.size(), ErrorKind::kShape,
          "covariate dimension mismatch");
  double mu = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) mu += x[j] * beta(j);
  return mu;
}

void AftFit::CumHazardPath(std::span<const double> x, std::span<const double> ts,
                           std::span<double> out) const {
  Require(out.size() == ts.size(), ErrorKind::kShape, "output size mismatch");
  const double mu = Location(x);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Require(ts[i] >= 0.0, ErrorKind::kDomain, "time must be >= 0");
    out[i] = ts[i] == 0.0 ? 0.0 : NegLogNormalSf((std::log(ts[i]) - mu) / sigma);
  }
}

nlohmann::json AftFit::ToJson() const {
  return {{"kind", "aft_normal"},
          {"beta", ToVec(beta)},
          {"intercept", has_intercept ? nlohmann::json(intercept) : nlohmann::json()},
          {"sigma", sigma},
          {"se", ToVec(se)},
          {"log_likelihood", log_likelihood},
          {"gradient_norm", gradient_norm},
          {"iterations", iterations}};
}

// --- spline Cox null ---

BSplineBasis::BSplineBasis(double lo, double hi, std::vector<double> interior)
    : lo_(lo), hi_(hi) {
  Require(hi > lo, ErrorKind::kConfig, "spline range must be nonempty");
  for (int i = 0; i < 4; ++i) knots_.push_back(lo);
  for (double k : interior) {
    Require(k > lo && k < hi && k >= knots_.back(), ErrorKind::kConfig,
            "interior knots must be increasing inside the range");
    knots_.push_back(k);
  }
  for (int i = 0; i < 4; ++i) knots_.push_back(hi);
}

BSplineBasis BSplineBasis::Uniform(double lo, double hi, int interior_knots) {
  Require(interior_knots >= 0, ErrorKind::kConfig, "interior knot count must be >= 0");
  std::vector<double> in;
  for (int k = 1; k <= interior_knots; ++k) in.push_back(lo + (hi - lo) * k / (interior_knots + 1));
  return BSplineBasis(lo, hi, std::move(in));
}

std::vector<double> BSplineBasis::interior() const {
  return std::vector<double>(knots_.begin() + 4, knots_.end() - 4);
}

void BSplineBasis::Evaluate(double t, double* out) const {
  constexpr int kDegree = 3;
  const int nb = size();
  std::fill(out, out + nb, 0.0);
  t = std::clamp(t, lo_, hi_);
  // Knot span s with knots[s] <= t < knots[s+1], the last span for t = hi.
  int s = kDegree;
  while (s + 1 < nb && knots_[s + 1] <= t) ++s;
  double n[kDegree + 1], left[kDegree + 1], right[kDegree + 1];
  n[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = t - knots_[s + 1 - j];
    right[j] = knots_[s + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    n[j] = saved;
  }
  for (int j = 0; j <= kDegree; ++j) out[s - kDegree + j] = n[j];
}

double LinearFunctional::Apply(const LogHazardModel& g) const {
  Require(times.size() == covariates.size() && times.size() == coefficients.size(),
          ErrorKind::kShape, "functional size mismatch");
  double v = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k)
    if (coefficients[k] != 0.0) v += coefficients[k] * g.LogHazard(times[k], covariates[k]);
  return v;
}

SplineCoxFit::SplineCoxFit(BSplineBasis basis, VectorXd params, int p, double horizon,
                           QuadratureSettings quad)
    : basis_(std::move(basis)), params_(std::move(params)), p_(p), horizon_(horizon), quad_(quad) {
  Require(horizon_ > 0.0, ErrorKind::kConfig, "horizon must be positive");
  Require(params_.size() == basis_.size() + p, ErrorKind::kShape,
          "spline Cox parameter dimension mismatch");
}

void SplineCoxFit::Features(double t, std::span<const double> x, double* out) const {
  Require(static_cast<int>(x.size()) == p_, ErrorKind::kShape, "covariate dimension mismatch");
  basis_.Evaluate(t, out);
  for (int j = 0; j < p_; ++j) out[basis_.size() + j] = x[j];
}

void SplineCoxFit::LogHazard(std::span<const double> x, std::span<const double> ts,
                             std::span<double> out) const {
  Require(out.size() == ts.size(), ErrorKind::kShape, "output size mismatch");
  VectorXd f(params_.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Features(ts[i], x, f.data());
    out[i] = f.dot(params_);
  }
}

void SplineCoxFit::CumHazardPath(std::span<const double> x, std::span<const double> ts,
                                 std::span<double> out) const {
  for (double t : ts) Require(t >= 0.0, ErrorKind::kDomain, "time must be >= 0");
  IntegrateLogHazardPath(*this, horizon_, quad_, x, ts, out);
}

nlohmann::json SplineCoxFit::ToJson() const {
  return {{"kind", "spline_cox"},
          {"horizon", horizon_},
          {"knots", {{"lo", basis_.lo()}, {"hi", basis_.hi()}, {"interior", basis_.interior()}}},
          {"params", ToVec(params_)},
          {"log_likelihood", log_likelihood},
          {"score_norm", score_norm},
          {"iterations", iterations}};
}

namespace {

// Features and weights at every likelihood quadrature node, plus event
// features; columns of subject i are [offset[i], offset[i+1]).
struct SplineDesign {
  MatrixXd node_features;  // q x N
  VectorXd node_weights;
  MatrixXd event_features;  // q x n (zero column when censored)
  std::vector<Eigen::Index> offsets;
};

SplineDesign BuildSplineDesign(const SplineCoxFit& shape, const Dataset& data,
                               const QuadratureSettings& quad) {
  const QuadratureRule& rule = CachedGaussLegendre(quad.order);
  const int per = quad.likelihood_subintervals * rule.order();
  const int q = shape.num_params();
  SplineDesign d;
  d.node_features.resize(q, static_cast<Eigen::Index>(data.size()) * per);
  d.node_weights.resize(d.node_features.cols());
  d.event_features = MatrixXd::Zero(q, static_cast<Eigen::Index>(data.size()));
  std::vector<double> nodes, weights;
  Eigen::Index c = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data.subjects[i];
    d.offsets.push_back(c);
    CompositeNodes(rule, 0.0, s.y, quad.likelihood_subintervals, nodes, weights);
    for (std::size_t k = 0; k < nodes.size(); ++k, ++c) {
      shape.Features(nodes[k], s.x, d.node_features.col(c).data());
      d.node_weights(c) = weights[k];
    }
    if (s.delta) shape.Features(s.y, s.x, d.event_features.col(i).data());
  }
  d.offsets.push_back(c);
  return d;
}

}  // namespace

namespace {

BSplineBasis QuantileBasis(const Dataset& data, int interior_knots) {
  std::vector<double> ev;
  double ymax = 0.0;
  for (const auto& s : data.subjects) {
    ymax = std::max(ymax, s.y);
    if (s.delta) ev.push_back(s.y);
  }
  Require(ymax > 0.0, ErrorKind::kData, "spline Cox fit: all follow-up times are zero");
  std::vector<double> in;
  for (int k = 1; k <= interior_knots; ++k) {
    const double v = Quantile(ev, static_cast<double>(k) / (interior_knots + 1));
    if (v > 0.0 && v < ymax && (in.empty() || v > in.back())) in.push_back(v);
  }
  return BSplineBasis(0.0, ymax, std::move(in));
}

}  // namespace

SplineCoxFit FitSplineCox(const Dataset& data, double horizon, const SplineCoxOptions& opt,
                          const VectorXd* start, const BSplineBasis* fixed_basis) {
  RequireEvents(data, "spline Cox fit");
  Require(horizon > 0.0, ErrorKind::kConfig, "spline horizon must be positive");
  BSplineBasis basis = fixed_basis ? *fixed_basis : QuantileBasis(data, opt.interior_knots);
  const int q = basis.size() + data.p;
  VectorXd theta = VectorXd::Zero(q);
  if (start) {
    Require(start->size() == q, ErrorKind::kShape, "warm start dimension mismatch");
    theta = *start;
  } else {
    double total = 0.0;
    for (const auto& s : data.subjects) total += s.y;
    // Constant-hazard MLE; B-splines sum to one.
    theta.head(basis.size()).setConstant(std::log(data.events() / std::max(total, 1e-300)));
  }
  SplineCoxFit shape(basis, theta, data.p, horizon, opt.quadrature);
  const SplineDesign d = BuildSplineDesign(shape, data, opt.quadrature);
  const VectorXd event_sum = d.event_features.rowwise().sum();

  auto eval = [&](const VectorXd& th, VectorXd* g, MatrixXd* h) {
    const VectorXd eta = d.node_features.transpose() * th;
    if (eta.maxCoeff() > 700.0) return -std::numeric_limits<double>::infinity();
    const VectorXd we = d.node_weights.cwiseProduct(eta.array().exp().matrix());
    *g = event_sum - d.node_features * we;
    *h = -(d.node_features * we.asDiagonal() * d.node_features.transpose());
    return event_sum.dot(th) - we.sum();
  };
  double score_norm = 0.0, ll = 0.0;
  const int iterations = NewtonAscent(theta, eval, 1e-8, 100, "spline Cox fit", &score_norm, &ll);
  SplineCoxFit fit(std::move(basis), theta, data.p, horizon, opt.quadrature);
  fit.log_likelihood = ll;
  fit.score_norm = score_norm;
  fit.iterations = iterations;
  return fit;
}

std::shared_ptr<const LogHazardModel> SplineCoxNull::Fit(const Dataset& data,
                                                         double horizon) const {
  return std::make_shared<SplineCoxFit>(FitSplineCox(data, horizon, opt_));
}

std::shared_ptr<const LogHazardModel> SplineCoxNull::Refit(const Dataset& data, double horizon,
                                                           const LogHazardModel& warm) const {
  const auto* w = dynamic_cast<const SplineCoxFit*>(&warm);
  if (!w) return Fit(data, horizon);
  // Same knots as the warm fit, so leave-one-out refits perturb only the data.
  return std::make_shared<SplineCoxFit>(
      FitSplineCox(data, horizon, opt_, &w->params(), &w->basis()));
}

std::optional<std::vector<double>> SplineCoxNull::Influence(const LogHazardModel& fit,
                                                            const Dataset& data,
                                                            const LinearFunctional& f) const {
  const auto* sc = dynamic_cast<const SplineCoxFit*>(&fit);
  Require(sc != nullptr, ErrorKind::kInternal, "spline Cox influence needs a spline Cox fit");
  const int q = sc->num_params();
  VectorXd grad = VectorXd::Zero(q), feat(q);
  for (std::size_t k = 0; k < f.times.size(); ++k) {
    sc->Features(f.times[k], f.covariates[k], feat.data());
    grad += f.coefficients[k] * feat;
  }
  const SplineDesign d = BuildSplineDesign(*sc, data, opt_.quadrature);
  const VectorXd eta = d.node_features.transpose() * sc->params();
  const VectorXd we = d.node_weights.cwiseProduct(eta.array().exp().matrix());
  const MatrixXd info = d.node_features * we.asDiagonal() * d.node_features.transpose() /
                        static_cast<double>(data.size());
  Eigen::LDLT<MatrixXd> ldlt(info);
  Require(ldlt.info() == Eigen::Success && ldlt.isPositive(), ErrorKind::kEstimation,
          "spline Cox influence: singular information");
  const VectorXd dir = ldlt.solve(grad);
  std::vector<double> phi(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::Index a = d.offsets[i], len = d.offsets[i + 1] - a;
    const VectorXd score = d.event_features.col(static_cast<Eigen::Index>(i)) -
                           d.node_features.middleCols(a, len) * we.segment(a, len);
    phi[i] = dir.dot(score);
  }
  return phi;
}

std::vector<std::vector<double>> JackknifeInfluence(const NullFitter& fitter,
                                                    const LogHazardModel& fit, const Dataset& data,
                                                    double horizon,
                                                    const std::vector<LinearFunctional>& fs) {
  const std::size_t m = data.size();
  Require(m >= 2, ErrorKind::kData, "jackknife needs at least two subjects");
  std::vector<double> full(fs.size());
  for (std::size_t k = 0; k < fs.size(); ++k) full[k] = fs[k].Apply(fit);
  std::vector<std::vector<double>> phi(fs.size(), std::vector<double>(m));
  std::vector<std::size_t> keep(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0, k = 0; j < m; ++j)
      if (j != i) keep[k++] = j;
    const auto refit = fitter.Refit(data.Subset(keep), horizon, fit);
    for (std::size_t k = 0; k < fs.size(); ++k)
      phi[k][i] = static_cast<double>(m - 1) * (full[k] - fs[k].Apply(*refit));
  }
  return phi;
}

std::vector<double> JackknifeInfluence(const NullFitter& fitter, const LogHazardModel& fit,
                                       const Dataset& data, double horizon,
                                       const LinearFunctional& f) {
  return JackknifeInfluence(fitter, fit, data, horizon, std::vector<LinearFunctional>{f}).front();
}

}  // namespace dnnh
