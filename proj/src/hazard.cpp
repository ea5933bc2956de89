#include "hazard.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace dnnh {

double CumHazardModel::CumHazard(double t, std::span<const double> x) const {
  double out = 0.0;
  CumHazardPath(x, std::span<const double>(&t, 1), std::span<double>(&out, 1));
  return out;
}

double CumHazardModel::Survival(double t, std::span<const double> x) const {
  return std::exp(-CumHazard(t, x));
}

double LogHazardModel::LogHazard(double t, std::span<const double> x) const {
  double out = 0.0;
  LogHazard(x, std::span<const double>(&t, 1), std::span<double>(&out, 1));
  return out;
}

nlohmann::json QuadratureSettings::ToJson() const {
  return {{"order", order},
          {"likelihood_subintervals", likelihood_subintervals},
          {"cum_subintervals_per_tau", cum_subintervals_per_tau},
          {"exp_clip", exp_clip}};
}

QuadratureSettings QuadratureSettings::FromJson(const nlohmann::json& j) {
  QuadratureSettings q;
  q.order = j.value("order", q.order);
  q.likelihood_subintervals = j.value("likelihood_subintervals", q.likelihood_subintervals);
  q.cum_subintervals_per_tau = j.value("cum_subintervals_per_tau", q.cum_subintervals_per_tau);
  q.exp_clip = j.value("exp_clip", q.exp_clip);
  Require(q.order >= 2, ErrorKind::kConfig, "quadrature order must be >= 2");
  Require(q.likelihood_subintervals >= 1 && q.cum_subintervals_per_tau >= 1, ErrorKind::kConfig,
          "quadrature subinterval counts must be positive");
  return q;
}

FittedHazard::FittedHazard(MlpNetwork net, double tau, std::vector<double> cov_min,
                           std::vector<double> cov_span, QuadratureSettings quad)
    : net_(std::move(net)),
      tau_(tau),
      cov_min_(std::move(cov_min)),
      cov_span_(std::move(cov_span)),
      quad_(quad) {
  Require(tau_ > 0.0 && std::isfinite(tau_), ErrorKind::kConfig, "tau must be positive");
  Require(cov_min_.size() == cov_span_.size(), ErrorKind::kShape, "scaling map size mismatch");
  Require(net_.input_dim() == static_cast<int>(cov_min_.size()) + 1, ErrorKind::kShape,
          "network input width must be 1 + covariate dimension");
  Require(quad_.order >= 2, ErrorKind::kConfig, "quadrature order must be >= 2");
  for (double s : cov_span_) Require(s > 0.0, ErrorKind::kConfig, "covariate span must be positive");
}

FittedHazard FittedHazard::ForData(MlpNetwork net, const Dataset& train, double tau,
                                   QuadratureSettings quad) {
  Require(!train.empty(), ErrorKind::kData, "cannot derive scaling from an empty dataset");
  std::vector<double> lo(train.p, INFINITY), hi(train.p, -INFINITY);
  for (const auto& s : train.subjects)
    for (int j = 0; j < train.p; ++j) {
      lo[j] = std::min(lo[j], s.x[j]);
      hi[j] = std::max(hi[j], s.x[j]);
    }
  std::vector<double> span(train.p);
  for (int j = 0; j < train.p; ++j) {
    span[j] = hi[j] - lo[j];
    if (!(span[j] > 0.0)) span[j] = 1.0;  // constant column
  }
  return FittedHazard(std::move(net), tau, std::move(lo), std::move(span), quad);
}

void FittedHazard::Encode(double t, std::span<const double> x, double* column) const {
  column[0] = t / tau_;
  for (std::size_t j = 0; j < cov_min_.size(); ++j)
    column[j + 1] = (x[j] - cov_min_[j]) / cov_span_[j];
}

std::vector<double> FittedHazard::ScaleCovariates(std::span<const double> x) const {
  Require(x.size() == cov_min_.size(), ErrorKind::kShape, "covariate dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - cov_min_[j]) / cov_span_[j];
  return out;
}

void FittedHazard::CheckTime(double t) const {
  Require(std::isfinite(t) && t >= 0.0 && t <= tau_ * (1.0 + 1e-9), ErrorKind::kDomain,
          "time " + std::to_string(t) + " outside [0, tau=" + std::to_string(tau_) + "]");
}

void FittedHazard::CheckProbe(std::span<const double> x) const {
  for (double v : ScaleCovariates(x))
    Require(v >= -1e-9 && v <= 1.0 + 1e-9, ErrorKind::kDomain,
            "probe covariate outside the training range [0,1] after scaling");
}

void FittedHazard::LogHazard(std::span<const double> x, std::span<const double> ts,
                             std::span<double> out) const {
  Require(x.size() == cov_min_.size(), ErrorKind::kShape, "covariate dimension mismatch");
  Require(out.size() == ts.size(), ErrorKind::kShape, "output size mismatch");
  if (ts.empty()) return;
  Matrix in(net_.input_dim(), static_cast<Eigen::Index>(ts.size()));
  for (std::size_t i = 0; i < ts.size(); ++i) Encode(ts[i], x, in.col(i).data());
  RowVector g = Forward(net_, in);
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = g(i);
}

namespace {

std::uint64_t IntegratePath(const LogHazardModel& model, double tau, const QuadratureSettings& quad,
                            std::span<const double> x, std::span<const double> ts,
                            std::span<double> out) {
  Require(out.size() == ts.size(), ErrorKind::kShape, "output size mismatch");
  if (ts.empty()) return 0;
  const QuadratureRule& rule = CachedGaussLegendre(quad.order);
  const int q = rule.order();
  const double h = tau / quad.cum_subintervals_per_tau;
  for (std::size_t i = 1; i < ts.size(); ++i)
    Require(ts[i] >= ts[i - 1], ErrorKind::kDomain, "path times must be nondecreasing");

  // Piece index of each t; the partial piece [k h, t] may be empty.
  std::vector<long> piece(ts.size());
  long kmax = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    piece[i] = static_cast<long>(std::floor(ts[i] / h));
    if (piece[i] * h > ts[i]) --piece[i];
    kmax = std::max(kmax, piece[i]);
  }

  std::vector<double> nodes;
  nodes.reserve(kmax * q + ts.size() * q);
  for (long k = 0; k < kmax; ++k)
    for (int j = 0; j < q; ++j) nodes.push_back((k + rule.nodes[j]) * h);
  const std::size_t full_count = nodes.size();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double a = piece[i] * h;
    for (int j = 0; j < q; ++j) nodes.push_back(a + (ts[i] - a) * rule.nodes[j]);
  }
  // Full-piece nodes are sorted; partial nodes are not globally sorted, but
  // LogHazard evaluates pointwise, so order only matters for the caller.
  std::vector<double> g(nodes.size());
  model.LogHazard(x, nodes, g);

  std::uint64_t clipped = 0;
  auto expc = [&](double v) {
    if (v > quad.exp_clip) {
      ++clipped;
      v = quad.exp_clip;
    }
    return std::exp(v);
  };

  std::vector<double> cum(kmax + 1, 0.0);
  for (long k = 0; k < kmax; ++k) {
    double s = 0.0;
    for (int j = 0; j < q; ++j) s += rule.weights[j] * expc(g[k * q + j]);
    cum[k + 1] = cum[k] + h * s;
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double a = piece[i] * h;
    double s = 0.0;
    for (int j = 0; j < q; ++j) s += rule.weights[j] * expc(g[full_count + i * q + j]);
    out[i] = cum[piece[i]] + (ts[i] - a) * s;
  }
  return clipped;
}

}  // namespace

void IntegrateLogHazardPath(const LogHazardModel& model, double tau, const QuadratureSettings& quad,
                            std::span<const double> x, std::span<const double> ts,
                            std::span<double> out) {
  IntegratePath(model, tau, quad, x, ts, out);
}

void FittedHazard::CumHazardPath(std::span<const double> x, std::span<const double> ts,
                                 std::span<double> out) const {
  for (double t : ts) CheckTime(t);
  AddClips(IntegratePath(*this, tau_, quad_, x, ts, out));
}

nlohmann::json FittedHazard::ToJson() const {
  return {{"kind", "fitted_hazard"},
          {"network", NetworkToJson(net_)},
          {"tau", tau_},
          {"time_scale", {{"offset", 0.0}, {"divisor", tau_}}},
          {"covariate_scale", {{"min", cov_min_}, {"span", cov_span_}}},
          {"quadrature", quad_.ToJson()}};
}

FittedHazard FittedHazard::FromJson(const nlohmann::json& j) {
  try {
    const auto& cs = j.at("covariate_scale");
    return FittedHazard(NetworkFromJson(j.at("network")), j.at("tau").get<double>(),
                        cs.at("min").get<std::vector<double>>(),
                        cs.at("span").get<std::vector<double>>(),
                        QuadratureSettings::FromJson(j.value("quadrature", nlohmann::json::object())));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kData, std::string("malformed fitted-hazard document: ") + e.what());
  }
}

double LogLikelihood(const LogHazardModel& model, const QuadratureSettings& quad, const Subject& z) {
  Require(std::isfinite(z.y) && z.y >= 0.0, ErrorKind::kDomain, "follow-up time must be >= 0");
  Require(quad.order >= 2, ErrorKind::kConfig, "quadrature order must be >= 2");
  const QuadratureRule& rule = CachedGaussLegendre(quad.order);
  std::vector<double> nodes, weights;
  CompositeNodes(rule, 0.0, z.y, quad.likelihood_subintervals, nodes, weights);
  nodes.push_back(z.y);
  std::vector<double> g(nodes.size());
  model.LogHazard(z.x, nodes, g);
  double integral = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k)
    integral += weights[k] * std::exp(std::min(g[k], quad.exp_clip));
  return (z.delta ? g.back() : 0.0) - integral;
}

double LogLikelihood(const FittedHazard& fh, const Subject& z) {
  return LogLikelihood(fh, fh.quadrature(), z);
}

LikelihoodPoints BuildLikelihoodPoints(const FittedHazard& fh, const Dataset& batch) {
  Require(!batch.empty(), ErrorKind::kData, "likelihood batch is empty");
  const QuadratureSettings& quad = fh.quadrature();
  const QuadratureRule& rule = CachedGaussLegendre(quad.order);
  const int per_subject_nodes = quad.likelihood_subintervals * rule.order();
  std::size_t cols = 0;
  for (const auto& s : batch.subjects) cols += per_subject_nodes + (s.delta ? 1 : 0);

  LikelihoodPoints pts;
  pts.clip = quad.exp_clip;
  pts.inputs.resize(fh.net().input_dim(), static_cast<Eigen::Index>(cols));
  pts.linear = RowVector::Zero(cols);
  pts.expo = RowVector::Zero(cols);
  pts.subject_offsets.reserve(batch.size() + 1);
  const double inv_m = 1.0 / static_cast<double>(batch.size());
  std::vector<double> nodes, weights;
  Eigen::Index c = 0;
  for (const auto& s : batch.subjects) {
    Require(std::isfinite(s.y) && s.y >= 0.0, ErrorKind::kDomain, "follow-up time must be >= 0");
    pts.subject_offsets.push_back(c);
    if (s.delta) {
      fh.Encode(s.y, s.x, pts.inputs.col(c).data());
      pts.linear(c) = -inv_m;
      ++c;
    }
    CompositeNodes(rule, 0.0, s.y, quad.likelihood_subintervals, nodes, weights);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      fh.Encode(nodes[k], s.x, pts.inputs.col(c).data());
      pts.expo(c) = weights[k] * inv_m;
      ++c;
    }
  }
  pts.subject_offsets.push_back(c);
  return pts;
}

LossEval EvaluateLoss(const MlpNetwork& net, const LikelihoodPoints& pts, NetworkGrad* grad) {
  constexpr Eigen::Index kChunk = 4096;
  LossEval result;
  const Eigen::Index n = pts.inputs.cols();
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const auto lin = pts.linear.segment(start, len);
    const auto ex = pts.expo.segment(start, len);
    double chunk_loss = 0.0;
    std::uint64_t clipped = 0;
    auto cotangents = [&](const RowVector& g) {
      RowVector cot(len);
      for (Eigen::Index i = 0; i < len; ++i) {
        double e;
        double de;
        if (g(i) > pts.clip) {
          e = std::exp(pts.clip);
          de = 0.0;
          if (ex(i) != 0.0) ++clipped;
        } else {
          e = std::exp(g(i));
          de = e;
        }
        chunk_loss += lin(i) * g(i) + ex(i) * e;
        cot(i) = lin(i) + ex(i) * de;
      }
      return cot;
    };
    const Matrix block = pts.inputs.middleCols(start, len);
    if (grad) {
      ForwardBackward(net, block, cotangents, *grad);
    } else {
      cotangents(Forward(net, block));
    }
    result.loss += chunk_loss;
    result.clipped += clipped;
  }
  return result;
}

LossAndGrad NegLogLikAndGrad(const FittedHazard& fh, const Dataset& batch) {
  const LikelihoodPoints pts = BuildLikelihoodPoints(fh, batch);
  LossAndGrad out;
  out.grad = NetworkGrad::ZerosLike(fh.net());
  const LossEval ev = EvaluateLoss(fh.net(), pts, &out.grad);
  fh.AddClips(ev.clipped);
  Require(std::isfinite(ev.loss), ErrorKind::kOptimization,
          "non-finite negative log-likelihood (exp overflow); lower the learning rate");
  out.loss = ev.loss;
  return out;
}

double ChfDiscrepancy(const CumHazardModel& truth, const CumHazardModel& estimate,
                      const Dataset& data) {
  double num = 0.0;
  std::size_t events = 0;
  for (const auto& s : data.subjects) {
    if (!s.delta) continue;
    ++events;
    num += std::abs(truth.CumHazard(s.y, s.x) - estimate.CumHazard(s.y, s.x));
  }
  Require(events > 0, ErrorKind::kMetricUndefined,
          "CHF discrepancy is undefined without events");
  return num / static_cast<double>(events);
}

}  // namespace dnnh
