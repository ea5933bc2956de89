#include "infer.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace dnnh {

void WeightSpec::Validate() const {
  Require(std::isfinite(rho) && std::isfinite(gamma) && rho >= 0.0 && gamma >= 0.0,
          ErrorKind::kConfig, "weight exponents must be finite and nonnegative");
}

std::string WeightSpec::Label() const {
  return "W(" + FormatDouble(rho) + "," + FormatDouble(gamma) + ")";
}

nlohmann::json WeightSpec::ToJson() const { return {{"rho", rho}, {"gamma", gamma}}; }

WeightSpec WeightSpec::FromJson(const nlohmann::json& j) {
  WeightSpec w;
  try {
    if (j.is_array()) {
      Require(j.size() == 2, ErrorKind::kConfig, "weight spec array needs [rho, gamma]");
      w.rho = j[0].get<double>();
      w.gamma = j[1].get<double>();
    } else {
      w.rho = j.value("rho", 0.0);
      w.gamma = j.value("gamma", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("malformed weight spec: ") + e.what());
  }
  w.Validate();
  return w;
}

std::vector<WeightSpec> StandardWeights() { return {{0, 0}, {1, 0}, {0.5, 0.5}, {1, 1}}; }

nlohmann::json TestReport::ToJson() const {
  nlohmann::json j = {{"kind", kind},
                      {"statistic", statistic},
                      {"variance", variance},
                      {"z", z},
                      {"p_value", p_value},
                      {"alpha", alpha},
                      {"reject", reject},
                      {"weight", weight.ToJson()},
                      {"n", n},
                      {"events", events}};
  if (n1 || n2) {
    j["n1"] = n1;
    j["n2"] = n2;
  }
  if (!variance_mode.empty()) j["variance_mode"] = variance_mode;
  if (influence_statistic) j["influence_statistic"] = *influence_statistic;
  return j;
}

void Finalize(TestReport& r) {
  Require(std::isfinite(r.variance) && r.variance > 0.0, ErrorKind::kDegenerate,
          "test variance estimate is zero or not finite");
  r.z = r.statistic / std::sqrt(r.variance);
  r.p_value = TwoSidedPValue(r.z);
  r.reject = std::abs(r.z) > CriticalValue(r.alpha);
}

RiskSet::RiskSet(const Dataset& data) {
  sorted_.reserve(data.size());
  for (const auto& s : data.subjects) sorted_.push_back(s.y);
  std::sort(sorted_.begin(), sorted_.end());
}

double RiskSet::Fraction(double t) const {
  if (sorted_.empty()) return 0.0;
  const auto first = std::lower_bound(sorted_.begin(), sorted_.end(), t);
  return static_cast<double>(sorted_.end() - first) / static_cast<double>(sorted_.size());
}

namespace {

double WeightFromParts(double risk, double surv, const WeightSpec& spec) {
  double w = risk;
  if (spec.rho != 0.0) w *= std::pow(surv, spec.rho);
  if (spec.gamma != 0.0) w *= std::pow(1.0 - surv, spec.gamma);
  return w;
}

bool NeedsSurvival(const std::vector<WeightSpec>& specs) {
  for (const auto& s : specs)
    if (s.rho != 0.0 || s.gamma != 0.0) return true;
  return false;
}

}  // namespace

double FhWeight(const RiskSet& risk, const CumHazardModel* survival, const WeightSpec& spec,
                double t, std::span<const double> x) {
  spec.Validate();
  double s = 1.0;
  if (spec.rho != 0.0 || spec.gamma != 0.0) {
    Require(survival != nullptr, ErrorKind::kConfig, "weight needs a survival model");
    s = survival->Survival(t, x);
  }
  return WeightFromParts(risk.Fraction(t), s, spec);
}

void MixtureCumHazard::CumHazardPath(std::span<const double> x, std::span<const double> ts,
                                     std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> part(ts.size());
  for (const auto& [w, m] : parts_) {
    m->CumHazardPath(x, ts, part);
    for (std::size_t i = 0; i < ts.size(); ++i) out[i] += w * part[i];
  }
}

double Psi(const LogHazardModel& g, const PathFn& h, const Subject& z,
           const QuadratureSettings& quad) {
  Require(std::isfinite(z.y) && z.y >= 0.0, ErrorKind::kDomain, "follow-up time must be >= 0");
  std::vector<double> nodes, weights;
  CompositeNodes(CachedGaussLegendre(quad.order), 0.0, z.y, quad.likelihood_subintervals, nodes,
                 weights);
  nodes.push_back(z.y);
  std::vector<double> gv(nodes.size()), hv(nodes.size());
  g.LogHazard(z.x, nodes, gv);
  h(z.x, nodes, hv);
  double integral = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k)
    integral += weights[k] * std::exp(std::min(gv[k], quad.exp_clip)) * hv[k];
  return (z.delta ? hv.back() : 0.0) - integral;
}

namespace {

// Quadrature nodes on [0, Y] (Y appended last) with the at-risk fraction and
// survival at each node, shared by every weight spec.
struct SubjectGrid {
  std::vector<double> ts;
  std::vector<double> w;
  std::vector<double> risk;
  std::vector<double> surv;

  double Weight(std::size_t k, const WeightSpec& spec) const {
    return WeightFromParts(risk[k], surv.empty() ? 1.0 : surv[k], spec);
  }
};

std::vector<SubjectGrid> BuildGrids(const Dataset& data, const RiskSet& risk,
                                    const CumHazardModel* survival, const QuadratureSettings& quad) {
  const QuadratureRule& rule = CachedGaussLegendre(quad.order);
  std::vector<SubjectGrid> grids(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data.subjects[i];
    SubjectGrid& g = grids[i];
    CompositeNodes(rule, 0.0, s.y, quad.likelihood_subintervals, g.ts, g.w);
    g.ts.push_back(s.y);
    g.risk.resize(g.ts.size());
    for (std::size_t k = 0; k < g.ts.size(); ++k) g.risk[k] = risk.Fraction(g.ts[k]);
    if (survival) {
      g.surv.resize(g.ts.size());
      survival->CumHazardPath(s.x, g.ts, g.surv);
      for (double& v : g.surv) v = std::exp(-v);
    }
  }
  return grids;
}

// Log-hazard of `model` on every node of each listed subject.
std::vector<std::vector<double>> NodeLogHazards(const Dataset& data,
                                                const std::vector<SubjectGrid>& grids,
                                                const LogHazardModel& model, std::size_t begin,
                                                std::size_t end) {
  std::vector<std::vector<double>> out(data.size());
  for (std::size_t i = begin; i < end; ++i) {
    out[i].resize(grids[i].ts.size());
    model.LogHazard(data.subjects[i].x, grids[i].ts, out[i]);
  }
  return out;
}

double PsiOnGrid(const Subject& s, const SubjectGrid& g, const std::vector<double>& logh,
                 const WeightSpec& spec, double clip) {
  double integral = 0.0;
  for (std::size_t k = 0; k < g.w.size(); ++k)
    integral += g.w[k] * std::exp(std::min(logh[k], clip)) * g.Weight(k, spec);
  return (s.delta ? g.Weight(g.ts.size() - 1, spec) : 0.0) - integral;
}

void RequireEventCount(const Dataset& d, std::size_t min_events, const char* what) {
  Require(d.events() >= min_events, ErrorKind::kDegenerate,
          std::string(what) + ": needs at least " + std::to_string(min_events) +
              " events, found " + std::to_string(d.events()));
}

}  // namespace

std::vector<TestReport> OneSampleTests(const Dataset& data, const LogHazardModel& fit,
                                       const LogHazardModel& null_model,
                                       const std::vector<WeightSpec>& specs,
                                       const TestOptions& opt) {
  Require(!specs.empty(), ErrorKind::kConfig, "no weight specs given");
  for (const auto& s : specs) s.Validate();
  RequireEventCount(data, opt.min_events, "one-sample test");
  const RiskSet risk(data);
  const auto grids =
      BuildGrids(data, risk, NeedsSurvival(specs) ? &fit : nullptr, opt.quadrature);
  const auto logh = NodeLogHazards(data, grids, fit, 0, data.size());
  std::vector<double> diff(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.subjects[i].delta)
      diff[i] = logh[i].back() - null_model.LogHazard(data.subjects[i].y, data.subjects[i].x);

  const double n = static_cast<double>(data.size());
  std::vector<TestReport> out;
  for (const auto& spec : specs) {
    double stat = 0.0, psi_sum = 0.0, psi_sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Subject& s = data.subjects[i];
      const SubjectGrid& g = grids[i];
      if (s.delta) stat += g.Weight(g.ts.size() - 1, spec) * diff[i];
      const double psi = PsiOnGrid(s, g, logh[i], spec, opt.quadrature.exp_clip);
      psi_sum += psi;
      psi_sq += psi * psi;
    }
    TestReport r;
    r.kind = "one_sample";
    r.statistic = stat / std::sqrt(n);
    r.variance = psi_sq / n;
    r.alpha = opt.alpha;
    r.weight = spec;
    r.n = data.size();
    r.events = data.events();
    r.influence_statistic = psi_sum / std::sqrt(n);
    Finalize(r);
    out.push_back(r);
  }
  return out;
}

TestReport OneSampleTest(const Dataset& data, const LogHazardModel& fit,
                         const LogHazardModel& null_model, const WeightSpec& spec,
                         const TestOptions& opt) {
  return OneSampleTests(data, fit, null_model, {spec}, opt).front();
}

const char* VarianceModeName(VarianceMode m) {
  return m == VarianceMode::kSplit ? "split" : "pooled";
}

VarianceMode ParseVarianceMode(const std::string& s) {
  if (s == "split") return VarianceMode::kSplit;
  if (s == "pooled") return VarianceMode::kPooled;
  Fail(ErrorKind::kConfig, "unknown variance mode '" + s + "' (split|pooled)");
}

std::vector<TestReport> TwoSampleTests(const Dataset& data1, const Dataset& data2,
                                       const LogHazardModel& fit1, const LogHazardModel& fit2,
                                       const std::vector<WeightSpec>& specs, VarianceMode mode,
                                       const LogHazardModel* pooled_fit,
                                       const TestOptions& opt) {
  Require(!specs.empty(), ErrorKind::kConfig, "no weight specs given");
  for (const auto& s : specs) s.Validate();
  Require(data1.p == data2.p, ErrorKind::kData, "samples differ in covariate dimension");
  RequireEventCount(data1, opt.min_events, "two-sample test (sample 1)");
  RequireEventCount(data2, opt.min_events, "two-sample test (sample 2)");
  Require(mode == VarianceMode::kSplit || pooled_fit != nullptr, ErrorKind::kConfig,
          "pooled variance mode needs a fit on the pooled sample");

  const Dataset pooled = Dataset::Concat(data1, data2);
  const std::size_t n1 = data1.size(), n2 = data2.size(), n = n1 + n2;
  const double nd = static_cast<double>(n);
  MixtureCumHazard mixture;
  mixture.Add(static_cast<double>(n1) / nd, &fit1);
  mixture.Add(static_cast<double>(n2) / nd, &fit2);
  const CumHazardModel* survival = mode == VarianceMode::kSplit
                                       ? static_cast<const CumHazardModel*>(&mixture)
                                       : pooled_fit;
  const RiskSet risk(pooled);
  const auto grids =
      BuildGrids(pooled, risk, NeedsSurvival(specs) ? survival : nullptr, opt.quadrature);

  // Node log-hazards of the model whose influence each subject carries.
  std::vector<std::vector<double>> logh(n);
  {
    auto a = NodeLogHazards(pooled, grids, mode == VarianceMode::kSplit ? fit1 : *pooled_fit, 0, n1);
    auto b = NodeLogHazards(pooled, grids, mode == VarianceMode::kSplit ? fit2 : *pooled_fit, n1, n);
    for (std::size_t i = 0; i < n1; ++i) logh[i] = std::move(a[i]);
    for (std::size_t i = n1; i < n; ++i) logh[i] = std::move(b[i]);
  }
  std::vector<double> diff(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& s = pooled.subjects[i];
    if (s.delta) diff[i] = fit1.LogHazard(s.y, s.x) - fit2.LogHazard(s.y, s.x);
  }

  std::vector<TestReport> out;
  for (const auto& spec : specs) {
    double stat = 0.0, sq1 = 0.0, sq2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Subject& s = pooled.subjects[i];
      const SubjectGrid& g = grids[i];
      if (s.delta) stat += g.Weight(g.ts.size() - 1, spec) * diff[i];
      const double psi = PsiOnGrid(s, g, logh[i], spec, opt.quadrature.exp_clip);
      (i < n1 ? sq1 : sq2) += psi * psi;
    }
    TestReport r;
    r.kind = "two_sample";
    r.statistic = stat / std::sqrt(nd);
    if (mode == VarianceMode::kSplit) {
      r.variance = (nd / n1) * (sq1 / n1) + (nd / n2) * (sq2 / n2);
    } else {
      r.variance = nd * nd / (static_cast<double>(n1) * n2) * ((sq1 + sq2) / nd);
    }
    r.variance_mode = VarianceModeName(mode);
    r.alpha = opt.alpha;
    r.weight = spec;
    r.n = n;
    r.n1 = n1;
    r.n2 = n2;
    r.events = pooled.events();
    Finalize(r);
    out.push_back(r);
  }
  return out;
}

std::vector<TestReport> GofTestsFromFits(const Dataset& dnn_sample, const Dataset& null_sample,
                                         const LogHazardModel& dnn_fit,
                                         const NullFitter& null_fitter,
                                         const LogHazardModel& null_fit, double horizon,
                                         const std::vector<WeightSpec>& specs,
                                         const GofOptions& opt) {
  Require(!specs.empty(), ErrorKind::kConfig, "no weight specs given");
  for (const auto& s : specs) s.Validate();
  RequireEventCount(dnn_sample, opt.test.min_events, "goodness-of-fit test (DNN sample)");
  RequireEventCount(null_sample, opt.test.min_events, "goodness-of-fit test (null sample)");
  const Dataset eval = Dataset::Concat(dnn_sample, null_sample);
  const std::size_t n1 = dnn_sample.size(), n2 = null_sample.size(), n = n1 + n2;
  const double nd = static_cast<double>(n);
  const LogHazardModel& g0 = opt.diagnostic ? dnn_fit : null_fit;

  const RiskSet risk(eval);
  const auto grids =
      BuildGrids(eval, risk, NeedsSurvival(specs) ? &dnn_fit : nullptr, opt.test.quadrature);
  // Diagnostic mode takes the DNN influence on the null sample as well.
  const auto logh = NodeLogHazards(eval, grids, dnn_fit, 0, opt.diagnostic ? n : n1);
  std::vector<double> diff(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& s = eval.subjects[i];
    if (s.delta) diff[i] = dnn_fit.LogHazard(s.y, s.x) - g0.LogHazard(s.y, s.x);
  }

  // F(g) = (1/n) sum Delta_i W(Y_i, X_i) g(Y_i, X_i) for each spec.
  std::vector<LinearFunctional> fs(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const Subject& s = eval.subjects[i];
      if (!s.delta) continue;
      fs[k].times.push_back(s.y);
      fs[k].covariates.push_back(s.x);
      fs[k].coefficients.push_back(grids[i].Weight(grids[i].ts.size() - 1, specs[k]) / nd);
    }

  std::vector<std::vector<double>> phi(specs.size());
  std::string mode_label = "diagnostic";
  if (!opt.diagnostic) {
    bool analytic = opt.influence == InfluenceMode::kAnalytic;
    if (analytic) {
      for (std::size_t k = 0; k < specs.size() && analytic; ++k) {
        auto v = null_fitter.Influence(null_fit, null_sample, fs[k]);
        if (!v) analytic = false;
        else phi[k] = std::move(*v);
      }
    }
    if (!analytic) phi = JackknifeInfluence(null_fitter, null_fit, null_sample, horizon, fs);
    mode_label = std::string(null_fitter.name()) + (analytic ? "_influence" : "_jackknife");
  }

  std::vector<TestReport> out;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const WeightSpec& spec = specs[k];
    double stat = 0.0, sq1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Subject& s = eval.subjects[i];
      if (s.delta) stat += grids[i].Weight(grids[i].ts.size() - 1, spec) * diff[i];
    }
    for (std::size_t i = 0; i < n1; ++i) {
      const double psi =
          PsiOnGrid(eval.subjects[i], grids[i], logh[i], spec, opt.test.quadrature.exp_clip);
      sq1 += psi * psi;
    }
    double var2 = 0.0;
    if (opt.diagnostic) {
      for (std::size_t i = n1; i < n; ++i) {
        const double psi =
            PsiOnGrid(eval.subjects[i], grids[i], logh[i], spec, opt.test.quadrature.exp_clip);
        var2 += psi * psi;
      }
      var2 /= static_cast<double>(n2);
    } else {
      Require(phi[k].size() == n2, ErrorKind::kInternal, "null influence count mismatch");
      double mean = 0.0;
      for (double v : phi[k]) mean += v;
      mean /= static_cast<double>(n2);
      for (double v : phi[k]) var2 += (v - mean) * (v - mean);
      var2 /= static_cast<double>(n2);
    }
    TestReport r;
    r.kind = "goodness_of_fit";
    r.statistic = stat / std::sqrt(nd);
    r.variance = (nd / n1) * (sq1 / n1) + (nd / n2) * var2;
    r.variance_mode = mode_label;
    r.alpha = opt.test.alpha;
    r.weight = spec;
    r.n = n;
    r.n1 = n1;
    r.n2 = n2;
    r.events = eval.events();
    Finalize(r);
    out.push_back(r);
  }
  return out;
}

GofResult GofTests(const Dataset& data, const NullFitter& null_fitter, const TrainConfig& cfg,
                   const std::vector<WeightSpec>& specs, std::uint64_t seed,
                   const GofOptions& opt) {
  GofResult res;
  res.parts = SplitDataset(data.size(), opt.split, DeriveSeed(seed, {0}));
  const Dataset train = data.Subset(res.parts.train);
  const Dataset null_sample = data.Subset(res.parts.test);
  TrainConfig c = cfg;
  c.seed = DeriveSeed(seed, {1});
  res.dnn = FitSplit(train, data.Subset(res.parts.validation), data.tau, c);
  if (opt.diagnostic) {
    res.null_fit = std::make_shared<FittedHazard>(res.dnn.model);
  } else {
    res.null_fit = null_fitter.Fit(null_sample, data.tau);
  }
  res.reports = GofTestsFromFits(train, null_sample, res.dnn.model, null_fitter, *res.null_fit,
                                 data.tau, specs, opt);
  return res;
}

nlohmann::json MonteCarloResult::ToJson() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns)
    cols.push_back({{"label", c.label},
                    {"rejections", c.rejections},
                    {"rate", c.rate},
                    {"ci", {c.ci.lo, c.ci.hi}}});
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& [r, msg] : failures) fails.push_back({{"replication", r}, {"error", msg}});
  return {{"replications", replications},
          {"completed", completed},
          {"failures", fails},
          {"columns", cols}};
}

MonteCarloResult MonteCarloRejectionRates(
    std::size_t replications, std::uint64_t seed, const std::vector<std::string>& labels,
    const std::function<std::vector<TestReport>(std::uint64_t rep_seed, std::size_t rep)>& run,
    double level, std::size_t workers) {
  Require(replications >= 1, ErrorKind::kConfig, "replications must be >= 1");
  Require(!labels.empty(), ErrorKind::kConfig, "no result columns");
  std::vector<std::vector<TestReport>> outcomes(replications);
  std::vector<std::string> errors(replications);
  ParallelFor(replications, workers, [&](std::size_t r) {
    try {
      outcomes[r] = run(DeriveSeed(seed, {r}), r);
      Require(outcomes[r].size() == labels.size(), ErrorKind::kInternal,
              "replication returned the wrong number of reports");
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kInternal) throw;
      outcomes[r].clear();
      errors[r] = std::string(ErrorKindName(e.kind())) + ": " + e.what();
    }
  });

  MonteCarloResult res;
  res.replications = replications;
  res.columns.resize(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) res.columns[k].label = labels[k];
  for (std::size_t r = 0; r < replications; ++r) {
    if (!errors[r].empty()) {
      res.failures.emplace_back(r, errors[r]);
      continue;
    }
    ++res.completed;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      res.columns[k].rejections += outcomes[r][k].reject ? 1 : 0;
      res.columns[k].z.push_back(outcomes[r][k].z);
    }
  }
  for (auto& c : res.columns) {
    if (res.completed == 0) {
      c.rate = std::nan("");
      c.ci = {0.0, 1.0};
    } else {
      c.rate = static_cast<double>(c.rejections) / static_cast<double>(res.completed);
      c.ci = ClopperPearson(c.rejections, res.completed, level);
    }
  }
  return res;
}

MonteCarloResult MonteCarloRejectionRate(
    std::size_t replications, std::uint64_t seed,
    const std::function<TestReport(std::uint64_t rep_seed, std::size_t rep)>& run, double level,
    std::size_t workers) {
  return MonteCarloRejectionRates(
      replications, seed, {"rate"},
      [&](std::uint64_t s, std::size_t r) { return std::vector<TestReport>{run(s, r)}; }, level,
      workers);
}

}  // namespace dnnh
