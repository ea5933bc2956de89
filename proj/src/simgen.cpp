#include "simgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"
#include "stats.hpp"

namespace dnnh {

namespace {

struct FamilyInfo {
  Family family;
  const char* name;
};

constexpr FamilyInfo kFamilies[] = {
    {Family::kCoxI, "CoxI"},       {Family::kCoxII, "CoxII"},     {Family::kAhI, "AhI"},
    {Family::kAhII, "AhII"},       {Family::kAftI, "AftI"},       {Family::kAftII, "AftII"},
    {Family::kCoxTest, "CoxTest"}, {Family::kAhTest, "AhTest"},   {Family::kAftTest, "AftTest"},
};

enum class Kind { kCox, kAh, kAftNormal, kAftGumbel };

Kind KindOf(Family f) {
  switch (f) {
    case Family::kCoxI:
    case Family::kCoxII:
    case Family::kCoxTest:
      return Kind::kCox;
    case Family::kAhI:
    case Family::kAhII:
    case Family::kAhTest:
      return Kind::kAh;
    case Family::kAftI:
    case Family::kAftII:
      return Kind::kAftNormal;
    case Family::kAftTest:
      return Kind::kAftGumbel;
  }
  return Kind::kCox;
}

double Nonlinear(std::span<const double> x, double a1, double a2, double a3, double a4) {
  return a1 * x[0] * x[0] + a2 * x[1] * x[1] + a3 * x[2] * x[2] * x[2] +
         a4 * std::sqrt(x[3] + 1.0) * std::log(x[4] + 1.0);
}

double WeightedSum(std::span<const double> x) {
  return x[0] + 2.0 * x[1] + 3.0 * x[2] + 4.0 * x[3] + 5.0 * x[4];
}

// Offset a in the time component 0.1 (t + a).
double TimeOffset(const SimScenario& sc) { return sc.gof_design ? 1.0 : 0.01; }

// Cox: linear predictor eta(x) in lambda = 0.1 (t + a) exp(eta).
double CoxIndex(const SimScenario& sc, std::span<const double> x) {
  switch (sc.family) {
    case Family::kCoxI:
      return (x[0] + x[1] + x[2] + x[3] + x[4]) / 20.0;
    case Family::kCoxII:
      return sc.gof_design ? Nonlinear(x, 2.0, 4.0, 2.0, 4.0) / 20.0
                           : Nonlinear(x, 2.0, 4.0, 2.0, 1.0);
    default:
      return WeightedSum(x) / 100.0;
  }
}

// AH: covariate term r(x) in lambda = 0.1 (t + a) + r(x).
double AhTerm(const SimScenario& sc, std::span<const double> x) {
  switch (sc.family) {
    case Family::kAhI:
      return (-x[0] + x[1] - x[2] + x[3] - x[4] + 15.0) / 30.0;
    case Family::kAhII:
      return std::abs(Nonlinear(x, -1.0, 2.0, -1.0, 1.0)) / 2.0;
    default:
      return WeightedSum(x) / 100.0;
  }
}

// AFT location m(x) in log T = m(x) + eps.
double AftLocation(const SimScenario& sc, std::span<const double> x) {
  switch (sc.family) {
    case Family::kAftI:
      return (x[0] + x[1] + x[2] + x[3] + x[4]) / 20.0;
    case Family::kAftII:
      return std::cos(Nonlinear(x, 1.0, 2.0, 1.0, 1.0) / 20.0);
    default:
      return WeightedSum(x) / 5.0;
  }
}

// -log S_eps(z) for the AFT error law.
double ErrorCumHazard(Kind kind, double z) {
  if (kind == Kind::kAftNormal) {
    const double sf = NormalSf(z);
    if (sf > 0.0) return -std::log(sf);
    // log(1-Phi(z)) ~ -z^2/2 - log(z sqrt(2 pi)) for large z.
    return 0.5 * z * z + std::log(z * std::sqrt(2.0 * M_PI));
  }
  // Standard Gumbel (maximum): F(z) = exp(-e^{-z}), S = 1 - F.
  const double u = std::exp(-z);
  return -std::log(-std::expm1(-u));
}

double ErrorHazard(Kind kind, double z) {
  if (kind == Kind::kAftNormal) return InverseMillsRatio(z);
  const double u = std::exp(-z);
  if (u < 1e-12) return u / (1.0 - 0.5 * u);  // -expm1(-u) ~ u
  return u * std::exp(-u) / (-std::expm1(-u));
}

void CheckCovariates(const SimScenario& sc, std::span<const double> x) {
  Require(x.size() == static_cast<std::size_t>(sc.p()), ErrorKind::kShape,
          "scenario covariates must have dimension 5");
}

}  // namespace

const char* FamilyName(Family f) {
  for (const auto& info : kFamilies)
    if (info.family == f) return info.name;
  return "?";
}

Family ParseFamily(const std::string& name) {
  for (const auto& info : kFamilies)
    if (name == info.name) return info.family;
  Fail(ErrorKind::kConfig, "unknown scenario family '" + name + "'");
}

SimScenario SimScenario::Make(Family family, double target_censor_rate) {
  SimScenario sc;
  sc.family = family;
  sc.target_censor_rate = target_censor_rate;
  if (family == Family::kAhTest) sc.delta0 = 1e-8;
  return sc;
}

bool SimScenario::unit_cube_covariates() const {
  switch (family) {
    case Family::kCoxTest:
    case Family::kAhTest:
    case Family::kAftTest:
      return true;
    default:
      return gof_design;
  }
}

double SimScenario::hazard_multiplier() const {
  return KindOf(family) == Kind::kAh ? std::exp(shift / 5.0) : std::exp(shift);
}

nlohmann::json SimScenario::ToJson() const {
  nlohmann::json j = {{"family", FamilyName(family)},
                      {"shift", shift},
                      {"gof_design", gof_design},
                      {"delta0", delta0}};
  j["censoring_mean"] = censoring_mean ? nlohmann::json(*censoring_mean) : nlohmann::json();
  j["target_censor_rate"] =
      target_censor_rate ? nlohmann::json(*target_censor_rate) : nlohmann::json();
  j["tau"] = tau ? nlohmann::json(*tau) : nlohmann::json();
  j["covariate_law"] = unit_cube_covariates() ? "uniform[0,1]^5" : "uniform[-1,1]^5";
  return j;
}

SimScenario SimScenario::FromJson(const nlohmann::json& j) {
  try {
    SimScenario sc = Make(ParseFamily(j.at("family").get<std::string>()), 0.4);
    sc.target_censor_rate.reset();
    sc.shift = j.value("shift", 0.0);
    sc.gof_design = j.value("gof_design", false);
    if (j.contains("delta0")) sc.delta0 = j["delta0"].get<double>();
    auto opt = [&](const char* key, std::optional<double>& field) {
      if (j.contains(key) && !j[key].is_null()) field = j[key].get<double>();
    };
    opt("censoring_mean", sc.censoring_mean);
    opt("target_censor_rate", sc.target_censor_rate);
    opt("tau", sc.tau);
    if (!sc.censoring_mean && !sc.target_censor_rate) sc.target_censor_rate = 0.4;
    if (sc.target_censor_rate)
      Require(*sc.target_censor_rate > 0.0 && *sc.target_censor_rate < 1.0, ErrorKind::kConfig,
              "target censoring rate must be in (0,1)");
    if (sc.censoring_mean)
      Require(*sc.censoring_mean > 0.0, ErrorKind::kConfig, "censoring mean must be positive");
    Require(sc.delta0 >= 0.0, ErrorKind::kConfig, "delta0 must be nonnegative");
    return sc;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("malformed scenario: ") + e.what());
  }
}

double TrueCumHazard(const SimScenario& sc, double t, std::span<const double> x) {
  CheckCovariates(sc, x);
  Require(t >= 0.0, ErrorKind::kDomain, "time must be nonnegative");
  if (t == 0.0) return 0.0;
  const double k = sc.hazard_multiplier();
  const double a = TimeOffset(sc);
  const double base = 0.05 * t * t + 0.1 * a * t;
  switch (KindOf(sc.family)) {
    case Kind::kCox:
      return k * (base * std::exp(CoxIndex(sc, x)) + sc.delta0 * t);
    case Kind::kAh:
      return k * (base + (AhTerm(sc, x) + sc.delta0) * t);
    case Kind::kAftNormal:
    case Kind::kAftGumbel: {
      const Kind kind = KindOf(sc.family);
      return k * (ErrorCumHazard(kind, std::log(t) - AftLocation(sc, x)) + sc.delta0 * t);
    }
  }
  return 0.0;
}

double TrueHazard(const SimScenario& sc, double t, std::span<const double> x) {
  CheckCovariates(sc, x);
  Require(t >= 0.0, ErrorKind::kDomain, "time must be nonnegative");
  const double k = sc.hazard_multiplier();
  const double a = TimeOffset(sc);
  switch (KindOf(sc.family)) {
    case Kind::kCox:
      return k * (0.1 * (t + a) * std::exp(CoxIndex(sc, x)) + sc.delta0);
    case Kind::kAh:
      return k * (0.1 * (t + a) + AhTerm(sc, x) + sc.delta0);
    case Kind::kAftNormal:
    case Kind::kAftGumbel: {
      if (t == 0.0) return k * sc.delta0;
      const double z = std::log(t) - AftLocation(sc, x);
      return k * (ErrorHazard(KindOf(sc.family), z) / t + sc.delta0);
    }
  }
  return 0.0;
}

double TrueLogHazard(const SimScenario& sc, double t, std::span<const double> x) {
  return std::log(TrueHazard(sc, t, x));
}

double SampleEventTime(const SimScenario& sc, std::span<const double> x, double e) {
  CheckCovariates(sc, x);
  Require(e >= 0.0, ErrorKind::kDomain, "exponential draw must be nonnegative");
  constexpr double kTiny = std::numeric_limits<double>::min();
  if (e == 0.0) return kTiny;
  const double target = e / sc.hazard_multiplier();
  const double a = TimeOffset(sc);
  double t = 0.0;
  // 0.05 t^2 + b t = c  =>  t = 2c / (b + sqrt(b^2 + 0.2 c)).
  auto quadratic = [](double b, double c) { return 2.0 * c / (b + std::sqrt(b * b + 0.2 * c)); };
  switch (KindOf(sc.family)) {
    case Kind::kCox: {
      const double scale = std::exp(CoxIndex(sc, x));
      if (sc.delta0 == 0.0) {
        t = quadratic(0.1 * a, target / scale);
      } else {
        t = quadratic(0.1 * a + sc.delta0 / scale, target / scale);
      }
      break;
    }
    case Kind::kAh:
      t = quadratic(0.1 * a + AhTerm(sc, x) + sc.delta0, target);
      break;
    case Kind::kAftNormal:
    case Kind::kAftGumbel: {
      Require(sc.delta0 == 0.0, ErrorKind::kConfig, "delta0 is not supported for AFT families");
      const double m = AftLocation(sc, x);
      double z;
      if (KindOf(sc.family) == Kind::kAftNormal) {
        // 1 - Phi(z) = exp(-target).
        const double u = std::exp(-target);
        if (u <= 0.0) {
          z = std::sqrt(2.0 * target);
        } else if (u >= 1.0) {
          return kTiny;
        } else {
          z = -NormalQuantile(u);
        }
      } else {
        // 1 - exp(-e^{-z}) = exp(-target)  =>  e^{-z} = -log(1 - exp(-target)).
        const double w = -std::log(-std::expm1(-target));
        z = -std::log(w);
      }
      t = std::exp(m + z);
      break;
    }
  }
  Require(!std::isnan(t), ErrorKind::kInternal, "event-time inversion produced NaN");
  if (t <= 0.0) return kTiny;
  if (!std::isfinite(t)) return std::numeric_limits<double>::max();
  return t;
}

double SampleEventTime(const SimScenario& sc, std::span<const double> x, Rng& rng) {
  return SampleEventTime(sc, x, rng.Exponential());
}

std::vector<double> SampleCovariates(const SimScenario& sc, Rng& rng) {
  std::vector<double> x(sc.p());
  const bool unit = sc.unit_cube_covariates();
  for (double& v : x) v = unit ? rng.Uniform() : rng.Uniform(-1.0, 1.0);
  return x;
}

namespace {

struct Pilot {
  std::vector<double> event_times;
  std::vector<double> censor_draws;  // unit exponential; C = mu * draw
};

Pilot DrawPilot(const SimScenario& sc, std::size_t n, std::uint64_t seed) {
  Pilot p;
  p.event_times.resize(n);
  p.censor_draws.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(DeriveSeed(seed, {i}));
    auto x = SampleCovariates(sc, rng);
    p.event_times[i] = SampleEventTime(sc, x, rng);
    p.censor_draws[i] = rng.Exponential();
  }
  return p;
}

double CensoredFraction(const Pilot& p, double mu) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < p.event_times.size(); ++i)
    c += (mu * p.censor_draws[i] < p.event_times[i]) ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(p.event_times.size());
}

}  // namespace

double PilotCensoringRate(const SimScenario& sc, double mu, std::size_t n_pilot,
                          std::uint64_t seed) {
  Require(n_pilot > 0 && mu > 0.0, ErrorKind::kConfig, "pilot needs n > 0 and mu > 0");
  return CensoredFraction(DrawPilot(sc, n_pilot, seed), mu);
}

double CalibrateCensoring(const SimScenario& sc, double target_rate, std::size_t n_pilot,
                          std::uint64_t seed) {
  Require(target_rate > 0.0 && target_rate < 1.0, ErrorKind::kConfig,
          "target censoring rate must be in (0,1)");
  Require(n_pilot > 0, ErrorKind::kConfig, "pilot size must be positive");
  const Pilot pilot = DrawPilot(sc, n_pilot, seed);
  double lo = std::log(1e-3), hi = std::log(1e3);
  // Censoring fraction decreases in mu.
  if (CensoredFraction(pilot, std::exp(lo)) < target_rate ||
      CensoredFraction(pilot, std::exp(hi)) > target_rate)
    Fail(ErrorKind::kCalibration, "censoring mean bracket [1e-3, 1e3] does not contain target " +
                                      std::to_string(target_rate));
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (CensoredFraction(pilot, std::exp(mid)) > target_rate)
      lo = mid;
    else
      hi = mid;
  }
  const double mu = std::exp(0.5 * (lo + hi));
  const double achieved = CensoredFraction(pilot, mu);
  Require(std::abs(achieved - target_rate) < 0.005, ErrorKind::kCalibration,
          "censoring calibration reached only " + std::to_string(achieved));
  return mu;
}

double PilotHorizon(const SimScenario& sc, double mu, std::size_t n_pilot, std::uint64_t seed) {
  const Pilot pilot = DrawPilot(sc, n_pilot, seed);
  std::vector<double> y(n_pilot);
  for (std::size_t i = 0; i < n_pilot; ++i)
    y[i] = std::min(pilot.event_times[i], mu * pilot.censor_draws[i]);
  return Quantile(std::move(y), 0.999);
}

SimScenario PrepareScenario(SimScenario sc, std::uint64_t seed, std::size_t n_pilot) {
  // The pilot uses the unshifted law so two-sample designs share mu and tau.
  SimScenario base = sc;
  base.shift = 0.0;
  if (!sc.censoring_mean) {
    Require(sc.target_censor_rate.has_value(), ErrorKind::kConfig,
            "scenario needs a censoring mean or a target censoring rate");
    sc.censoring_mean =
        CalibrateCensoring(base, *sc.target_censor_rate, n_pilot, DeriveSeed(seed, {1}));
  }
  if (!sc.tau) sc.tau = PilotHorizon(base, *sc.censoring_mean, n_pilot, DeriveSeed(seed, {2}));
  return sc;
}

GeneratedDataset Generate(const SimScenario& sc, std::size_t n, std::uint64_t seed) {
  Require(n >= 1, ErrorKind::kConfig, "sample size must be positive");
  Require(sc.censoring_mean.has_value(), ErrorKind::kConfig,
          "scenario censoring mean is not set (calibrate first)");
  const double mu = *sc.censoring_mean;
  const double horizon = sc.tau.value_or(std::numeric_limits<double>::infinity());
  GeneratedDataset out;
  out.scenario = sc;
  out.data.p = sc.p();
  out.data.subjects.resize(n);
  out.event_times.resize(n);
  out.censoring_times.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(DeriveSeed(seed, {i}));
    Subject& s = out.data.subjects[i];
    s.x = SampleCovariates(sc, rng);
    const double t = SampleEventTime(sc, s.x, rng);
    const double c = mu * rng.Exponential();
    out.event_times[i] = t;
    out.censoring_times[i] = c;
    const double stop = std::min(c, horizon);
    s.y = std::min(t, stop);
    s.delta = t <= stop ? 1 : 0;
  }
  out.data.tau = sc.tau ? *sc.tau : std::max(out.data.max_y(), 1e-12);
  return out;
}

std::pair<GeneratedDataset, GeneratedDataset> GenerateTwoSample(const SimScenario& sc,
                                                                std::size_t n1, std::size_t n2,
                                                                std::uint64_t seed) {
  SimScenario first = sc;
  first.shift = 0.0;
  auto a = Generate(first, n1, DeriveSeed(seed, {1}));
  auto b = Generate(sc, n2, DeriveSeed(seed, {2}));
  return {std::move(a), std::move(b)};
}

void ScenarioHazard::LogHazard(std::span<const double> x, std::span<const double> ts,
                               std::span<double> out) const {
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = TrueLogHazard(sc_, ts[i], x);
}

void ScenarioHazard::CumHazardPath(std::span<const double> x, std::span<const double> ts,
                                   std::span<double> out) const {
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = TrueCumHazard(sc_, ts[i], x);
}

}  // namespace dnnh
