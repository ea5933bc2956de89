#pragma once

// Right-censored data from the Cox / additive-hazards / AFT simulation
// designs, by inverse-CDF sampling with exponential censoring.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "hazard.hpp"
#include "rng.hpp"

namespace dnnh {

enum class Family {
  kCoxI,
  kCoxII,
  kAhI,
  kAhII,
  kAftI,
  kAftII,
  kCoxTest,
  kAhTest,
  kAftTest,
};

const char* FamilyName(Family f);
Family ParseFamily(const std::string& name);

struct SimScenario {
  Family family = Family::kCoxI;
  // Deviation c: the hazard is multiplied by exp(c) (Cox, AFT) or exp(c/5) (AH).
  double shift = 0.0;
  // Goodness-of-fit design: covariates on [0,1]^5, baseline 0.1(t+1) for the
  // Cox and AH families, and the rescaled Cox II index.
  bool gof_design = false;
  std::optional<double> censoring_mean;
  std::optional<double> target_censor_rate;
  std::optional<double> tau;
  // Zero-hazard guard: the log-hazard is log(lambda + delta0).
  double delta0 = 0.0;

  static SimScenario Make(Family family, double target_censor_rate = 0.4);

  int p() const { return 5; }
  bool unit_cube_covariates() const;
  double hazard_multiplier() const;

  nlohmann::json ToJson() const;
  static SimScenario FromJson(const nlohmann::json& j);
};

double TrueCumHazard(const SimScenario& sc, double t, std::span<const double> x);
double TrueHazard(const SimScenario& sc, double t, std::span<const double> x);
double TrueLogHazard(const SimScenario& sc, double t, std::span<const double> x);

// Solves Lambda(T|x) = e exactly; e = 0 maps to the smallest positive double.
double SampleEventTime(const SimScenario& sc, std::span<const double> x, double e);
double SampleEventTime(const SimScenario& sc, std::span<const double> x, Rng& rng);

std::vector<double> SampleCovariates(const SimScenario& sc, Rng& rng);

// Bisection on the exponential censoring mean against the Monte Carlo
// censoring fraction of a seeded pilot (common random numbers).
double CalibrateCensoring(const SimScenario& sc, double target_rate, std::size_t n_pilot,
                          std::uint64_t seed);
// Censoring fraction of a fresh pilot at mean `mu`.
double PilotCensoringRate(const SimScenario& sc, double mu, std::size_t n_pilot, std::uint64_t seed);
// 0.999 quantile of the observed time in a pilot.
double PilotHorizon(const SimScenario& sc, double mu, std::size_t n_pilot, std::uint64_t seed);

// Fills censoring_mean (from target_censor_rate) and tau when absent.
SimScenario PrepareScenario(SimScenario sc, std::uint64_t seed, std::size_t n_pilot = 50000);

struct GeneratedDataset {
  Dataset data;
  std::vector<double> event_times;      // latent T
  std::vector<double> censoring_times;  // latent C
  SimScenario scenario;
};

// i.i.d. subjects with per-subject RNG streams DeriveSeed(seed, {i}).
// Observation stops at tau: y = min(T, C, tau), delta = I(T <= min(C, tau)).
GeneratedDataset Generate(const SimScenario& sc, std::size_t n, std::uint64_t seed);

// Sample 1 under shift 0, sample 2 under the scenario's shift.
std::pair<GeneratedDataset, GeneratedDataset> GenerateTwoSample(const SimScenario& sc,
                                                                std::size_t n1, std::size_t n2,
                                                                std::uint64_t seed);

// The scenario's analytic truth as an evaluable model.
class ScenarioHazard : public LogHazardModel {
 public:
  explicit ScenarioHazard(SimScenario sc) : sc_(std::move(sc)) {}
  const SimScenario& scenario() const { return sc_; }
  void LogHazard(std::span<const double> x, std::span<const double> ts,
                 std::span<double> out) const override;
  void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                     std::span<double> out) const override;

 private:
  SimScenario sc_;
};

}  // namespace dnnh
