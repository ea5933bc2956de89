#pragma once

// Weighted tests built on the influence functional
//   psi(g; Z)[h] = Delta h(Y,X) - integral_0^Y exp{g(s,X)} h(s,X) ds
// with Fleming-Harrington weight processes: one-sample, two-sample and the
// sample-split goodness-of-fit test.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "baselines.hpp"
#include "dataset.hpp"
#include "hazard.hpp"
#include "stats.hpp"
#include "trainer.hpp"

namespace dnnh {

struct WeightSpec {
  double rho = 0.0;
  double gamma = 0.0;

  void Validate() const;
  std::string Label() const;  // "W(rho,gamma)"
  nlohmann::json ToJson() const;
  static WeightSpec FromJson(const nlohmann::json& j);
};

// The four weights reported in the tables.
std::vector<WeightSpec> StandardWeights();

struct TestReport {
  std::string kind;
  double statistic = 0.0;
  double variance = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
  WeightSpec weight;
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t events = 0;
  std::string variance_mode;
  // sqrt(n) P_n psi(g_hat)[W]: the first-order term that drives the variance
  // (one-sample test only).
  std::optional<double> influence_statistic;

  nlohmann::json ToJson() const;
};

// Fills z, p-value and the decision from statistic and variance.
void Finalize(TestReport& r);

// (1/n) #{i : Y_i >= t} over a fixed evaluation sample.
class RiskSet {
 public:
  explicit RiskSet(const Dataset& data);
  double Fraction(double t) const;
  std::size_t size() const { return sorted_.size(); }

 private:
  std::vector<double> sorted_;
};

// W(t,x) = RiskSet(t) S(t|x)^rho (1 - S(t|x))^gamma.
double FhWeight(const RiskSet& risk, const CumHazardModel* survival, const WeightSpec& spec,
                double t, std::span<const double> x);

// Lambda = sum_k w_k Lambda_k; with w_k = n_k / n this is the pooled-sample
// cumulative hazard of a two-sample mixture.
class MixtureCumHazard : public CumHazardModel {
 public:
  void Add(double weight, const CumHazardModel* model) { parts_.push_back({weight, model}); }
  void CumHazardPath(std::span<const double> x, std::span<const double> ts,
                     std::span<double> out) const override;

 private:
  std::vector<std::pair<double, const CumHazardModel*>> parts_;
};

using PathFn =
    std::function<void(std::span<const double> x, std::span<const double> ts, std::span<double> out)>;

// psi(g; z)[h] with the K x Q composite rule on [0, Y].
double Psi(const LogHazardModel& g, const PathFn& h, const Subject& z,
           const QuadratureSettings& quad = {});

struct TestOptions {
  double alpha = 0.05;
  QuadratureSettings quadrature;
  std::size_t min_events = 10;
};

// T_w = sqrt(n) P_n[Delta W (g_hat - g0)], variance (1/n) sum psi(g_hat)[W]^2;
// W uses the survival of g_hat and the at-risk fraction of `data`.
std::vector<TestReport> OneSampleTests(const Dataset& data, const LogHazardModel& fit,
                                       const LogHazardModel& null_model,
                                       const std::vector<WeightSpec>& specs,
                                       const TestOptions& opt = {});
TestReport OneSampleTest(const Dataset& data, const LogHazardModel& fit,
                         const LogHazardModel& null_model, const WeightSpec& spec,
                         const TestOptions& opt = {});

enum class VarianceMode { kSplit, kPooled };
const char* VarianceModeName(VarianceMode m);
VarianceMode ParseVarianceMode(const std::string& s);

// U_w = sqrt(n) P_n[Delta W (g1 - g2)] over the pooled sample. Split mode:
// (n/n1) s1^2 + (n/n2) s2^2 with each sample's own fit and a mixture survival
// in W. Pooled mode: n^2/(n1 n2) s^2 from `pooled_fit`, which also drives W.
std::vector<TestReport> TwoSampleTests(const Dataset& data1, const Dataset& data2,
                                       const LogHazardModel& fit1, const LogHazardModel& fit2,
                                       const std::vector<WeightSpec>& specs,
                                       VarianceMode mode = VarianceMode::kSplit,
                                       const LogHazardModel* pooled_fit = nullptr,
                                       const TestOptions& opt = {});

enum class InfluenceMode { kAnalytic, kJackknife };

struct GofOptions {
  // DNN training / DNN validation / null-model fractions of the sample.
  SplitFractions split{0.42, 0.16, 0.42};
  InfluenceMode influence = InfluenceMode::kAnalytic;
  // Replace the null fit with the DNN fit (statistic must be exactly 0).
  bool diagnostic = false;
  TestOptions test;
};

struct GofResult {
  std::vector<TestReport> reports;
  FitResult dnn;
  std::shared_ptr<const LogHazardModel> null_fit;
  DataSplit parts;  // train / validation / null sample (the `test` slot)
};

// Statistic sqrt(n) P_n[Delta W (g_dnn - g_null)] over dnn-train U null
// sample (n = n1 + n2); variance (n/n1) s1^2 + (n/n2) s2^2 with s1^2 the mean
// squared psi on the DNN sample and s2^2 the mean squared null influence.
std::vector<TestReport> GofTestsFromFits(const Dataset& dnn_sample, const Dataset& null_sample,
                                         const LogHazardModel& dnn_fit,
                                         const NullFitter& null_fitter,
                                         const LogHazardModel& null_fit, double horizon,
                                         const std::vector<WeightSpec>& specs,
                                         const GofOptions& opt = {});

GofResult GofTests(const Dataset& data, const NullFitter& null_fitter, const TrainConfig& cfg,
                   const std::vector<WeightSpec>& specs, std::uint64_t seed,
                   const GofOptions& opt = {});

struct MonteCarloColumn {
  std::string label;
  std::size_t rejections = 0;
  double rate = 0.0;
  Interval ci;
  std::vector<double> z;
};

struct MonteCarloResult {
  std::size_t replications = 0;
  std::size_t completed = 0;
  std::vector<std::pair<std::size_t, std::string>> failures;  // (replication, message)
  std::vector<MonteCarloColumn> columns;

  nlohmann::json ToJson() const;
};

// Runs `replications` independent replications with seeds DeriveSeed(seed, {r})
// on `workers` threads; each returns one report per column. Replications that
// throw are recorded and excluded. Aggregation is in replication order.
MonteCarloResult MonteCarloRejectionRates(
    std::size_t replications, std::uint64_t seed, const std::vector<std::string>& labels,
    const std::function<std::vector<TestReport>(std::uint64_t rep_seed, std::size_t rep)>& run,
    double level = 0.95, std::size_t workers = 1);

MonteCarloResult MonteCarloRejectionRate(
    std::size_t replications, std::uint64_t seed,
    const std::function<TestReport(std::uint64_t rep_seed, std::size_t rep)>& run,
    double level = 0.95, std::size_t workers = 1);

}  // namespace dnnh
