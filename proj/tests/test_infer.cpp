#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "errors.hpp"
#include "infer.hpp"
#include "simgen.hpp"
#include "support.hpp"

using namespace dnnh;

namespace {

Dataset Steps() {
  Dataset d;
  d.p = 1;
  d.tau = 4.0;
  for (int i = 1; i <= 4; ++i) d.subjects.push_back({static_cast<double>(i), 1, {0.2}});
  return d;
}

TrainConfig Quick(std::uint64_t seed) {
  TrainConfig c;
  c.depth_grid = {1};
  c.width_grid = {8};
  c.lr_grid = {1e-2};
  c.max_epochs = 100;
  c.patience = 10;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("fleming-harrington weights") {
  const RiskSet risk(Steps());
  CHECK(risk.Fraction(0.5) == 1.0);
  CHECK(risk.Fraction(2.0) == 0.75);
  CHECK(risk.Fraction(2.5) == 0.5);
  CHECK(risk.Fraction(4.5) == 0.0);

  const auto unit = testing::ConstantHazard(1, 0.0, 4.0);
  const double x[1] = {0.2};
  const double s = std::exp(-2.0);
  CHECK(FhWeight(risk, &unit, {0, 0}, 2.0, x) == 0.75);
  CHECK(FhWeight(risk, &unit, {1, 0}, 2.0, x) == doctest::Approx(0.75 * s));
  CHECK(FhWeight(risk, &unit, {0.5, 0.5}, 2.0, x) == doctest::Approx(0.75 * std::sqrt(s * (1 - s))));
  CHECK(FhWeight(risk, &unit, {1, 1}, 2.0, x) == doctest::Approx(0.75 * s * (1 - s)));
  for (const auto& w : StandardWeights())
    for (double t : {0.1, 1.3, 3.9}) {
      const double v = FhWeight(risk, &unit, w, t, x);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  CHECK(StandardWeights().size() == 4);
  CHECK(WeightSpec{0.5, 0.5}.Label() == "W(0.5,0.5)");
  CHECK_THROWS_AS(WeightSpec({-1, 0}).Validate(), Error);
}

TEST_CASE("psi of simple hazards") {
  const auto zero = testing::ConstantHazard(1, 0.0);
  const PathFn one = [](auto, auto ts, auto out) {
    for (std::size_t i = 0; i < ts.size(); ++i) out[i] = 1.0;
  };
  const PathFn ident = [](auto, auto ts, auto out) {
    for (std::size_t i = 0; i < ts.size(); ++i) out[i] = ts[i];
  };
  CHECK(Psi(zero, one, Subject{1.0, 1, {0.5}}) == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(std::abs(Psi(zero, ident, Subject{1.0, 1, {0.5}}) - 0.5) < 1e-13);
  CHECK(Psi(zero, ident, Subject{1.0, 0, {0.5}}) == doctest::Approx(-0.5).epsilon(1e-13));
}

TEST_CASE("psi has mean zero at the true hazard") {
  auto sc = PrepareScenario(SimScenario::Make(Family::kCoxTest), 3, 20000);
  const auto g = Generate(sc, 20000, 4);
  const ScenarioHazard truth(sc);
  const PathFn one = [](auto, auto ts, auto out) {
    for (std::size_t i = 0; i < ts.size(); ++i) out[i] = 1.0;
  };
  std::vector<double> v;
  for (const auto& s : g.data.subjects) v.push_back(Psi(truth, one, s));
  CHECK(std::abs(Mean(v)) < 3.0 * SampleSd(v) / std::sqrt(static_cast<double>(v.size())));
}

TEST_CASE("one-sample test with the estimate equal to the null") {
  const auto d = testing::RandomDataset(200, 2, 5, 2.0);
  const auto h = testing::RandomHazard(2, 1, 6, 9, 2.0);
  for (const auto& r : OneSampleTests(d, h, h, StandardWeights())) {
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == 1.0);
    CHECK_FALSE(r.reject);
    CHECK(r.variance > 0.0);
  }
}

TEST_CASE("two-sample test: identical fits and swap antisymmetry") {
  const auto d1 = testing::RandomDataset(150, 2, 1, 2.0);
  const auto d2 = testing::RandomDataset(120, 2, 2, 2.0);
  const auto f1 = testing::RandomHazard(2, 1, 6, 3, 2.0);
  const auto f2 = testing::RandomHazard(2, 1, 6, 4, 2.0);
  for (const auto& r : TwoSampleTests(d1, d2, f1, f1, StandardWeights())) CHECK(r.statistic == 0.0);

  const auto ab = TwoSampleTests(d1, d2, f1, f2, StandardWeights());
  const auto ba = TwoSampleTests(d2, d1, f2, f1, StandardWeights());
  for (std::size_t k = 0; k < ab.size(); ++k) {
    CHECK(ab[k].statistic == doctest::Approx(-ba[k].statistic).epsilon(1e-10));
    CHECK(ab[k].variance == doctest::Approx(ba[k].variance).epsilon(1e-10));
  }

  const auto pooled = TwoSampleTests(d1, d2, f1, f2, {{0, 0}}, VarianceMode::kPooled, &f1);
  CHECK(pooled[0].variance_mode == "pooled");
  CHECK_THROWS_AS(TwoSampleTests(d1, d2, f1, f2, {{0, 0}}, VarianceMode::kPooled, nullptr), Error);
}

TEST_CASE("too few events is degenerate") {
  auto d = testing::RandomDataset(60, 2, 8, 2.0);
  int kept = 0;
  for (auto& s : d.subjects) {
    if (s.delta && kept < 9) ++kept;
    else s.delta = 0;
  }
  const auto h = testing::ConstantHazard(2, 0.0, 2.0);
  try {
    OneSampleTest(d, h, h, {0, 0});
    FAIL("expected a degenerate-data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerate);
  }
}

TEST_CASE("goodness-of-fit diagnostic mode gives a zero statistic") {
  auto sc = SimScenario::Make(Family::kCoxI);
  sc.gof_design = true;
  sc = PrepareScenario(sc, 2, 20000);
  const auto d = Generate(sc, 400, 6).data;
  GofOptions opt;
  opt.diagnostic = true;
  const auto res = GofTests(d, SplineCoxNull{}, Quick(1), StandardWeights(), 11, opt);
  for (const auto& r : res.reports) {
    CHECK(r.statistic == 0.0);
    CHECK(r.variance_mode == "diagnostic");
  }
  CHECK(res.parts.train.size() + res.parts.validation.size() + res.parts.test.size() == 400);

  const auto full = GofTests(d, SplineCoxNull{}, Quick(1), {{0, 0}}, 11);
  CHECK(std::isfinite(full.reports[0].z));
  CHECK(full.reports[0].variance_mode == "spline_cox_influence");
}

TEST_CASE("monte carlo aggregation") {
  auto reject = [](std::uint64_t, std::size_t) {
    TestReport r;
    r.reject = true;
    r.z = 3.0;
    return r;
  };
  auto accept = [](std::uint64_t, std::size_t) { return TestReport{}; };
  const auto all = MonteCarloRejectionRate(20, 1, reject);
  CHECK(all.columns[0].rate == 1.0);
  CHECK(all.columns[0].ci.lo > 0.8);
  const auto none = MonteCarloRejectionRate(20, 1, accept, 0.95, 3);
  CHECK(none.columns[0].rate == 0.0);
  CHECK(none.completed == 20);

  auto flaky = [](std::uint64_t, std::size_t r) -> TestReport {
    if (r % 5 == 0) throw Error(ErrorKind::kDegenerate, "too few events");
    TestReport t;
    t.reject = r % 2 == 0;
    return t;
  };
  const auto part = MonteCarloRejectionRate(20, 1, flaky, 0.95, 2);
  CHECK(part.failures.size() == 4);
  CHECK(part.completed == 16);
  CHECK(part.columns[0].rejections == 8);
  CHECK(part.failures[0].first == 0);

  std::vector<std::uint64_t> seen;
  MonteCarloRejectionRate(3, 77, [&](std::uint64_t s, std::size_t) {
    seen.push_back(s);
    return TestReport{};
  });
  CHECK(seen == std::vector<std::uint64_t>{DeriveSeed(77, {0}), DeriveSeed(77, {1}),
                                           DeriveSeed(77, {2})});
}
