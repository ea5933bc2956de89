#include <cmath>
#include <vector>

#include "doctest.h"
#include "errors.hpp"
#include "simgen.hpp"
#include "stats.hpp"

using namespace dnnh;

TEST_CASE("analytic cumulative hazards at simple points") {
  const std::vector<double> x0(5, 0.0);
  CHECK(TrueCumHazard(SimScenario::Make(Family::kCoxI), 0.0, x0) == 0.0);
  CHECK(TrueCumHazard(SimScenario::Make(Family::kCoxI), 1.0, x0) ==
        doctest::Approx(0.051).epsilon(1e-14));
  // Median of the normal error at location 0.
  CHECK(TrueCumHazard(SimScenario::Make(Family::kAftI), 1.0, x0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // Additive term 0.5 at x = 0.
  CHECK(TrueCumHazard(SimScenario::Make(Family::kAhI), 1.0, x0) ==
        doctest::Approx(0.551).epsilon(1e-14));
}

TEST_CASE("event-time inversion solves Lambda(T|x) = E") {
  const std::vector<double> x0(5, 0.0);
  CHECK(SampleEventTime(SimScenario::Make(Family::kCoxI), x0, 0.051) ==
        doctest::Approx(1.0).epsilon(1e-12));
  Rng rng(5);
  for (Family f : {Family::kCoxI, Family::kCoxII, Family::kAhI, Family::kAhII, Family::kAftI,
                   Family::kAftII, Family::kCoxTest, Family::kAhTest, Family::kAftTest}) {
    const auto sc = SimScenario::Make(f);
    for (int k = 0; k < 20; ++k) {
      const auto x = SampleCovariates(sc, rng);
      const double e = rng.Exponential();
      const double t = SampleEventTime(sc, x, e);
      CHECK_MESSAGE(TrueCumHazard(sc, t, x) == doctest::Approx(e).epsilon(1e-8), FamilyName(f));
    }
  }
}

TEST_CASE("hazard is the derivative of the cumulative hazard") {
  Rng rng(2);
  for (Family f : {Family::kCoxII, Family::kAhII, Family::kAftII, Family::kAftTest}) {
    auto sc = SimScenario::Make(f);
    sc.shift = 0.3;
    const auto x = SampleCovariates(sc, rng);
    for (double t : {0.3, 1.0, 2.5}) {
      const double h = 1e-6;
      const double fd = (TrueCumHazard(sc, t + h, x) - TrueCumHazard(sc, t - h, x)) / (2 * h);
      CHECK(TrueHazard(sc, t, x) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("shift multiplies the hazard") {
  const std::vector<double> x(5, 0.5);
  auto cox = SimScenario::Make(Family::kCoxTest);
  auto ah = SimScenario::Make(Family::kAhTest);
  auto cox1 = cox, ah1 = ah;
  cox1.shift = ah1.shift = 1.0;
  CHECK(TrueHazard(cox1, 1.0, x) == doctest::Approx(std::exp(1.0) * TrueHazard(cox, 1.0, x)));
  CHECK(TrueHazard(ah1, 1.0, x) == doctest::Approx(std::exp(0.2) * TrueHazard(ah, 1.0, x)));
}

TEST_CASE("sampled event times follow the conditional law") {
  // Fixed x: S(T|x) is uniform, so Lambda(T|x) is unit exponential.
  for (Family f : {Family::kCoxI, Family::kAhII, Family::kAftI}) {
    const auto sc = SimScenario::Make(f);
    const std::vector<double> x = {0.2, -0.5, 0.7, 0.1, -0.9};
    std::vector<double> lam;
    Rng rng(11);
    for (int i = 0; i < 4000; ++i) lam.push_back(TrueCumHazard(sc, SampleEventTime(sc, x, rng), x));
    const double ks = KolmogorovDistance(lam, [](double v) { return 1.0 - std::exp(-v); });
    CHECK_MESSAGE(ks < 0.03, FamilyName(f));
  }
}

TEST_CASE("censoring calibration hits the target") {
  const auto sc = SimScenario::Make(Family::kCoxI);
  const double mu = CalibrateCensoring(sc, 0.4, 20000, 3);
  CHECK(PilotCensoringRate(sc, mu, 20000, 3) == doctest::Approx(0.4).epsilon(0.0125));
  CHECK(PilotCensoringRate(sc, mu * 0.5, 20000, 3) > 0.4);
  CHECK(PilotCensoringRate(sc, mu * 2.0, 20000, 3) < 0.4);

  const auto prep = PrepareScenario(SimScenario::Make(Family::kAftII, 0.4), 9, 20000);
  const auto g = Generate(prep, 10000, 77);
  CHECK(g.data.censoring_rate() >= 0.37);
  CHECK(g.data.censoring_rate() <= 0.43);
}

TEST_CASE("generated data invariants and determinism") {
  const auto prep = PrepareScenario(SimScenario::Make(Family::kAhI, 0.6), 1, 10000);
  const auto a = Generate(prep, 500, 42);
  const auto b = Generate(prep, 500, 42);
  a.data.Validate();
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const auto& s = a.data.subjects[i];
    CHECK(s.y == b.data.subjects[i].y);
    CHECK(s.x == b.data.subjects[i].x);
    const double stop = std::min(a.censoring_times[i], *prep.tau);
    CHECK(s.y == std::min(a.event_times[i], stop));
    CHECK(s.delta == (a.event_times[i] <= stop ? 1 : 0));
    for (double v : s.x) CHECK(std::abs(v) <= 1.0);
  }
  // A prefix of a larger sample is the smaller sample.
  const auto c = Generate(prep, 800, 42);
  CHECK(c.data.subjects[499].y == a.data.subjects[499].y);
}

TEST_CASE("two-sample generation under no shift gives one law") {
  auto sc = PrepareScenario(SimScenario::Make(Family::kCoxTest), 4, 20000);
  const auto [s1, s2] = GenerateTwoSample(sc, 3000, 3000, 8);
  CHECK(KolmogorovDistance2(s1.event_times, s2.event_times) < 0.04);
  for (const auto& s : s1.data.subjects)
    for (double v : s.x) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("scenario json and family names") {
  auto sc = SimScenario::Make(Family::kAftII, 0.6);
  sc.shift = 0.25;
  sc.gof_design = true;
  const auto back = SimScenario::FromJson(sc.ToJson());
  CHECK(back.family == Family::kAftII);
  CHECK(back.shift == 0.25);
  CHECK(back.gof_design);
  CHECK(*back.target_censor_rate == 0.6);
  CHECK_THROWS_AS(ParseFamily("Weibull"), Error);
  CHECK_THROWS_AS(SimScenario::FromJson({{"family", "CoxI"}, {"target_censor_rate", 1.5}}), Error);
}
