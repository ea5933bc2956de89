#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "errors.hpp"
#include "support.hpp"
#include "trainer.hpp"

using namespace dnnh;

namespace {

TrainConfig SmallConfig(std::uint64_t seed) {
  TrainConfig c;
  c.depth_grid = {1};
  c.width_grid = {8};
  c.lr_grid = {1e-2};
  c.max_epochs = 200;
  c.patience = 20;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("split sizes and disjointness") {
  const auto s = SplitDataset(100, SplitFractions{}, 3);
  CHECK(s.train.size() == 64);
  CHECK(s.validation.size() == 16);
  CHECK(s.test.size() == 20);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 100);

  const auto t = SplitDataset(10, SplitFractions{0.8, 0.2, 0.0}, 1, true);
  CHECK(t.train.size() == 8);
  CHECK(t.validation.size() == 2);
  CHECK(t.test.empty());
  CHECK_THROWS_AS(SplitDataset(10, SplitFractions{0.8, 0.2, 0.0}, 1, false), Error);

  const auto a = SplitDataset(57, SplitFractions{}, 9);
  const auto b = SplitDataset(57, SplitFractions{}, 9);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.patience = c.max_epochs + 1;
  CHECK_THROWS_AS(c.Validate(), Error);
  c = TrainConfig{};
  c.width_grid.clear();
  CHECK_THROWS_AS(c.Validate(), Error);
  c = TrainConfig{};
  CHECK_THROWS_AS(TrainConfig::FromJson({{"max_epochs", -3}}), Error);
  const auto back = TrainConfig::FromJson(SmallConfig(4).ToJson());
  CHECK(back.width_grid == std::vector<int>{8});
  CHECK(back.seed == 4);
}

TEST_CASE("patience equal to max_epochs runs every epoch") {
  const auto data = testing::ExponentialDataset(200, 2, 2.0, 3.0, 5);
  auto cfg = SmallConfig(1);
  cfg.max_epochs = cfg.patience = 30;
  const auto r = Fit(data, cfg);
  CHECK(r.epochs_run == 30);
  CHECK(r.train_curve.size() == 30);
  CHECK(r.validation_curve.size() == 30);
}

TEST_CASE("fit recovers a unit exponential hazard") {
  const auto data = testing::ExponentialDataset(1500, 2, 2.0, 2.5, 12);
  const auto r = Fit(data, SmallConfig(7));
  const double x[2] = {0.5, 0.5};
  for (double t : {0.25, 0.5, 1.0, 1.5})
    CHECK_MESSAGE(std::abs(r.model.CumHazard(t, x) - t) < 0.15, "t=" << t);
}

TEST_CASE("training is reproducible and invariant to the held-out test part") {
  const auto data = testing::ExponentialDataset(300, 3, 1.5, 2.0, 3);
  const auto cfg = SmallConfig(21);
  const auto a = Fit(data, cfg);
  const auto b = Fit(data, cfg);
  CHECK(a.model.net().Flatten() == b.model.net().Flatten());
  CHECK(a.train_curve == b.train_curve);

  Dataset perturbed = data;
  for (std::size_t i : a.split.test) {
    perturbed.subjects[i].y *= 0.5;
    perturbed.subjects[i].delta = 1 - perturbed.subjects[i].delta;
  }
  const auto c = Fit(perturbed, cfg);
  CHECK(c.model.net().Flatten() == a.model.net().Flatten());
}

TEST_CASE("curve and best-epoch invariants") {
  const auto data = testing::ExponentialDataset(400, 2, 1.0, 2.0, 8);
  auto cfg = SmallConfig(2);
  cfg.width_grid = {4, 8};
  const auto r = Fit(data, cfg);
  CHECK(r.grid.size() == 2);
  CHECK(r.epochs_run == static_cast<int>(r.validation_curve.size()));
  CHECK(r.best_epoch >= 0);
  CHECK(r.best_epoch <= r.epochs_run);
  const double best = r.best_epoch == 0 ? r.initial_validation_loglik
                                        : r.validation_curve[r.best_epoch - 1];
  CHECK(best == doctest::Approx(r.best_validation_loglik).epsilon(1e-12));
  CHECK(*std::max_element(r.validation_curve.begin(), r.validation_curve.end()) <=
        r.best_validation_loglik + 1e-12);
  if (r.stop_reason == "early_stop") CHECK(r.epochs_run - r.best_epoch == cfg.patience);
  for (const auto& g : r.grid) CHECK(g.best_validation_loglik <= r.best_validation_loglik + 1e-12);
}
