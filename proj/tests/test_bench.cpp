#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bench.hpp"
#include "doctest.h"
#include "errors.hpp"
#include "support.hpp"

using namespace dnnh;
namespace fs = std::filesystem;

namespace {

fs::path Scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dnnh_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void Write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kInternal;
}

const char* kRaw =
    "time,status,age,sex,race\n"
    "5,1,60,M,white\n"
    "8,0,NA,F,black\n"
    "3,1,40,F,white\n"
    "12,0,80,M,other\n"
    "7,1,50,F,black\n";

}  // namespace

TEST_CASE("ingest drops incomplete rows, scales numerics and dummy-codes") {
  const auto dir = Scratch("ingest");
  Write(dir / "raw.csv", kRaw);
  const auto schema = CovariateSchema::FromJson(
      {{"time", "time"},
       {"event", "status"},
       {"numeric", {"age"}},
       {"categorical", {{{"name", "sex"}, {"baseline", "F"}}, {{"name", "race"}, {"baseline", "white"}}}}});
  const auto res = IngestCsv((dir / "raw.csv").string(), schema);
  CHECK(res.report.rows_read == 5);
  CHECK(res.report.dropped == 1);
  CHECK(res.report.kept == 4);
  CHECK(res.data.p == 4);
  CHECK(res.encoder.names == std::vector<std::string>{"age", "sex=M", "race=black", "race=other"});
  // age 60 on [40, 80] -> 0.5; male; white.
  CHECK(res.data.subjects[0].x == std::vector<double>{0.5, 1.0, 0.0, 0.0});
  CHECK(res.data.subjects[2].x == std::vector<double>{1.0, 1.0, 0.0, 1.0});
  CHECK(res.data.tau == 12.0);

  const auto enc = CovariateEncoder::FromJson(res.encoder.ToJson());
  CHECK(enc.Encode({{"age", "70"}, {"sex", "F"}, {"race", "black"}}) ==
        std::vector<double>{0.75, 0.0, 1.0, 0.0});
  CHECK(KindOf([&] { enc.Encode({{"age", "70"}, {"sex", "F"}, {"race", "asian"}}); }) ==
        ErrorKind::kSchema);

  // Declared levels that miss a value in the data are a schema error.
  auto strict = schema;
  strict.categorical[1].levels = {"black"};
  CHECK(KindOf([&] { IngestCsv((dir / "raw.csv").string(), strict); }) == ErrorKind::kSchema);
  CHECK(KindOf([] { CovariateSchema::FromJson({{"time", "t"}}); }) == ErrorKind::kSchema);
}

TEST_CASE("re-ingesting the encoded output is the identity") {
  const auto dir = Scratch("reingest");
  Write(dir / "raw.csv", kRaw);
  auto spec = ExperimentSpec::Defaults("ingest", Scale::kDesk);
  spec.data = (dir / "raw.csv").string();
  spec.out_dir = (dir / "a").string();
  spec.schema = {{"time", "time"}, {"event", "status"}, {"numeric", {"age"}},
                 {"categorical", {{{"name", "sex"}, {"baseline", "F"}}}}};
  spec.split_preset = "64/36";
  const auto run = RunExperiment(spec);
  CHECK(run.exit_code == 0);
  const Dataset first = ReadDatasetCsv((dir / "a" / "dataset.csv").string());
  CHECK(first.size() == 4);
  WriteDatasetCsv(first, (dir / "again.csv").string());
  const Dataset second = ReadDatasetCsv((dir / "again.csv").string());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(second.subjects[i].y == first.subjects[i].y);
    CHECK(second.subjects[i].x == first.subjects[i].x);
  }
  CHECK(fs::exists(dir / "a" / "encoder.json"));
  CHECK(fs::exists(dir / "a" / "split.csv"));
}

TEST_CASE("curves of the zero network are Lambda = t") {
  const auto dir = Scratch("curves");
  const auto zero = testing::ConstantHazard(2, 0.0, 2.0);
  const std::vector<std::vector<double>> probes = {{0.1, 0.2}, {0.9, 0.4}};
  const std::vector<double> grid = {0.0, 0.5, 1.0, 2.0};
  WriteCurvesCsv({{"dnn", &zero}}, probes, grid, (dir / "c.csv").string());
  std::ifstream in(dir / "c.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "model,x_id,t,Lambda,S");
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string model, id, t, lam, s;
    std::getline(ss, model, ',');
    std::getline(ss, id, ',');
    std::getline(ss, t, ',');
    std::getline(ss, lam, ',');
    std::getline(ss, s, ',');
    CHECK(std::stod(lam) == doctest::Approx(std::stod(t)).epsilon(1e-12));
    CHECK(std::stod(s) == doctest::Approx(std::exp(-std::stod(t))).epsilon(1e-12));
    ++rows;
  }
  CHECK(rows == 8);

  WriteCurvesSvg({{"a", &zero}, {"b", &zero}}, probes, grid, (dir / "c.svg").string());
  const std::string svg = Slurp(dir / "c.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  WriteCurvesSvg({{"a", &zero}, {"b", &zero}}, probes, grid, (dir / "d.svg").string());
  CHECK(Slurp(dir / "d.svg") == svg);

  CHECK(KindOf([&] {
          WriteCurvesCsv({{"dnn", &zero}}, {{0.1}}, grid, (dir / "bad.csv").string());
        }) == ErrorKind::kShape);
}

TEST_CASE("experiment config validation") {
  CHECK(KindOf([] { ExperimentSpec::FromJson({{"kind", "table1"}, {"bogus", 1}}); }) ==
        ErrorKind::kConfig);
  CHECK(KindOf([] { ExperimentSpec::FromJson({{"kind", "table9"}}); }) == ErrorKind::kConfig);
  CHECK(KindOf([] { ExperimentSpec::FromJson({{"kind", "table1"}, {"scale", "huge"}}); }) ==
        ErrorKind::kConfig);
  CHECK(KindOf([] { ExperimentSpec::FromJson({{"kind", "table1"}, {"censoring", {1.2}}}); }) ==
        ErrorKind::kConfig);
  CHECK(KindOf([] { ExperimentSpec::FromJson({{"kind", "fit"}}); }) == ErrorKind::kConfig);

  const auto desk = ExperimentSpec::FromJson({{"kind", "table1"}});
  CHECK(desk.sizes == std::vector<std::size_t>{1000});
  CHECK(desk.replications == 50);
  const auto paper = ExperimentSpec::FromJson({{"kind", "table1"}}, Scale::kPaper);
  CHECK(paper.replications == 200);
  const auto merged = ExperimentSpec::FromJson({{"kind", "table4"}, {"train", {{"patience", 7}}}});
  CHECK(merged.train.patience == 7);
  CHECK(merged.train.max_epochs == ExperimentSpec::Defaults("table4", Scale::kDesk).train.max_epochs);

  const auto round = ExperimentSpec::FromJson(desk.ToJson());
  CHECK(round.ToJson() == desk.ToJson());
  CHECK(ConfigHash(desk.ToJson()) == ConfigHash(round.ToJson()));
  CHECK(ConfigHash(desk.ToJson()).size() == 16);
}

TEST_CASE("simulation table runs are deterministic and write a manifest") {
  const auto dir = Scratch("table");
  auto spec = ExperimentSpec::FromJson({{"kind", "table1"},
                                        {"families", {"CoxI"}},
                                        {"n", 200},
                                        {"replications", 2},
                                        {"pilot_size", 5000},
                                        {"bootstrap", 50},
                                        {"train", {{"max_epochs", 40}, {"patience", 5}}}});
  spec.out_dir = (dir / "a").string();
  const auto a = RunExperiment(spec);
  spec.out_dir = (dir / "b").string();
  spec.workers = 2;
  const auto b = RunExperiment(spec);
  CHECK(a.exit_code == 0);
  for (const auto& f : a.files) {
    if (f == "manifest.json") continue;
    CHECK_MESSAGE(Slurp(dir / "a" / f) == Slurp(dir / "b" / f), f);
  }
  const auto& m = a.manifest;
  for (const char* key : {"config", "config_hash", "versions", "wall_time_seconds", "failures",
                          "failure_fraction", "files", "summary", "seed"})
    CHECK_MESSAGE(m.contains(key), key);
  CHECK(m["failure_fraction"] == 0.0);
  CHECK(fs::exists(dir / "a" / "manifest.json"));

  // The manifest's config repeats the run.
  auto again = ExperimentSpec::FromJson(m["config"]);
  again.out_dir = (dir / "c").string();
  RunExperiment(again);
  CHECK(Slurp(dir / "c" / "table1.csv") == Slurp(dir / "a" / "table1.csv"));
}

TEST_CASE("too many failed replications give exit code 4") {
  const auto dir = Scratch("fail");
  auto spec = ExperimentSpec::FromJson({{"kind", "table6"},
                                        {"families", {"CoxI"}},
                                        {"n", 20},
                                        {"replications", 3},
                                        {"pilot_size", 5000},
                                        {"train", {{"max_epochs", 10}, {"patience", 2}}}});
  spec.out_dir = dir.string();
  const auto r = RunExperiment(spec);
  CHECK(r.exit_code == 4);
  CHECK(r.manifest["failures"].size() == 3);
  CHECK(r.manifest["failure_fraction"] == 1.0);
}

TEST_CASE("two-sample run on files with different horizons") {
  const auto dir = Scratch("test2");
  WriteDatasetCsv(testing::RandomDataset(80, 2, 1, 1.0), (dir / "a.csv").string());
  WriteDatasetCsv(testing::RandomDataset(80, 2, 2, 3.0), (dir / "b.csv").string());
  auto spec = ExperimentSpec::FromJson({{"kind", "test2"},
                                        {"data", (dir / "a.csv").string()},
                                        {"data2", (dir / "b.csv").string()},
                                        {"train", {{"max_epochs", 20}, {"patience", 5}}}});
  spec.out_dir = (dir / "out").string();
  const auto r = RunExperiment(spec);
  CHECK(r.exit_code == 0);
  CHECK(r.summary["reports"].size() == 4);
}
