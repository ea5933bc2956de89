#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include <Eigen/Core>

#include "baselines.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace dnnh {

namespace fs = std::filesystem;

const char* ScaleName(Scale s) { return s == Scale::kPaper ? "paper" : "desk"; }

Scale ParseScale(const std::string& s) {
  if (s == "desk") return Scale::kDesk;
  if (s == "paper") return Scale::kPaper;
  Fail(ErrorKind::kConfig, "unknown scale '" + s + "' (desk|paper)");
}

namespace {

const std::set<std::string> kKinds{"table1", "table2", "table3", "table4", "table5", "table6",
                                   "fit",    "test1",  "test2",  "gof",    "ingest", "simulate",
                                   "curves"};

bool IsTable(const std::string& kind) { return kind.rfind("table", 0) == 0; }

// Cox, AH or AFT, the classical model that matches a data family.
enum class ModelClass { kCox, kAh, kAft };

ModelClass ClassOf(Family f) {
  switch (f) {
    case Family::kCoxI:
    case Family::kCoxII:
    case Family::kCoxTest:
      return ModelClass::kCox;
    case Family::kAhI:
    case Family::kAhII:
    case Family::kAhTest:
      return ModelClass::kAh;
    default:
      return ModelClass::kAft;
  }
}

const char* ClassName(ModelClass c) {
  switch (c) {
    case ModelClass::kCox:
      return "Cox";
    case ModelClass::kAh:
      return "AH";
    default:
      return "AFT";
  }
}

bool IsTestFamily(Family f) {
  return f == Family::kCoxTest || f == Family::kAhTest || f == Family::kAftTest;
}

std::vector<Family> Families(std::initializer_list<Family> fs) { return {fs}; }

TrainConfig DeskTrainConfig() {
  TrainConfig c;
  c.depth_grid = {2};
  c.width_grid = {32};
  c.lr_grid = {1e-2};
  c.max_epochs = 1000;
  c.patience = 50;
  return c;
}

std::vector<std::string> FamilyNames(const std::vector<Family>& fs) {
  std::vector<std::string> out;
  for (Family f : fs) out.push_back(FamilyName(f));
  return out;
}

std::vector<Family> ParseFamilies(const nlohmann::json& j) {
  std::vector<Family> out;
  for (const auto& v : j) out.push_back(ParseFamily(v.get<std::string>()));
  return out;
}

std::uint64_t CellSeed(std::uint64_t seed, Family f, std::size_t n, double rate) {
  return DeriveSeed(seed, {static_cast<std::uint64_t>(f) + 1, n,
                           static_cast<std::uint64_t>(std::llround(rate * 1e4))});
}

}  // namespace

// --- spec ---

ExperimentSpec ExperimentSpec::Defaults(const std::string& kind, Scale scale) {
  Require(kKinds.count(kind) > 0, ErrorKind::kConfig, "unknown experiment kind '" + kind + "'");
  ExperimentSpec s;
  s.kind = kind;
  s.scale = scale;
  const bool paper = scale == Scale::kPaper;
  s.train = paper ? TrainConfig{} : DeskTrainConfig();
  s.weights = StandardWeights();
  s.censoring = {0.4};
  if (kind == "table1" || kind == "table2" || kind == "table3") {
    if (kind == "table1") s.families = Families({Family::kCoxI, Family::kCoxII});
    if (kind == "table2") s.families = Families({Family::kAhI, Family::kAhII});
    if (kind == "table3") s.families = Families({Family::kAftI, Family::kAftII});
    s.sizes = paper ? std::vector<std::size_t>{2000, 4000} : std::vector<std::size_t>{1000};
    if (paper) s.censoring = {0.4, 0.6};
    s.replications = paper ? 200 : 50;
  } else if (kind == "table4" || kind == "table5") {
    s.families = Families({Family::kCoxTest, Family::kAhTest, Family::kAftTest});
    if (kind == "table4") s.null_families = s.families;
    if (kind == "table5") s.shifts = {0.0, 0.125, 0.25, 0.5};
    s.sizes = {paper ? 5000u : 1000u};
    s.replications = paper ? 200 : 100;
    s.train.split = {0.8, 0.2, 0.0};
    s.train.allow_empty_test = true;
  } else if (kind == "table6") {
    s.families = Families({Family::kCoxI, Family::kCoxII, Family::kAhI, Family::kAhII,
                           Family::kAftI, Family::kAftII});
    s.sizes = {paper ? 5000u : 1000u};
    s.replications = paper ? 200 : 100;
  } else if (kind == "fit" || kind == "test1" || kind == "test2") {
    if (kind != "fit") {
      s.train.split = {0.8, 0.2, 0.0};
      s.train.allow_empty_test = true;
    }
  } else if (kind == "simulate") {
    s.sizes = {1000};
  }
  return s;
}

ExperimentSpec ExperimentSpec::FromJson(const nlohmann::json& j, std::optional<Scale> scale) {
  Require(j.is_object(), ErrorKind::kConfig, "experiment config must be a JSON object");
  static const std::set<std::string> known{
      "kind",       "scale",         "seed",       "out_dir",      "workers",
      "failure_threshold", "families", "null_families", "sizes",   "n",
      "censoring",  "shifts",        "replications", "pilot_size", "weights",
      "train",      "variance_mode", "influence",  "gof_split",    "bootstrap",
      "scenario",   "truth_columns", "data",       "data2",        "model",
      "null_scenario", "schema",     "split_preset", "probes",     "grid_points"};
  for (const auto& [key, _] : j.items())
    Require(known.count(key) > 0, ErrorKind::kConfig, "unknown config key '" + key + "'");
  try {
    Scale sc = scale ? *scale : (j.contains("scale") ? ParseScale(j["scale"]) : Scale::kDesk);
    ExperimentSpec s = Defaults(j.at("kind").get<std::string>(), sc);
    s.seed = j.value("seed", s.seed);
    s.out_dir = j.value("out_dir", s.out_dir);
    s.workers = j.value("workers", s.workers);
    s.failure_threshold = j.value("failure_threshold", s.failure_threshold);
    if (j.contains("families")) s.families = ParseFamilies(j["families"]);
    if (j.contains("null_families")) s.null_families = ParseFamilies(j["null_families"]);
    if (j.contains("sizes")) s.sizes = j["sizes"].get<std::vector<std::size_t>>();
    if (j.contains("n")) s.sizes = {j["n"].get<std::size_t>()};
    if (j.contains("censoring")) s.censoring = j["censoring"].get<std::vector<double>>();
    if (j.contains("shifts")) s.shifts = j["shifts"].get<std::vector<double>>();
    s.replications = j.value("replications", s.replications);
    s.pilot_size = j.value("pilot_size", s.pilot_size);
    if (j.contains("weights")) {
      s.weights.clear();
      for (const auto& w : j["weights"]) s.weights.push_back(WeightSpec::FromJson(w));
    }
    if (j.contains("train")) {
      nlohmann::json merged = s.train.ToJson();
      merged.merge_patch(j["train"]);
      s.train = TrainConfig::FromJson(merged);
    }
    if (j.contains("variance_mode")) s.variance_mode = ParseVarianceMode(j["variance_mode"]);
    if (j.contains("influence")) {
      const std::string m = j["influence"];
      Require(m == "analytic" || m == "jackknife", ErrorKind::kConfig,
              "influence must be analytic or jackknife");
      s.influence = m == "analytic" ? InfluenceMode::kAnalytic : InfluenceMode::kJackknife;
    }
    if (j.contains("gof_split")) {
      auto v = j["gof_split"].get<std::vector<double>>();
      Require(v.size() == 3, ErrorKind::kConfig, "gof_split needs three fractions");
      s.gof_split = {v[0], v[1], v[2]};
    }
    s.bootstrap = j.value("bootstrap", s.bootstrap);
    if (j.contains("scenario")) s.scenario = SimScenario::FromJson(j["scenario"]);
    s.truth_columns = j.value("truth_columns", s.truth_columns);
    s.data = j.value("data", s.data);
    s.data2 = j.value("data2", s.data2);
    s.model = j.value("model", s.model);
    if (j.contains("null_scenario")) s.null_scenario = SimScenario::FromJson(j["null_scenario"]);
    if (j.contains("schema")) s.schema = j["schema"];
    s.split_preset = j.value("split_preset", s.split_preset);
    if (j.contains("probes")) s.probes = j["probes"].get<std::vector<std::vector<double>>>();
    s.grid_points = j.value("grid_points", s.grid_points);
    s.Validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("malformed experiment config: ") + e.what());
  }
}

nlohmann::json ExperimentSpec::ToJson() const {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& ws : weights) w.push_back(ws.ToJson());
  nlohmann::json j = {{"kind", kind},
                      {"scale", ScaleName(scale)},
                      {"seed", seed},
                      {"out_dir", out_dir},
                      {"workers", workers},
                      {"failure_threshold", failure_threshold},
                      {"families", FamilyNames(families)},
                      {"null_families", FamilyNames(null_families)},
                      {"sizes", sizes},
                      {"censoring", censoring},
                      {"shifts", shifts},
                      {"replications", replications},
                      {"pilot_size", pilot_size},
                      {"weights", w},
                      {"train", train.ToJson()},
                      {"variance_mode", VarianceModeName(variance_mode)},
                      {"influence", influence == InfluenceMode::kAnalytic ? "analytic" : "jackknife"},
                      {"gof_split", {gof_split.train, gof_split.validation, gof_split.test}},
                      {"bootstrap", bootstrap},
                      {"truth_columns", truth_columns},
                      {"data", data},
                      {"data2", data2},
                      {"model", model},
                      {"split_preset", split_preset},
                      {"probes", probes},
                      {"grid_points", grid_points}};
  if (scenario) j["scenario"] = scenario->ToJson();
  if (null_scenario) j["null_scenario"] = null_scenario->ToJson();
  if (!schema.is_null()) j["schema"] = schema;
  return j;
}

void ExperimentSpec::Validate() const {
  Require(kKinds.count(kind) > 0, ErrorKind::kConfig, "unknown experiment kind '" + kind + "'");
  Require(replications >= 1, ErrorKind::kConfig, "replications must be >= 1");
  Require(failure_threshold >= 0.0 && failure_threshold <= 1.0, ErrorKind::kConfig,
          "failure_threshold must be in [0,1]");
  Require(!out_dir.empty(), ErrorKind::kConfig, "out_dir is empty");
  for (const auto& w : weights) w.Validate();
  for (double c : censoring)
    Require(c > 0.0 && c < 1.0, ErrorKind::kConfig, "censoring targets must be in (0,1)");
  train.Validate();
  if (IsTable(kind)) {
    Require(!families.empty(), ErrorKind::kConfig, kind + " needs at least one family");
    Require(!sizes.empty(), ErrorKind::kConfig, kind + " needs at least one sample size");
    for (std::size_t n : sizes) Require(n >= 20, ErrorKind::kConfig, "sample sizes must be >= 20");
    Require(!weights.empty() || kind == "table1" || kind == "table2" || kind == "table3",
            ErrorKind::kConfig, "no weights given");
  }
  if (kind == "table1" || kind == "table2" || kind == "table3") {
    const ModelClass want = kind == "table1" ? ModelClass::kCox
                            : kind == "table2" ? ModelClass::kAh
                                               : ModelClass::kAft;
    for (Family f : families)
      Require(ClassOf(f) == want && !IsTestFamily(f), ErrorKind::kConfig,
              std::string(FamilyName(f)) + " is not a " + ClassName(want) + " estimation scenario");
    Require(bootstrap >= 1, ErrorKind::kConfig, "bootstrap must be >= 1");
  }
  if (kind == "table4") {
    Require(!null_families.empty(), ErrorKind::kConfig, "table4 needs null families");
    for (Family f : families)
      Require(IsTestFamily(f), ErrorKind::kConfig,
              std::string(FamilyName(f)) + " is not a test scenario");
    for (Family f : null_families)
      Require(IsTestFamily(f), ErrorKind::kConfig,
              std::string(FamilyName(f)) + " is not a test scenario");
  }
  if (kind == "table5") {
    Require(!shifts.empty(), ErrorKind::kConfig, "table5 needs shifts");
    for (Family f : families)
      Require(IsTestFamily(f), ErrorKind::kConfig,
              std::string(FamilyName(f)) + " is not a test scenario");
  }
  if (kind == "table6")
    for (Family f : families)
      Require(!IsTestFamily(f), ErrorKind::kConfig,
              std::string(FamilyName(f)) + " has no goodness-of-fit design");
  if (kind == "fit" || kind == "test1" || kind == "test2" || kind == "gof" || kind == "ingest")
    Require(!data.empty(), ErrorKind::kConfig, kind + " needs a data file");
  if (kind == "test2") Require(!data2.empty(), ErrorKind::kConfig, "test2 needs data2");
  if (kind == "test1")
    Require(null_scenario.has_value() || !model.empty(), ErrorKind::kConfig,
            "test1 needs a null (null_scenario or model)");
  if (kind == "ingest") Require(!schema.is_null(), ErrorKind::kConfig, "ingest needs a schema");
  if (kind == "simulate") {
    Require(scenario.has_value(), ErrorKind::kConfig, "simulate needs a scenario");
    Require(sizes.size() == 1 && sizes[0] >= 1, ErrorKind::kConfig, "simulate needs one n >= 1");
  }
  if (kind == "curves") {
    Require(scenario.has_value() || !model.empty(), ErrorKind::kConfig,
            "curves needs a model file or a scenario");
    Require(!probes.empty(), ErrorKind::kConfig, "curves needs probe points");
    Require(grid_points >= 2, ErrorKind::kConfig, "grid_points must be >= 2");
  }
}

std::string ConfigHash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- runners ---

namespace {

struct Failure {
  std::string cell;
  std::size_t replication = 0;
  std::string error;
};

class Run {
 public:
  explicit Run(const ExperimentSpec& spec) : spec_(spec) {
    std::error_code ec;
    fs::create_directories(spec.out_dir, ec);
    Require(!ec && fs::is_directory(spec.out_dir), ErrorKind::kIo,
            "cannot create output directory " + spec.out_dir);
  }

  std::string Path(const std::string& name) const { return (fs::path(spec_.out_dir) / name).string(); }

  std::ofstream Open(const std::string& name) {
    std::ofstream out(Path(name), std::ios::binary);
    Require(out.good(), ErrorKind::kIo, "cannot write " + Path(name));
    files_.push_back(name);
    return out;
  }

  void Wrote(const std::string& name) { files_.push_back(name); }

  void Attempted(std::size_t n) { attempted_ += n; }
  void Failed(const std::string& cell, std::size_t rep, const std::string& what) {
    failures_.push_back({cell, rep, what});
  }
  void Record(const std::string& cell, const MonteCarloResult& mc) {
    attempted_ += mc.replications;
    for (const auto& [r, msg] : mc.failures) Failed(cell, r, msg);
  }

  RunSummary Finish(nlohmann::json summary, double seconds) {
    RunSummary out;
    nlohmann::json fails = nlohmann::json::array();
    for (const auto& f : failures_)
      fails.push_back({{"cell", f.cell}, {"replication", f.replication}, {"error", f.error}});
    const double frac = attempted_ ? static_cast<double>(failures_.size()) / attempted_ : 0.0;
    out.exit_code = frac > spec_.failure_threshold ? 4 : 0;
    const nlohmann::json config = spec_.ToJson();
    files_.push_back("manifest.json");
    out.manifest = {{"kind", spec_.kind},
                    {"scale", ScaleName(spec_.scale)},
                    {"seed", spec_.seed},
                    {"config", config},
                    {"config_hash", ConfigHash(config)},
                    {"versions",
                     {{"dnnhazard", "1.0.0"},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                   std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                   std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                      {"compiler", __VERSION__}}},
                    {"wall_time_seconds", seconds},
                    {"replications_attempted", attempted_},
                    {"failures", fails},
                    {"failure_fraction", frac},
                    {"exit_code", out.exit_code},
                    {"files", files_},
                    {"summary", summary}};
    std::ofstream m(Path("manifest.json"), std::ios::binary);
    Require(m.good(), ErrorKind::kIo, "cannot write manifest");
    m << out.manifest.dump(2) << "\n";
    out.files = files_;
    out.summary = std::move(summary);
    return out;
  }

  const ExperimentSpec& spec() const { return spec_; }

 private:
  const ExperimentSpec& spec_;
  std::vector<std::string> files_;
  std::vector<Failure> failures_;
  std::size_t attempted_ = 0;
};

std::string F(double v) { return FormatDouble(v); }

SimScenario Prepared(const ExperimentSpec& spec, Family f, double rate, std::uint64_t cell_seed,
                     bool gof) {
  SimScenario sc = SimScenario::Make(f, rate);
  sc.gof_design = gof;
  return PrepareScenario(sc, DeriveSeed(cell_seed, {0xCA11}), spec.pilot_size);
}

// Percentile bootstrap interval of the median.
Interval BootstrapMedian(const std::vector<double>& v, std::size_t b, std::uint64_t seed) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  Rng rng(seed);
  std::vector<double> meds(b), draw(v.size());
  for (std::size_t k = 0; k < b; ++k) {
    for (auto& d : draw) d = v[rng.Below(v.size())];
    meds[k] = Median(draw);
  }
  return {Quantile(meds, 0.025), Quantile(meds, 0.975)};
}

std::unique_ptr<CumHazardModel> FitBaseline(ModelClass c, const Dataset& data) {
  switch (c) {
    case ModelClass::kCox:
      return std::make_unique<CoxFit>(FitCox(data));
    case ModelClass::kAh:
      return std::make_unique<AhFit>(FitAdditiveHazards(data));
    default:
      return std::make_unique<AftFit>(FitAftNormal(data));
  }
}

// Tables 1-3: CHF discrepancy of the DNN and the matching classical fit on
// the held-out events; both estimators see the same training data.
nlohmann::json RunEstimationTable(Run& run) {
  const auto& spec = run.spec();
  auto table = run.Open(spec.kind + ".csv");
  auto reps = run.Open(spec.kind + "_replications.csv");
  table << "data,n,censoring,method,replications,completed,median,median_lo,median_hi,mean,sd\n";
  reps << "data,n,censoring,replication,baseline,dnn,depth,width,learning_rate,best_epoch\n";
  nlohmann::json cells = nlohmann::json::array();
  for (Family f : spec.families) {
    const ModelClass cls = ClassOf(f);
    for (std::size_t n : spec.sizes) {
      for (double rate : spec.censoring) {
        const std::uint64_t cell_seed = CellSeed(spec.seed, f, n, rate);
        const SimScenario sc = Prepared(spec, f, rate, cell_seed, false);
        const ScenarioHazard truth(sc);
        struct Rep {
          bool ok = false;
          double base = 0.0, dnn = 0.0;
          HyperParams hp;
          int best_epoch = 0;
          std::string error;
        };
        std::vector<Rep> out(spec.replications);
        ParallelFor(spec.replications, spec.workers, [&](std::size_t r) {
          const std::uint64_t rs = DeriveSeed(cell_seed, {r});
          try {
            const auto gen = Generate(sc, n, DeriveSeed(rs, {1}));
            TrainConfig cfg = spec.train;
            cfg.seed = DeriveSeed(rs, {2});
            const FitResult fit = Fit(gen.data, cfg);
            const Dataset learn = Dataset::Concat(gen.data.Subset(fit.split.train),
                                                  gen.data.Subset(fit.split.validation));
            const Dataset test = gen.data.Subset(fit.split.test);
            const auto base = FitBaseline(cls, learn);
            out[r].base = ChfDiscrepancy(truth, *base, test);
            out[r].dnn = ChfDiscrepancy(truth, fit.model, test);
            out[r].hp = fit.chosen;
            out[r].best_epoch = fit.best_epoch;
            out[r].ok = true;
          } catch (const Error& e) {
            if (e.kind() == ErrorKind::kInternal) throw;
            out[r].error = std::string(ErrorKindName(e.kind())) + ": " + e.what();
          }
        });
        const std::string cell =
            std::string(FamilyName(f)) + "/n=" + std::to_string(n) + "/c=" + F(rate);
        run.Attempted(spec.replications);
        std::vector<double> base, dnn;
        for (std::size_t r = 0; r < out.size(); ++r) {
          if (!out[r].ok) {
            run.Failed(cell, r, out[r].error);
            continue;
          }
          base.push_back(out[r].base);
          dnn.push_back(out[r].dnn);
          reps << FamilyName(f) << ',' << n << ',' << F(rate) << ',' << r << ','
               << F(out[r].base) << ',' << F(out[r].dnn) << ',' << out[r].hp.depth << ','
               << out[r].hp.width << ',' << F(out[r].hp.learning_rate) << ','
               << out[r].best_epoch << '\n';
        }
        nlohmann::json jc = {{"data", FamilyName(f)},
                             {"n", n},
                             {"censoring", rate},
                             {"replications", spec.replications},
                             {"completed", base.size()}};
        const std::pair<const char*, const std::vector<double>*> methods[] = {
            {ClassName(cls), &base}, {"DNN", &dnn}};
        std::uint64_t tag = 0;
        for (const auto& [name, vals] : methods) {
          const Interval band = BootstrapMedian(*vals, spec.bootstrap, DeriveSeed(cell_seed, {0xB007, tag++}));
          const double med = vals->empty() ? std::nan("") : Median(*vals);
          const double mean = vals->empty() ? std::nan("") : Mean(*vals);
          const double sd = vals->size() > 1 ? SampleSd(*vals) : std::nan("");
          table << FamilyName(f) << ',' << n << ',' << F(rate) << ',' << name << ','
                << spec.replications << ',' << vals->size() << ',' << F(med) << ','
                << F(band.lo) << ',' << F(band.hi) << ',' << F(mean) << ',' << F(sd) << '\n';
          jc[name == std::string("DNN") ? "dnn" : "baseline"] = {
              {"method", name}, {"median", med}, {"median_ci", {band.lo, band.hi}}, {"mean", mean}};
        }
        cells.push_back(jc);
      }
    }
  }
  return {{"cells", cells}};
}

void WriteRateRow(std::ostream& out, const MonteCarloColumn& c, const MonteCarloResult& mc) {
  out << mc.replications << ',' << mc.completed << ',' << c.rejections << ',' << F(c.rate) << ','
      << F(c.ci.lo) << ',' << F(c.ci.hi) << ',' << F(c.z.empty() ? std::nan("") : Mean(c.z))
      << ',' << F(c.z.size() > 1 ? SampleSd(c.z) : std::nan("")) << '\n';
}

nlohmann::json ColumnJson(const MonteCarloColumn& c) {
  return {{"rejections", c.rejections},
          {"rate", c.rate},
          {"ci", {c.ci.lo, c.ci.hi}},
          {"z_mean", c.z.empty() ? std::nan("") : Mean(c.z)},
          {"z_sd", c.z.size() > 1 ? SampleSd(c.z) : std::nan("")}};
}

const char* kRateCols = "replications,completed,rejections,rate,ci_lo,ci_hi,z_mean,z_sd\n";

// Table 4: one DNN fit per replication, tested against every null family's
// true log-hazard on the training part.
nlohmann::json RunOneSampleTable(Run& run) {
  const auto& spec = run.spec();
  auto table = run.Open("table4.csv");
  table << "null,data,weight,n," << kRateCols;
  std::vector<std::unique_ptr<ScenarioHazard>> nulls;
  for (Family f : spec.null_families)
    nulls.push_back(std::make_unique<ScenarioHazard>(SimScenario::Make(f, 0.4)));
  std::vector<std::string> labels;
  for (Family nf : spec.null_families)
    for (const auto& w : spec.weights) labels.push_back(std::string(FamilyName(nf)) + "|" + w.Label());
  nlohmann::json cells = nlohmann::json::array();
  for (Family f : spec.families) {
    for (std::size_t n : spec.sizes) {
      const std::uint64_t cell_seed = CellSeed(spec.seed, f, n, spec.censoring[0]);
      const SimScenario sc = Prepared(spec, f, spec.censoring[0], cell_seed, false);
      const auto mc = MonteCarloRejectionRates(
          spec.replications, cell_seed, labels,
          [&](std::uint64_t rs, std::size_t) {
            const auto gen = Generate(sc, n, DeriveSeed(rs, {1}));
            TrainConfig cfg = spec.train;
            cfg.seed = DeriveSeed(rs, {2});
            const FitResult fit = Fit(gen.data, cfg);
            const Dataset train = gen.data.Subset(fit.split.train);
            std::vector<TestReport> all;
            for (const auto& null : nulls) {
              auto r = OneSampleTests(train, fit.model, *null, spec.weights);
              all.insert(all.end(), r.begin(), r.end());
            }
            return all;
          },
          0.95, spec.workers);
      run.Record(std::string(FamilyName(f)) + "/n=" + std::to_string(n), mc);
      std::size_t k = 0;
      for (Family nf : spec.null_families) {
        for (const auto& w : spec.weights) {
          const auto& c = mc.columns[k++];
          table << ClassName(ClassOf(nf)) << ',' << ClassName(ClassOf(f)) << ',' << w.Label() << ','
                << n << ',';
          WriteRateRow(table, c, mc);
          nlohmann::json jc = ColumnJson(c);
          jc["null"] = FamilyName(nf);
          jc["data"] = FamilyName(f);
          jc["weight"] = w.Label();
          jc["n"] = n;
          jc["completed"] = mc.completed;
          cells.push_back(jc);
        }
      }
    }
  }
  return {{"cells", cells}};
}

// Table 5: sample 1 (shift 0) and its fit are shared by every shift of a
// replication; sample 2 reuses one stream across shifts.
nlohmann::json RunTwoSampleTable(Run& run) {
  const auto& spec = run.spec();
  auto table = run.Open("table5.csv");
  table << "model,weight,shift,n1,n2," << kRateCols;
  std::vector<std::string> labels;
  for (double c : spec.shifts)
    for (const auto& w : spec.weights) labels.push_back("c=" + F(c) + "|" + w.Label());
  nlohmann::json cells = nlohmann::json::array();
  for (Family f : spec.families) {
    for (std::size_t n : spec.sizes) {
      const std::uint64_t cell_seed = CellSeed(spec.seed, f, n, spec.censoring[0]);
      const SimScenario sc = Prepared(spec, f, spec.censoring[0], cell_seed, false);
      const auto mc = MonteCarloRejectionRates(
          spec.replications, cell_seed, labels,
          [&](std::uint64_t rs, std::size_t) {
            TrainConfig cfg = spec.train;
            SimScenario s0 = sc;
            s0.shift = 0.0;
            const auto a = Generate(s0, n, DeriveSeed(rs, {1}));
            cfg.seed = DeriveSeed(rs, {3});
            const FitResult f1 = Fit(a.data, cfg);
            const Dataset t1 = a.data.Subset(f1.split.train);
            std::vector<TestReport> all;
            for (double c : spec.shifts) {
              SimScenario s2 = sc;
              s2.shift = c;
              const auto b = Generate(s2, n, DeriveSeed(rs, {2}));
              cfg.seed = DeriveSeed(rs, {4});
              const FitResult f2 = Fit(b.data, cfg);
              const Dataset t2 = b.data.Subset(f2.split.train);
              std::optional<FitResult> pooled;
              if (spec.variance_mode == VarianceMode::kPooled) {
                TrainConfig pc = cfg;
                pc.seed = DeriveSeed(rs, {5});
                pooled = FitSplit(Dataset::Concat(t1, t2),
                                  Dataset::Concat(a.data.Subset(f1.split.validation),
                                                  b.data.Subset(f2.split.validation)),
                                  std::max(a.data.tau, b.data.tau), pc);
              }
              auto r = TwoSampleTests(t1, t2, f1.model, f2.model, spec.weights,
                                      spec.variance_mode, pooled ? &pooled->model : nullptr);
              all.insert(all.end(), r.begin(), r.end());
            }
            return all;
          },
          0.95, spec.workers);
      run.Record(std::string(FamilyName(f)) + "/n=" + std::to_string(n), mc);
      const std::size_t n_fit =
          static_cast<std::size_t>(std::llround(spec.train.split.train * static_cast<double>(n)));
      std::size_t k = 0;
      for (double c : spec.shifts) {
        for (const auto& w : spec.weights) {
          const auto& col = mc.columns[k++];
          table << ClassName(ClassOf(f)) << ',' << w.Label() << ',' << F(c) << ',' << n_fit << ','
                << n_fit << ',';
          WriteRateRow(table, col, mc);
          nlohmann::json jc = ColumnJson(col);
          jc["data"] = FamilyName(f);
          jc["weight"] = w.Label();
          jc["shift"] = c;
          jc["completed"] = mc.completed;
          cells.push_back(jc);
        }
      }
    }
  }
  return {{"cells", cells}};
}

std::unique_ptr<NullFitter> MakeNullFitter() { return std::make_unique<SplineCoxNull>(); }

// Table 6: sample-split goodness-of-fit test of the linear Cox model.
nlohmann::json RunGofTable(Run& run) {
  const auto& spec = run.spec();
  auto table = run.Open("table6.csv");
  table << "data,weight,n," << kRateCols;
  std::vector<std::string> labels;
  for (const auto& w : spec.weights) labels.push_back(w.Label());
  const auto null_fitter = MakeNullFitter();
  GofOptions opt;
  opt.split = spec.gof_split;
  opt.influence = spec.influence;
  nlohmann::json cells = nlohmann::json::array();
  for (Family f : spec.families) {
    for (std::size_t n : spec.sizes) {
      const std::uint64_t cell_seed = CellSeed(spec.seed, f, n, spec.censoring[0]);
      const SimScenario sc = Prepared(spec, f, spec.censoring[0], cell_seed, true);
      const auto mc = MonteCarloRejectionRates(
          spec.replications, cell_seed, labels,
          [&](std::uint64_t rs, std::size_t) {
            const auto gen = Generate(sc, n, DeriveSeed(rs, {1}));
            return GofTests(gen.data, *null_fitter, spec.train, spec.weights, DeriveSeed(rs, {2}), opt)
                .reports;
          },
          0.95, spec.workers);
      run.Record(std::string(FamilyName(f)) + "/n=" + std::to_string(n), mc);
      for (std::size_t k = 0; k < spec.weights.size(); ++k) {
        const auto& c = mc.columns[k];
        table << FamilyName(f) << ',' << spec.weights[k].Label() << ',' << n << ',';
        WriteRateRow(table, c, mc);
        nlohmann::json jc = ColumnJson(c);
        jc["data"] = FamilyName(f);
        jc["weight"] = spec.weights[k].Label();
        jc["n"] = n;
        jc["completed"] = mc.completed;
        cells.push_back(jc);
      }
    }
  }
  return {{"cells", cells}};
}

void WriteReports(std::ostream& out, const std::vector<TestReport>& reports) {
  out << "kind,weight,statistic,variance,z,p_value,reject,n,n1,n2,events,variance_mode\n";
  for (const auto& r : reports)
    out << r.kind << ',' << r.weight.Label() << ',' << F(r.statistic) << ',' << F(r.variance) << ','
        << F(r.z) << ',' << F(r.p_value) << ',' << (r.reject ? 1 : 0) << ',' << r.n << ',' << r.n1
        << ',' << r.n2 << ',' << r.events << ',' << r.variance_mode << '\n';
}

nlohmann::json ReportsJson(const std::vector<TestReport>& reports) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : reports) a.push_back(r.ToJson());
  return a;
}

void WriteJsonFile(Run& run, const std::string& name, const nlohmann::json& j) {
  auto out = run.Open(name);
  out << j.dump(2) << "\n";
}

TrainConfig SeededTrain(const ExperimentSpec& spec, std::uint64_t stream) {
  TrainConfig cfg = spec.train;
  cfg.seed = DeriveSeed(spec.seed, {stream});
  return cfg;
}

nlohmann::json RunFit(Run& run) {
  const auto& spec = run.spec();
  const Dataset data = ReadDatasetCsv(spec.data);
  const FitResult fit = Fit(data, SeededTrain(spec, 1));
  WriteJsonFile(run, "model.json", fit.model.ToJson());
  WriteJsonFile(run, "fit.json", fit.ToJson());
  auto curve = run.Open("training_curve.csv");
  curve << "epoch,train_loglik,validation_loglik\n";
  curve << 0 << ',' << F(fit.initial_train_loglik) << ',' << F(fit.initial_validation_loglik) << '\n';
  for (std::size_t e = 0; e < fit.train_curve.size(); ++e)
    curve << e + 1 << ',' << F(fit.train_curve[e]) << ',' << F(fit.validation_curve[e]) << '\n';
  nlohmann::json s = {{"chosen", fit.chosen.ToJson()},
                      {"best_validation_loglik", fit.best_validation_loglik},
                      {"best_epoch", fit.best_epoch},
                      {"n", data.size()},
                      {"events", data.events()}};
  if (!fit.split.test.empty())
    s["test_loglik"] = MeanLogLikelihood(fit.model, data.Subset(fit.split.test));
  return s;
}

nlohmann::json RunTest1(Run& run) {
  const auto& spec = run.spec();
  const Dataset data = ReadDatasetCsv(spec.data);
  std::unique_ptr<LogHazardModel> null;
  if (spec.null_scenario)
    null = std::make_unique<ScenarioHazard>(*spec.null_scenario);
  else {
    std::ifstream in(spec.model);
    Require(in.good(), ErrorKind::kIo, "cannot read " + spec.model);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorKind::kData, std::string("malformed model file: ") + e.what());
    }
    null = std::make_unique<FittedHazard>(FittedHazard::FromJson(j));
  }
  const FitResult fit = Fit(data, SeededTrain(spec, 1));
  const auto reports = OneSampleTests(data.Subset(fit.split.train), fit.model, *null, spec.weights);
  auto out = run.Open("tests.csv");
  WriteReports(out, reports);
  return {{"reports", ReportsJson(reports)}, {"chosen", fit.chosen.ToJson()}};
}

nlohmann::json RunTest2(Run& run) {
  const auto& spec = run.spec();
  Dataset a = ReadDatasetCsv(spec.data);
  Dataset b = ReadDatasetCsv(spec.data2);
  // Each fit is evaluated on both samples, so both share one horizon.
  a.tau = b.tau = std::max(a.tau, b.tau);
  const FitResult f1 = Fit(a, SeededTrain(spec, 1));
  const FitResult f2 = Fit(b, SeededTrain(spec, 2));
  const Dataset t1 = a.Subset(f1.split.train), t2 = b.Subset(f2.split.train);
  std::optional<FitResult> pooled;
  if (spec.variance_mode == VarianceMode::kPooled)
    pooled = FitSplit(Dataset::Concat(t1, t2),
                      Dataset::Concat(a.Subset(f1.split.validation), b.Subset(f2.split.validation)),
                      std::max(a.tau, b.tau), SeededTrain(spec, 3));
  const auto reports = TwoSampleTests(t1, t2, f1.model, f2.model, spec.weights, spec.variance_mode,
                                      pooled ? &pooled->model : nullptr);
  auto out = run.Open("tests.csv");
  WriteReports(out, reports);
  return {{"reports", ReportsJson(reports)}};
}

nlohmann::json RunGof(Run& run) {
  const auto& spec = run.spec();
  const Dataset data = ReadDatasetCsv(spec.data);
  GofOptions opt;
  opt.split = spec.gof_split;
  opt.influence = spec.influence;
  const auto null_fitter = MakeNullFitter();
  const GofResult res = GofTests(data, *null_fitter, spec.train, spec.weights,
                                 DeriveSeed(spec.seed, {1}), opt);
  auto out = run.Open("tests.csv");
  WriteReports(out, res.reports);
  return {{"reports", ReportsJson(res.reports)}, {"chosen", res.dnn.chosen.ToJson()}};
}

nlohmann::json RunSimulate(Run& run) {
  const auto& spec = run.spec();
  const SimScenario sc = PrepareScenario(*spec.scenario, DeriveSeed(spec.seed, {0xCA11}),
                                         spec.pilot_size);
  const auto gen = Generate(sc, spec.sizes[0], DeriveSeed(spec.seed, {1}));
  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;
  if (spec.truth_columns) {
    std::vector<double> lam;
    for (const auto& s : gen.data.subjects) lam.push_back(TrueCumHazard(sc, s.y, s.x));
    names = {"T", "C", "Lambda_at_Y"};
    cols = {gen.event_times, gen.censoring_times, lam};
  }
  auto out = run.Open("data.csv");
  WriteDatasetCsv(gen.data, out, names, cols);
  WriteJsonFile(run, "scenario.json", sc.ToJson());
  return {{"n", gen.data.size()},
          {"events", gen.data.events()},
          {"censoring_rate", gen.data.censoring_rate()},
          {"tau", gen.data.tau}};
}

nlohmann::json RunIngest(Run& run) {
  const auto& spec = run.spec();
  const CovariateSchema schema = CovariateSchema::FromJson(spec.schema);
  const IngestResult res = IngestCsv(spec.data, schema);
  auto out = run.Open("dataset.csv");
  WriteDatasetCsv(res.data, out);
  WriteJsonFile(run, "encoder.json", res.encoder.ToJson());
  const SplitFractions fr = SplitPreset(spec.split_preset);
  const DataSplit split = SplitDataset(res.data.size(), fr, DeriveSeed(spec.seed, {1}), true);
  std::vector<std::string> part(res.data.size());
  for (auto i : split.train) part[i] = "train";
  for (auto i : split.validation) part[i] = "validation";
  for (auto i : split.test) part[i] = "test";
  auto sp = run.Open("split.csv");
  sp << "row,part\n";
  for (std::size_t i = 0; i < part.size(); ++i) sp << i << ',' << part[i] << '\n';
  return {{"report", res.report.ToJson()},
          {"covariates", res.encoder.names},
          {"p", res.data.p},
          {"split_preset", spec.split_preset}};
}

nlohmann::json RunCurves(Run& run) {
  const auto& spec = run.spec();
  std::vector<CurveSeries> series;
  std::optional<FittedHazard> fh;
  std::optional<ScenarioHazard> truth;
  double tmax = 0.0;
  if (!spec.model.empty()) {
    std::ifstream in(spec.model);
    Require(in.good(), ErrorKind::kIo, "cannot read " + spec.model);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorKind::kData, std::string("malformed model file: ") + e.what());
    }
    fh = FittedHazard::FromJson(j);
    series.push_back({"model", &*fh});
    tmax = fh->tau();
  }
  if (spec.scenario) {
    SimScenario sc = *spec.scenario;
    if (!sc.tau) sc = PrepareScenario(sc, DeriveSeed(spec.seed, {0xCA11}), spec.pilot_size);
    truth.emplace(sc);
    series.push_back({"truth", &*truth});
    tmax = tmax > 0.0 ? std::min(tmax, *sc.tau) : *sc.tau;
  }
  std::vector<double> grid(spec.grid_points);
  for (std::size_t k = 0; k < grid.size(); ++k)
    grid[k] = tmax * static_cast<double>(k) / static_cast<double>(grid.size() - 1);
  WriteCurvesCsv(series, spec.probes, grid, run.Path("curves.csv"));
  run.Wrote("curves.csv");
  WriteCurvesSvg(series, spec.probes, grid, run.Path("curves.svg"));
  run.Wrote("curves.svg");
  return {{"series", series.size()}, {"probes", spec.probes.size()}, {"t_max", tmax}};
}

}  // namespace

RunSummary RunExperiment(const ExperimentSpec& spec) {
  spec.Validate();
  const auto t0 = std::chrono::steady_clock::now();
  Run run(spec);
  nlohmann::json summary;
  const std::string& k = spec.kind;
  if (k == "table1" || k == "table2" || k == "table3")
    summary = RunEstimationTable(run);
  else if (k == "table4")
    summary = RunOneSampleTable(run);
  else if (k == "table5")
    summary = RunTwoSampleTable(run);
  else if (k == "table6")
    summary = RunGofTable(run);
  else if (k == "fit")
    summary = RunFit(run);
  else if (k == "test1")
    summary = RunTest1(run);
  else if (k == "test2")
    summary = RunTest2(run);
  else if (k == "gof")
    summary = RunGof(run);
  else if (k == "simulate")
    summary = RunSimulate(run);
  else if (k == "ingest")
    summary = RunIngest(run);
  else
    summary = RunCurves(run);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run.Finish(std::move(summary), secs);
}

}  // namespace dnnh
