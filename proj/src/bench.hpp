#pragma once

// Experiment orchestration: simulation tables, single fits and tests on CSV
// data, SUPPORT-style ingestion and curve export. Every run writes its CSV
// outputs plus a manifest.json that is enough to repeat it exactly.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "hazard.hpp"
#include "infer.hpp"
#include "simgen.hpp"
#include "trainer.hpp"

namespace dnnh {

enum class Scale { kDesk, kPaper };
const char* ScaleName(Scale s);
Scale ParseScale(const std::string& s);

struct ExperimentSpec {
  // table1..table6, fit, test1, test2, gof, ingest, simulate, curves
  std::string kind;
  Scale scale = Scale::kDesk;
  std::uint64_t seed = 20240101;
  std::string out_dir = "out";
  std::size_t workers = 1;
  double failure_threshold = 0.10;

  // Simulation tables.
  std::vector<Family> families;
  std::vector<Family> null_families;  // table4
  std::vector<std::size_t> sizes;
  std::vector<double> censoring;
  std::vector<double> shifts;  // table5
  std::size_t replications = 1;
  std::size_t pilot_size = 50000;
  std::vector<WeightSpec> weights;
  TrainConfig train;
  VarianceMode variance_mode = VarianceMode::kSplit;
  InfluenceMode influence = InfluenceMode::kAnalytic;
  SplitFractions gof_split{0.42, 0.16, 0.42};
  std::size_t bootstrap = 1000;

  // simulate: one scenario, `sizes[0]` subjects, optional truth columns.
  std::optional<SimScenario> scenario;
  bool truth_columns = true;

  // fit / test1 / test2 / gof / ingest / curves on files.
  std::string data;
  std::string data2;
  std::string model;  // fitted model JSON (curves, test1 null)
  std::optional<SimScenario> null_scenario;  // test1 null g0
  nlohmann::json schema;  // ingest
  std::string split_preset = "64/16/20";  // ingest: or "64/36"
  std::vector<std::vector<double>> probes;  // curves
  std::size_t grid_points = 101;

  // Defaults for `kind` at `scale`, then the JSON fields on top.
  static ExperimentSpec FromJson(const nlohmann::json& j, std::optional<Scale> scale = {});
  static ExperimentSpec Defaults(const std::string& kind, Scale scale);
  nlohmann::json ToJson() const;
  void Validate() const;
};

struct RunSummary {
  int exit_code = 0;
  std::vector<std::string> files;
  nlohmann::json manifest;
  nlohmann::json summary;
};

// Runs the pipeline for spec.kind and writes its files into spec.out_dir.
// Exit code 4 when more than failure_threshold of the replications failed.
RunSummary RunExperiment(const ExperimentSpec& spec);

// FNV-1a 64 of the canonical (sorted-key, compact) JSON dump, as hex.
std::string ConfigHash(const nlohmann::json& j);

// --- ingestion ---

struct CategoricalColumn {
  std::string name;
  std::string baseline;
  // Levels in dummy order; empty means "sorted levels seen in the data".
  std::vector<std::string> levels;
};

struct CovariateSchema {
  std::string time;
  std::string event;
  std::vector<std::string> numeric;
  std::vector<CategoricalColumn> categorical;
  // Cells counted as missing (after trimming); rows with any are dropped.
  std::vector<std::string> missing_tokens{"", "NA", "NaN", "nan", "."};

  void Validate() const;
  nlohmann::json ToJson() const;
  static CovariateSchema FromJson(const nlohmann::json& j);
};

// Learned encoding: dummy levels and min-max maps, reusable at predict time.
struct CovariateEncoder {
  std::vector<std::string> names;  // output covariate names
  std::vector<std::string> numeric;
  std::vector<double> min;
  std::vector<double> span;
  std::vector<CategoricalColumn> categorical;  // levels resolved

  // Encodes one row given by header -> cell; throws kSchema on an unknown
  // categorical level and kData on a non-numeric cell.
  std::vector<double> Encode(const std::map<std::string, std::string>& row) const;
  nlohmann::json ToJson() const;
  static CovariateEncoder FromJson(const nlohmann::json& j);
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t dropped = 0;
  std::size_t kept = 0;
  std::size_t nonpositive_times = 0;
  std::vector<std::string> warnings;

  nlohmann::json ToJson() const;
};

struct IngestResult {
  Dataset data;
  CovariateEncoder encoder;
  IngestReport report;
};

IngestResult IngestCsv(const std::string& path, const CovariateSchema& schema);

// Split presets for ingested data: "64/16/20" or "64/36" (no test part).
SplitFractions SplitPreset(const std::string& name);

// --- curves ---

struct CurveSeries {
  std::string label;
  const CumHazardModel* model = nullptr;
};

// Lambda(t|x) and S(t|x) for every model and probe on `grid`; probes are
// checked with CheckProbe first. Rows: model, probe, t, Lambda, S.
void WriteCurvesCsv(const std::vector<CurveSeries>& series,
                    const std::vector<std::vector<double>>& probes,
                    const std::vector<double>& grid, const std::string& path);
// One polyline per (model, probe) with axes and tick labels.
void WriteCurvesSvg(const std::vector<CurveSeries>& series,
                    const std::vector<std::vector<double>>& probes,
                    const std::vector<double>& grid, const std::string& path);

}  // namespace dnnh
