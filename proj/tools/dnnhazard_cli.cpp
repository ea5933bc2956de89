// dnnhazard command line: thin front end over the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dnnhazard/dnnhazard.h"
#include "json.hpp"

namespace {

// Exit statuses: 0 ok, 2 config, 3 data, 4 numeric failure, 1 internal.
int ExitFor(dnnh_status st) {
  switch (st) {
    case DNNH_OK:
      return 0;
    case DNNH_E_INVALID_ARGUMENT:
    case DNNH_E_CONFIG:
      return 2;
    case DNNH_E_DATA:
    case DNNH_E_IO:
      return 3;
    case DNNH_E_NUMERIC:
      return 4;
    default:
      return 1;
  }
}

struct Options {
  std::string config;
  std::string out;
  std::string scale;
  std::string data;
  std::string data2;
  std::string model;
  long long seed = -1;
  int workers = 0;
  long long replications = 0;
  long long n = 0;
  bool quiet = false;
};

void AddCommon(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config, "experiment config JSON file");
  cmd->add_option("--seed", o.seed, "master seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("-o,--out", o.out, "output directory");
  cmd->add_option("--scale", o.scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--workers", o.workers, "worker threads (0 = config / default)");
  cmd->add_flag("-q,--quiet", o.quiet, "print nothing on success");
}

int Run(const std::string& kind, const Options& o) {
  nlohmann::json cfg = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) {
      std::cerr << "error: cannot read config " << o.config << "\n";
      return 2;
    }
    try {
      in >> cfg;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: config " << o.config << ": " << e.what() << "\n";
      return 2;
    }
    if (!cfg.is_object()) {
      std::cerr << "error: config must be a JSON object\n";
      return 2;
    }
    // A manifest from an earlier run repeats that run.
    if (cfg.contains("config_hash") && cfg.contains("config") && cfg["config"].is_object()) {
      nlohmann::json inner = cfg["config"];
      cfg = std::move(inner);
    }
  }
  if (!o.data.empty()) cfg["data"] = o.data;
  if (!o.data2.empty()) cfg["data2"] = o.data2;
  if (!o.model.empty()) cfg["model"] = o.model;
  if (o.replications > 0) cfg["replications"] = o.replications;
  if (o.n > 0) cfg["n"] = o.n;
  const std::string text = cfg.dump();

  dnnh_run_overrides ov{};
  ov.kind = kind.c_str();
  ov.out_dir = o.out.empty() ? nullptr : o.out.c_str();
  ov.scale = o.scale.empty() ? nullptr : o.scale.c_str();
  ov.has_seed = o.seed >= 0;
  ov.seed = o.seed >= 0 ? static_cast<uint64_t>(o.seed) : 0;
  ov.workers = o.workers;
  int exit_code = 0;
  char* manifest = nullptr;
  const dnnh_status st = dnnh_run_experiment(text.c_str(), &ov, &exit_code, &manifest);
  if (st != DNNH_OK) {
    std::cerr << "error (" << dnnh_status_name(st) << "): " << dnnh_last_error() << "\n";
    return ExitFor(st);
  }
  const auto m = nlohmann::json::parse(manifest);
  dnnh_string_free(manifest);
  if (!o.quiet) {
    const std::string dir = m["config"]["out_dir"];
    std::cout << kind << ": wrote";
    for (const auto& f : m["files"]) std::cout << ' ' << dir << '/' << f.get<std::string>();
    std::cout << "\n";
    if (!m["failures"].empty())
      std::cout << m["failures"].size() << " replication(s) failed (fraction "
                << m["failure_fraction"].get<double>() << ")\n";
  }
  if (exit_code != 0)
    std::cerr << "error: replication failure fraction above threshold\n";
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural conditional-hazard estimation and hazard tests for censored data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dnnh_version()));
  Options o;
  std::string table;

  auto* sim = app.add_subcommand("simulate", "generate a censored dataset from a scenario");
  auto* fit = app.add_subcommand("fit", "fit the hazard network to a CSV dataset");
  auto* t1 = app.add_subcommand("test1", "one-sample test against a null hazard");
  auto* t2 = app.add_subcommand("test2", "two-sample test between two CSV datasets");
  auto* gof = app.add_subcommand("gof", "goodness-of-fit test of the linear Cox model");
  auto* tab = app.add_subcommand("table", "reproduce a simulation table (1-6)");
  auto* ing = app.add_subcommand("ingest", "encode a raw covariate CSV with a schema");
  auto* cur = app.add_subcommand("curves", "export cumulative hazard curves (CSV + SVG)");
  for (auto* c : {sim, fit, t1, t2, gof, tab, ing, cur}) AddCommon(c, o);
  for (auto* c : {fit, t1, t2, gof, ing}) c->add_option("--data", o.data, "input CSV");
  t2->add_option("--data2", o.data2, "second sample CSV");
  for (auto* c : {t1, cur}) c->add_option("--model", o.model, "fitted model JSON");
  sim->add_option("-n", o.n, "number of subjects")->check(CLI::PositiveNumber);
  tab->add_option("k", table, "table number")->required()->check(CLI::IsMember(
      {"1", "2", "3", "4", "5", "6"}));
  tab->add_option("--replications", o.replications, "replications per cell")
      ->check(CLI::PositiveNumber);
  tab->add_option("-n", o.n, "sample size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  for (auto* c : app.get_subcommands()) {
    const std::string kind = c->get_name() == "table" ? "table" + table : c->get_name();
    return Run(kind, o);
  }
  return 2;
}
