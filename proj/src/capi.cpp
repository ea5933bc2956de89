#include "dnnhazard/dnnhazard.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "bench.hpp"
#include "errors.hpp"
#include "infer.hpp"
#include "simgen.hpp"
#include "trainer.hpp"

struct dnnh_dataset {
  dnnh::Dataset data;
};

struct dnnh_model {
  std::shared_ptr<const dnnh::LogHazardModel> model;
  std::shared_ptr<const dnnh::FittedHazard> network;  // set for trained networks
};

namespace {

thread_local std::string g_last_error;

dnnh_status StatusOf(dnnh::ErrorKind k) {
  using dnnh::ErrorKind;
  switch (k) {
    case ErrorKind::kConfig:
      return DNNH_E_CONFIG;
    case ErrorKind::kData:
    case ErrorKind::kSchema:
    case ErrorKind::kDomain:
      return DNNH_E_DATA;
    case ErrorKind::kShape:
      return DNNH_E_INVALID_ARGUMENT;
    case ErrorKind::kIo:
      return DNNH_E_IO;
    case ErrorKind::kInternal:
      return DNNH_E_INTERNAL;
    default:
      return DNNH_E_NUMERIC;
  }
}

template <class F>
dnnh_status Guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return DNNH_OK;
  } catch (const dnnh::Error& e) {
    g_last_error = std::string(dnnh::ErrorKindName(e.kind())) + ": " + e.what();
    return StatusOf(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("config: ") + e.what();
    return DNNH_E_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "internal: out of memory";
    return DNNH_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal: ") + e.what();
    return DNNH_E_INTERNAL;
  } catch (...) {
    g_last_error = "internal: unknown exception";
    return DNNH_E_INTERNAL;
  }
}

void NotNull(const void* p, const char* what) {
  if (!p) dnnh::Fail(dnnh::ErrorKind::kShape, std::string(what) + " is NULL");
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json ParseJson(const char* text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    dnnh::Fail(dnnh::ErrorKind::kConfig, std::string("malformed ") + what + ": " + e.what());
  }
}

std::vector<dnnh::WeightSpec> Weights(const char* weights_json) {
  if (!weights_json || !*weights_json) return dnnh::StandardWeights();
  const auto j = ParseJson(weights_json, "weights");
  if (!j.is_array()) dnnh::Fail(dnnh::ErrorKind::kConfig, "weights must be an array");
  std::vector<dnnh::WeightSpec> out;
  for (const auto& w : j) out.push_back(dnnh::WeightSpec::FromJson(w));
  if (out.empty()) dnnh::Fail(dnnh::ErrorKind::kConfig, "weights array is empty");
  return out;
}

std::string ReportsJson(const std::vector<dnnh::TestReport>& reports) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : reports) a.push_back(r.ToJson());
  return a.dump();
}

void CheckCovariates(const dnnh_model* model, const double* x, int p, const double* ts,
                     size_t nt, const double* out) {
  NotNull(model, "model");
  NotNull(out, "out");
  if (nt > 0) NotNull(ts, "ts");
  if (p < 0 || (p > 0 && !x)) dnnh::Fail(dnnh::ErrorKind::kShape, "bad covariate vector");
  if (model->network && model->network->dim() != p)
    dnnh::Fail(dnnh::ErrorKind::kShape, "covariate dimension does not match the model");
}

}  // namespace

extern "C" {

const char* dnnh_version(void) { return "1.0.0"; }

const char* dnnh_last_error(void) { return g_last_error.c_str(); }

const char* dnnh_status_name(dnnh_status status) {
  switch (status) {
    case DNNH_OK:
      return "ok";
    case DNNH_E_INVALID_ARGUMENT:
      return "invalid_argument";
    case DNNH_E_CONFIG:
      return "config";
    case DNNH_E_DATA:
      return "data";
    case DNNH_E_NUMERIC:
      return "numeric";
    case DNNH_E_IO:
      return "io";
    case DNNH_E_INTERNAL:
      return "internal";
  }
  return "unknown";
}

void dnnh_string_free(char* s) { std::free(s); }

dnnh_status dnnh_dataset_create(size_t n, int p, const double* y, const int* delta,
                                const double* x, double tau, dnnh_dataset** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = nullptr;
    if (n > 0) {
      NotNull(y, "y");
      NotNull(delta, "delta");
    }
    if (p < 0) dnnh::Fail(dnnh::ErrorKind::kShape, "negative dimension");
    if (p > 0 && n > 0) NotNull(x, "x");
    auto d = std::make_unique<dnnh_dataset>();
    d->data.p = p;
    for (size_t i = 0; i < n; ++i) {
      dnnh::Subject s;
      s.y = y[i];
      s.delta = delta[i];
      s.x.assign(x + i * static_cast<size_t>(p), x + (i + 1) * static_cast<size_t>(p));
      d->data.subjects.push_back(std::move(s));
    }
    d->data.tau = tau > 0.0 ? tau : d->data.max_y();
    d->data.Validate();
    *out = d.release();
  });
}

dnnh_status dnnh_dataset_read_csv(const char* path, dnnh_dataset** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = nullptr;
    auto d = std::make_unique<dnnh_dataset>();
    d->data = dnnh::ReadDatasetCsv(path);
    *out = d.release();
  });
}

dnnh_status dnnh_dataset_write_csv(const dnnh_dataset* data, const char* path) {
  return Guard([&] {
    NotNull(data, "data");
    NotNull(path, "path");
    dnnh::WriteDatasetCsv(data->data, std::string(path));
  });
}

void dnnh_dataset_free(dnnh_dataset* data) { delete data; }

size_t dnnh_dataset_size(const dnnh_dataset* data) { return data ? data->data.size() : 0; }

int dnnh_dataset_dim(const dnnh_dataset* data) { return data ? data->data.p : 0; }

size_t dnnh_dataset_events(const dnnh_dataset* data) { return data ? data->data.events() : 0; }

double dnnh_dataset_tau(const dnnh_dataset* data) { return data ? data->data.tau : 0.0; }

dnnh_status dnnh_dataset_subject(const dnnh_dataset* data, size_t i, double* y, int* delta,
                                 double* x) {
  return Guard([&] {
    NotNull(data, "data");
    if (i >= data->data.size()) dnnh::Fail(dnnh::ErrorKind::kShape, "subject index out of range");
    const auto& s = data->data.subjects[i];
    if (y) *y = s.y;
    if (delta) *delta = s.delta;
    if (x) std::copy(s.x.begin(), s.x.end(), x);
  });
}

dnnh_status dnnh_simulate(const char* scenario_json, size_t n, uint64_t seed, dnnh_dataset** out,
                          char** scenario_out) {
  return Guard([&] {
    NotNull(scenario_json, "scenario_json");
    NotNull(out, "out");
    *out = nullptr;
    if (scenario_out) *scenario_out = nullptr;
    const auto sc = dnnh::PrepareScenario(
        dnnh::SimScenario::FromJson(ParseJson(scenario_json, "scenario")),
        dnnh::DeriveSeed(seed, {0xCA11}));
    auto d = std::make_unique<dnnh_dataset>();
    d->data = dnnh::Generate(sc, n, dnnh::DeriveSeed(seed, {1})).data;
    if (scenario_out) *scenario_out = CopyString(sc.ToJson().dump());
    *out = d.release();
  });
}

dnnh_status dnnh_fit(const dnnh_dataset* data, const char* train_config_json, dnnh_model** out,
                     char** report_out) {
  return Guard([&] {
    NotNull(data, "data");
    NotNull(out, "out");
    *out = nullptr;
    if (report_out) *report_out = nullptr;
    dnnh::TrainConfig cfg;
    if (train_config_json && *train_config_json)
      cfg = dnnh::TrainConfig::FromJson(ParseJson(train_config_json, "training config"));
    dnnh::FitResult fit = dnnh::Fit(data->data, cfg);
    auto m = std::make_unique<dnnh_model>();
    auto net = std::make_shared<const dnnh::FittedHazard>(std::move(fit.model));
    m->model = net;
    m->network = net;
    if (report_out) *report_out = CopyString(fit.ToJson().dump());
    *out = m.release();
  });
}

dnnh_status dnnh_model_from_json(const char* model_json, dnnh_model** out) {
  return Guard([&] {
    NotNull(model_json, "model_json");
    NotNull(out, "out");
    *out = nullptr;
    auto net = std::make_shared<const dnnh::FittedHazard>(
        dnnh::FittedHazard::FromJson(ParseJson(model_json, "model")));
    auto m = std::make_unique<dnnh_model>();
    m->model = net;
    m->network = net;
    *out = m.release();
  });
}

dnnh_status dnnh_model_from_scenario(const char* scenario_json, dnnh_model** out) {
  return Guard([&] {
    NotNull(scenario_json, "scenario_json");
    NotNull(out, "out");
    *out = nullptr;
    auto m = std::make_unique<dnnh_model>();
    m->model = std::make_shared<const dnnh::ScenarioHazard>(
        dnnh::SimScenario::FromJson(ParseJson(scenario_json, "scenario")));
    *out = m.release();
  });
}

dnnh_status dnnh_model_to_json(const dnnh_model* model, char** out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(out, "out");
    *out = nullptr;
    if (!model->network) dnnh::Fail(dnnh::ErrorKind::kConfig, "only trained networks serialize");
    *out = CopyString(model->network->ToJson().dump());
  });
}

void dnnh_model_free(dnnh_model* model) { delete model; }

dnnh_status dnnh_model_log_hazard(const dnnh_model* model, const double* x, int p,
                                  const double* ts, size_t nt, double* out) {
  return Guard([&] {
    CheckCovariates(model, x, p, ts, nt, out);
    model->model->LogHazard({x, static_cast<size_t>(p)}, {ts, nt}, {out, nt});
  });
}

dnnh_status dnnh_model_cum_hazard(const dnnh_model* model, const double* x, int p,
                                  const double* ts, size_t nt, double* out) {
  return Guard([&] {
    CheckCovariates(model, x, p, ts, nt, out);
    for (size_t k = 1; k < nt; ++k)
      if (ts[k] < ts[k - 1]) dnnh::Fail(dnnh::ErrorKind::kShape, "times must be nondecreasing");
    model->model->CumHazardPath({x, static_cast<size_t>(p)}, {ts, nt}, {out, nt});
  });
}

dnnh_status dnnh_model_survival(const dnnh_model* model, const double* x, int p,
                                const double* ts, size_t nt, double* out) {
  const dnnh_status st = dnnh_model_cum_hazard(model, x, p, ts, nt, out);
  if (st == DNNH_OK)
    for (size_t k = 0; k < nt; ++k) out[k] = std::exp(-out[k]);
  return st;
}

dnnh_status dnnh_chf_discrepancy(const dnnh_model* truth, const dnnh_model* estimate,
                                 const dnnh_dataset* data, double* out) {
  return Guard([&] {
    NotNull(truth, "truth");
    NotNull(estimate, "estimate");
    NotNull(data, "data");
    NotNull(out, "out");
    *out = dnnh::ChfDiscrepancy(*truth->model, *estimate->model, data->data);
  });
}

dnnh_status dnnh_one_sample_test(const dnnh_dataset* data, const dnnh_model* fit,
                                 const dnnh_model* null_model, const char* weights_json,
                                 char** reports_out) {
  return Guard([&] {
    NotNull(data, "data");
    NotNull(fit, "fit");
    NotNull(null_model, "null_model");
    NotNull(reports_out, "reports_out");
    *reports_out = nullptr;
    const auto reports =
        dnnh::OneSampleTests(data->data, *fit->model, *null_model->model, Weights(weights_json));
    *reports_out = CopyString(ReportsJson(reports));
  });
}

dnnh_status dnnh_two_sample_test(const dnnh_dataset* data1, const dnnh_dataset* data2,
                                 const dnnh_model* fit1, const dnnh_model* fit2,
                                 const char* weights_json, const char* variance_mode,
                                 const dnnh_model* pooled_fit, char** reports_out) {
  return Guard([&] {
    NotNull(data1, "data1");
    NotNull(data2, "data2");
    NotNull(fit1, "fit1");
    NotNull(fit2, "fit2");
    NotNull(reports_out, "reports_out");
    *reports_out = nullptr;
    const auto mode = dnnh::ParseVarianceMode(variance_mode ? variance_mode : "split");
    const auto reports = dnnh::TwoSampleTests(data1->data, data2->data, *fit1->model,
                                              *fit2->model, Weights(weights_json), mode,
                                              pooled_fit ? pooled_fit->model.get() : nullptr);
    *reports_out = CopyString(ReportsJson(reports));
  });
}

dnnh_status dnnh_run_experiment(const char* config_json, const dnnh_run_overrides* overrides,
                                int* exit_code, char** manifest_out) {
  return Guard([&] {
    NotNull(config_json, "config_json");
    if (exit_code) *exit_code = 0;
    if (manifest_out) *manifest_out = nullptr;
    nlohmann::json j = ParseJson(config_json, "experiment config");
    if (!j.is_object()) dnnh::Fail(dnnh::ErrorKind::kConfig, "experiment config must be an object");
    std::optional<dnnh::Scale> scale;
    if (overrides) {
      if (overrides->kind) j["kind"] = overrides->kind;
      if (overrides->out_dir) j["out_dir"] = overrides->out_dir;
      if (overrides->has_seed) j["seed"] = overrides->seed;
      if (overrides->workers > 0) j["workers"] = overrides->workers;
      if (overrides->scale) {
        scale = dnnh::ParseScale(overrides->scale);
        j["scale"] = overrides->scale;
      }
    }
    const auto spec = dnnh::ExperimentSpec::FromJson(j, scale);
    const auto res = dnnh::RunExperiment(spec);
    if (exit_code) *exit_code = res.exit_code;
    if (manifest_out) *manifest_out = CopyString(res.manifest.dump());
  });
}

}  // extern "C"
