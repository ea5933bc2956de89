#ifndef DNNHAZARD_H
#define DNNHAZARD_H

/* C interface to the dnnhazard library: neural conditional-hazard
 * estimation for right-censored data, weighted hazard tests and the
 * simulation benchmark runner.
 *
 * Every function returns a dnnh_status. On failure the message is available
 * from dnnh_last_error() on the calling thread until the next call.
 * Objects are opaque handles released with their _free function; strings
 * returned through char** are released with dnnh_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(DNNH_BUILDING)
#define DNNH_API __attribute__((visibility("default")))
#else
#define DNNH_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  DNNH_OK = 0,
  DNNH_E_INVALID_ARGUMENT = 1,
  DNNH_E_CONFIG = 2,
  DNNH_E_DATA = 3,
  DNNH_E_NUMERIC = 4,
  DNNH_E_IO = 5,
  DNNH_E_INTERNAL = 6
} dnnh_status;

typedef struct dnnh_dataset dnnh_dataset;
/* Any evaluable hazard: a trained network or an analytic scenario truth. */
typedef struct dnnh_model dnnh_model;

DNNH_API const char* dnnh_version(void);
DNNH_API const char* dnnh_last_error(void);
DNNH_API const char* dnnh_status_name(dnnh_status status);
DNNH_API void dnnh_string_free(char* s);

/* --- datasets --- */

/* x is row-major n x p; tau <= 0 means max(y). */
DNNH_API dnnh_status dnnh_dataset_create(size_t n, int p, const double* y, const int* delta,
                                         const double* x, double tau, dnnh_dataset** out);
/* Columns y, delta, x1..xp. */
DNNH_API dnnh_status dnnh_dataset_read_csv(const char* path, dnnh_dataset** out);
DNNH_API dnnh_status dnnh_dataset_write_csv(const dnnh_dataset* data, const char* path);
DNNH_API void dnnh_dataset_free(dnnh_dataset* data);
DNNH_API size_t dnnh_dataset_size(const dnnh_dataset* data);
DNNH_API int dnnh_dataset_dim(const dnnh_dataset* data);
DNNH_API size_t dnnh_dataset_events(const dnnh_dataset* data);
DNNH_API double dnnh_dataset_tau(const dnnh_dataset* data);
/* Copies subject i into y, delta and x (p entries); any pointer may be NULL. */
DNNH_API dnnh_status dnnh_dataset_subject(const dnnh_dataset* data, size_t i, double* y,
                                          int* delta, double* x);

/* Simulates n subjects from a scenario JSON object (family, shift,
 * gof_design, target_censor_rate or censoring_mean, tau). The calibrated
 * scenario is returned in *scenario_out when non-NULL. */
DNNH_API dnnh_status dnnh_simulate(const char* scenario_json, size_t n, uint64_t seed,
                                   dnnh_dataset** out, char** scenario_out);

/* --- models --- */

/* Trains a network (hyperparameter grid, early stopping) with a training
 * config JSON (NULL or "" for defaults). *report_out receives the fit
 * summary JSON when non-NULL. */
DNNH_API dnnh_status dnnh_fit(const dnnh_dataset* data, const char* train_config_json,
                              dnnh_model** out, char** report_out);
DNNH_API dnnh_status dnnh_model_from_json(const char* model_json, dnnh_model** out);
/* Analytic truth of a simulation scenario. */
DNNH_API dnnh_status dnnh_model_from_scenario(const char* scenario_json, dnnh_model** out);
/* Only trained networks serialize. */
DNNH_API dnnh_status dnnh_model_to_json(const dnnh_model* model, char** out);
DNNH_API void dnnh_model_free(dnnh_model* model);

/* g(t|x), Lambda(t|x) and S(t|x) for nondecreasing ts[0..nt). */
DNNH_API dnnh_status dnnh_model_log_hazard(const dnnh_model* model, const double* x, int p,
                                           const double* ts, size_t nt, double* out);
DNNH_API dnnh_status dnnh_model_cum_hazard(const dnnh_model* model, const double* x, int p,
                                           const double* ts, size_t nt, double* out);
DNNH_API dnnh_status dnnh_model_survival(const dnnh_model* model, const double* x, int p,
                                         const double* ts, size_t nt, double* out);
/* sum Delta |Lambda_truth - Lambda_est| / sum Delta at the observed times. */
DNNH_API dnnh_status dnnh_chf_discrepancy(const dnnh_model* truth, const dnnh_model* estimate,
                                          const dnnh_dataset* data, double* out);

/* --- tests --- */

/* weights_json: array of [rho, gamma] pairs or {"rho":..,"gamma":..}
 * objects; NULL for the four standard weights. Results are a JSON array of
 * test reports. */
DNNH_API dnnh_status dnnh_one_sample_test(const dnnh_dataset* data, const dnnh_model* fit,
                                          const dnnh_model* null_model, const char* weights_json,
                                          char** reports_out);
/* variance_mode: "split" or "pooled" (pooled needs pooled_fit). */
DNNH_API dnnh_status dnnh_two_sample_test(const dnnh_dataset* data1, const dnnh_dataset* data2,
                                          const dnnh_model* fit1, const dnnh_model* fit2,
                                          const char* weights_json, const char* variance_mode,
                                          const dnnh_model* pooled_fit, char** reports_out);

/* --- experiments --- */

typedef struct {
  const char* kind;    /* replaces the config's "kind" when non-NULL */
  const char* out_dir; /* replaces "out_dir" when non-NULL */
  const char* scale;   /* "desk" or "paper" when non-NULL */
  int has_seed;
  uint64_t seed;
  int workers;         /* > 0 replaces "workers" */
} dnnh_run_overrides;

/* Runs one experiment from a JSON config (see README). *exit_code is 0, or 4
 * when too many replications failed; *manifest_out receives the manifest. */
DNNH_API dnnh_status dnnh_run_experiment(const char* config_json,
                                         const dnnh_run_overrides* overrides, int* exit_code,
                                         char** manifest_out);

#ifdef __cplusplus
}
#endif

#endif /* DNNHAZARD_H */
