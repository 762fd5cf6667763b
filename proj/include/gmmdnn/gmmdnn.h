#ifndef GMMDNN_GMMDNN_H
#define GMMDNN_GMMDNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(GMMDNN_BUILDING)
#define GMMDNN_API __attribute__((visibility("default")))
#else
#define GMMDNN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gmmdnn_status {
  GMMDNN_OK = 0,
  GMMDNN_ERR_DIMENSION_MISMATCH = 1,
  GMMDNN_ERR_NOT_POSITIVE_DEFINITE = 2,
  GMMDNN_ERR_INVALID_SPEC = 3,
  GMMDNN_ERR_PARSE = 4,
  GMMDNN_ERR_NON_FINITE = 5,
  GMMDNN_ERR_ASSUMPTION_VIOLATED = 6,
  GMMDNN_ERR_ASSUMPTION_NOT_VERIFIED = 7,
  GMMDNN_ERR_DELTA_OUT_OF_RANGE = 8,
  GMMDNN_ERR_Q_OUT_OF_RANGE = 9,
  GMMDNN_ERR_INVALID_ARGUMENT = 10,
  GMMDNN_ERR_IO = 11,
  GMMDNN_ERR_INTERNAL = 12
} gmmdnn_status;

typedef struct gmmdnn_spec gmmdnn_spec;
typedef struct gmmdnn_net gmmdnn_net;

typedef struct gmmdnn_spec_info {
  size_t dim;
  size_t components;
  size_t classes;
  double omega_min;
  double omega_max;
} gmmdnn_spec_info;

/* Fields left at zero / NULL keep the config's value. */
typedef struct gmmdnn_run_options {
  const char* out_dir;
  const char* kind;  /* must match the config's kind when both are given */
  int has_seed;
  uint64_t seed;
  size_t samples;
} gmmdnn_run_options;

GMMDNN_API const char* gmmdnn_version(void);
GMMDNN_API const char* gmmdnn_status_name(gmmdnn_status status);

/* Thread-local details of the last failed call on this thread. The JSON form is
   {"error":{"code":...,"message":...,"where":...}}. Valid until the next call. */
GMMDNN_API const char* gmmdnn_last_error(void);
GMMDNN_API const char* gmmdnn_last_error_json(void);

/* Strings returned through char** out-parameters are owned by the caller. */
GMMDNN_API void gmmdnn_string_free(char* s);

GMMDNN_API gmmdnn_status gmmdnn_spec_load(const char* path, gmmdnn_spec** out);
GMMDNN_API gmmdnn_status gmmdnn_spec_parse(const char* json_text, gmmdnn_spec** out);
GMMDNN_API void gmmdnn_spec_free(gmmdnn_spec* spec);
GMMDNN_API gmmdnn_status gmmdnn_spec_info_get(const gmmdnn_spec* spec, gmmdnn_spec_info* out);
GMMDNN_API gmmdnn_status gmmdnn_spec_log_discriminant(const gmmdnn_spec* spec, size_t cls,
                                                      const double* x, size_t n, double* out);
GMMDNN_API gmmdnn_status gmmdnn_spec_classify(const gmmdnn_spec* spec, const double* x, size_t n,
                                              size_t* out_class);
/* points: count * dim doubles, row major. classes may be NULL. */
GMMDNN_API gmmdnn_status gmmdnn_spec_sample(const gmmdnn_spec* spec, size_t count, uint64_t seed,
                                            double* points, size_t* classes);

/* mode: "smooth" (sigmoid), "relu" or "reference". The sigmoid is used at
   tau = -1, r = 0.5 with the chernoff tail rule. */
GMMDNN_API gmmdnn_status gmmdnn_build_network(const gmmdnn_spec* spec, size_t cls, double delta,
                                              double q, const char* mode, gmmdnn_net** out);
GMMDNN_API gmmdnn_status gmmdnn_params_json(const gmmdnn_spec* spec, size_t cls, double delta,
                                            double q, char** out_json);

GMMDNN_API gmmdnn_status gmmdnn_net_load(const char* path, gmmdnn_net** out);
GMMDNN_API gmmdnn_status gmmdnn_net_parse(const char* json_text, gmmdnn_net** out);
GMMDNN_API gmmdnn_status gmmdnn_net_save(const gmmdnn_net* net, const char* path);
GMMDNN_API gmmdnn_status gmmdnn_net_to_json(const gmmdnn_net* net, char** out_json);
GMMDNN_API void gmmdnn_net_free(gmmdnn_net* net);
GMMDNN_API gmmdnn_status gmmdnn_net_dims(const gmmdnn_net* net, size_t* input_dim,
                                         size_t* output_dim);
GMMDNN_API gmmdnn_status gmmdnn_net_node_count(const gmmdnn_net* net, size_t* out);
/* out must hold output_dim doubles. */
GMMDNN_API gmmdnn_status gmmdnn_net_eval(const gmmdnn_net* net, const double* x, size_t n,
                                         double* out, size_t out_len);

GMMDNN_API gmmdnn_status gmmdnn_shallow_bound(long n, double s_x, double s_f, size_t n1,
                                              double a_norm, double* out_bound);

/* exit_code receives 0 (pass) or 1 (verification failed). summary may be NULL. */
GMMDNN_API gmmdnn_status gmmdnn_run_experiment(const char* config_path,
                                               const gmmdnn_run_options* options, int* exit_code,
                                               char** summary);
GMMDNN_API gmmdnn_status gmmdnn_describe(const char* path, char** out_text);

#ifdef __cplusplus
}
#endif

#endif
