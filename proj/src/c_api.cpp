#include "gmmdnn/gmmdnn.h"

#include "gmmdnn/core/construction.hpp"
#include "gmmdnn/core/experiment.hpp"
#include "gmmdnn/core/gmm_io.hpp"
#include "gmmdnn/core/shallow.hpp"

#include "json.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

struct gmmdnn_spec {
  gmmdnn::GmmSpec spec;
};

struct gmmdnn_net {
  gmmdnn::FeedforwardNet net;
};

namespace {

using gmmdnn::Error;
using gmmdnn::ErrorCode;

thread_local std::string g_message;
thread_local std::string g_json;

gmmdnn_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return GMMDNN_ERR_DIMENSION_MISMATCH;
    case ErrorCode::kNotPositiveDefinite: return GMMDNN_ERR_NOT_POSITIVE_DEFINITE;
    case ErrorCode::kInvalidSpec: return GMMDNN_ERR_INVALID_SPEC;
    case ErrorCode::kParseError: return GMMDNN_ERR_PARSE;
    case ErrorCode::kNonFiniteIntermediate: return GMMDNN_ERR_NON_FINITE;
    case ErrorCode::kAssumptionViolated: return GMMDNN_ERR_ASSUMPTION_VIOLATED;
    case ErrorCode::kAssumptionNotVerified: return GMMDNN_ERR_ASSUMPTION_NOT_VERIFIED;
    case ErrorCode::kDeltaOutOfRange: return GMMDNN_ERR_DELTA_OUT_OF_RANGE;
    case ErrorCode::kQOutOfRange: return GMMDNN_ERR_Q_OUT_OF_RANGE;
    case ErrorCode::kInvalidArgument: return GMMDNN_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo: return GMMDNN_ERR_IO;
  }
  return GMMDNN_ERR_INTERNAL;
}

gmmdnn_status record(gmmdnn_status status, const std::string& code, const std::string& message,
                     const std::string& where) {
  g_message = message;
  nlohmann::ordered_json j;
  j["error"]["code"] = code;
  j["error"]["message"] = message;
  j["error"]["where"] = where;
  g_json = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  return status;
}

template <class F>
gmmdnn_status guarded(F&& fn) {
  g_message.clear();
  g_json.clear();
  try {
    fn();
    return GMMDNN_OK;
  } catch (const Error& e) {
    return record(to_status(e.code()), std::string(gmmdnn::error_code_name(e.code())), e.what(),
                  e.where());
  } catch (const std::bad_alloc&) {
    return record(GMMDNN_ERR_INTERNAL, "Internal", "out of memory", "");
  } catch (const std::exception& e) {
    return record(GMMDNN_ERR_INTERNAL, "Internal", e.what(), "");
  } catch (...) {
    return record(GMMDNN_ERR_INTERNAL, "Internal", "unknown exception", "");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

gmmdnn::Vector to_vector(const double* x, size_t n) {
  return Eigen::Map<const gmmdnn::Vector>(x, static_cast<Eigen::Index>(n));
}

gmmdnn::BuildMode parse_mode(const char* mode) {
  const std::string m = mode ? mode : "smooth";
  if (m == "smooth") return gmmdnn::BuildMode::kSmooth;
  if (m == "relu") return gmmdnn::BuildMode::kRelu;
  if (m == "reference") return gmmdnn::BuildMode::kReference;
  throw Error(ErrorCode::kInvalidArgument, "mode must be smooth, relu or reference, got '" + m + "'");
}

}  // namespace

extern "C" {

const char* gmmdnn_version(void) { return "0.1.0"; }

const char* gmmdnn_status_name(gmmdnn_status status) {
  switch (status) {
    case GMMDNN_OK: return "Ok";
    case GMMDNN_ERR_DIMENSION_MISMATCH: return "DimensionMismatch";
    case GMMDNN_ERR_NOT_POSITIVE_DEFINITE: return "NotPositiveDefinite";
    case GMMDNN_ERR_INVALID_SPEC: return "InvalidSpec";
    case GMMDNN_ERR_PARSE: return "ParseError";
    case GMMDNN_ERR_NON_FINITE: return "NonFiniteIntermediate";
    case GMMDNN_ERR_ASSUMPTION_VIOLATED: return "AssumptionViolated";
    case GMMDNN_ERR_ASSUMPTION_NOT_VERIFIED: return "AssumptionNotVerified";
    case GMMDNN_ERR_DELTA_OUT_OF_RANGE: return "DeltaOutOfRange";
    case GMMDNN_ERR_Q_OUT_OF_RANGE: return "QOutOfRange";
    case GMMDNN_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case GMMDNN_ERR_IO: return "Io";
    case GMMDNN_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* gmmdnn_last_error(void) { return g_message.c_str(); }
const char* gmmdnn_last_error_json(void) { return g_json.c_str(); }

void gmmdnn_string_free(char* s) { std::free(s); }

gmmdnn_status gmmdnn_spec_load(const char* path, gmmdnn_spec** out) {
  return guarded([&] {
    require(path && out, "path and out must not be NULL");
    *out = new gmmdnn_spec{gmmdnn::load_spec_file(path)};
  });
}

gmmdnn_status gmmdnn_spec_parse(const char* json_text, gmmdnn_spec** out) {
  return guarded([&] {
    require(json_text && out, "json_text and out must not be NULL");
    *out = new gmmdnn_spec{gmmdnn::parse_spec(json_text)};
  });
}

void gmmdnn_spec_free(gmmdnn_spec* spec) { delete spec; }

gmmdnn_status gmmdnn_spec_info_get(const gmmdnn_spec* spec, gmmdnn_spec_info* out) {
  return guarded([&] {
    require(spec && out, "spec and out must not be NULL");
    out->dim = static_cast<size_t>(spec->spec.dim());
    out->components = spec->spec.num_components();
    out->classes = spec->spec.num_classes();
    out->omega_min = spec->spec.omega_min();
    out->omega_max = spec->spec.omega_max();
  });
}

gmmdnn_status gmmdnn_spec_log_discriminant(const gmmdnn_spec* spec, size_t cls, const double* x,
                                           size_t n, double* out) {
  return guarded([&] {
    require(spec && x && out, "arguments must not be NULL");
    require(cls < spec->spec.num_classes(), "class index out of range");
    *out = spec->spec.discriminant(cls).log_value(to_vector(x, n));
  });
}

gmmdnn_status gmmdnn_spec_classify(const gmmdnn_spec* spec, const double* x, size_t n,
                                   size_t* out_class) {
  return guarded([&] {
    require(spec && x && out_class, "arguments must not be NULL");
    *out_class = gmmdnn::bayes_classify(spec->spec, to_vector(x, n));
  });
}

gmmdnn_status gmmdnn_spec_sample(const gmmdnn_spec* spec, size_t count, uint64_t seed,
                                 double* points, size_t* classes) {
  return guarded([&] {
    require(spec && points, "spec and points must not be NULL");
    const gmmdnn::Samples s = gmmdnn::sample(spec->spec, count, seed);
    const Eigen::Index n = spec->spec.dim();
    for (size_t i = 0; i < count; ++i) {
      for (Eigen::Index c = 0; c < n; ++c) {
        points[i * static_cast<size_t>(n) + static_cast<size_t>(c)] =
            s.points(static_cast<Eigen::Index>(i), c);
      }
      if (classes) classes[i] = s.cls[i];
    }
  });
}

gmmdnn_status gmmdnn_build_network(const gmmdnn_spec* spec, size_t cls, double delta, double q,
                                   const char* mode, gmmdnn_net** out) {
  return guarded([&] {
    require(spec && out, "spec and out must not be NULL");
    const gmmdnn::BuildMode m = parse_mode(mode);
    if (m == gmmdnn::BuildMode::kReference) {
      require(cls < spec->spec.num_classes(), "class index out of range");
      *out = new gmmdnn_net{gmmdnn::build_reference_network(spec->spec, cls)};
      return;
    }
    const auto params =
        gmmdnn::solve_params(spec->spec, cls, delta, q, gmmdnn::sigmoid_constants());
    *out = new gmmdnn_net{gmmdnn::build_class_subnetwork(spec->spec, params, m)};
  });
}

gmmdnn_status gmmdnn_params_json(const gmmdnn_spec* spec, size_t cls, double delta, double q,
                                 char** out_json) {
  return guarded([&] {
    require(spec && out_json, "spec and out_json must not be NULL");
    const auto params =
        gmmdnn::solve_params(spec->spec, cls, delta, q, gmmdnn::sigmoid_constants());
    *out_json = dup_string(gmmdnn::params_to_json(params));
  });
}

gmmdnn_status gmmdnn_net_load(const char* path, gmmdnn_net** out) {
  return guarded([&] {
    require(path && out, "path and out must not be NULL");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open network file", path);
    std::stringstream ss;
    ss << in.rdbuf();
    *out = new gmmdnn_net{gmmdnn::deserialize_net(ss.str())};
  });
}

gmmdnn_status gmmdnn_net_parse(const char* json_text, gmmdnn_net** out) {
  return guarded([&] {
    require(json_text && out, "json_text and out must not be NULL");
    *out = new gmmdnn_net{gmmdnn::deserialize_net(json_text)};
  });
}

gmmdnn_status gmmdnn_net_save(const gmmdnn_net* net, const char* path) {
  return guarded([&] {
    require(net && path, "net and path must not be NULL");
    std::ofstream o(path, std::ios::binary | std::ios::trunc);
    if (!o) throw Error(ErrorCode::kIo, "cannot write network file", path);
    o << gmmdnn::serialize_net(net->net);
    o.close();
    if (!o) throw Error(ErrorCode::kIo, "failed writing network file", path);
  });
}

gmmdnn_status gmmdnn_net_to_json(const gmmdnn_net* net, char** out_json) {
  return guarded([&] {
    require(net && out_json, "net and out_json must not be NULL");
    *out_json = dup_string(gmmdnn::serialize_net(net->net));
  });
}

void gmmdnn_net_free(gmmdnn_net* net) { delete net; }

gmmdnn_status gmmdnn_net_dims(const gmmdnn_net* net, size_t* input_dim, size_t* output_dim) {
  return guarded([&] {
    require(net != nullptr, "net must not be NULL");
    if (input_dim) *input_dim = static_cast<size_t>(net->net.input_dim());
    if (output_dim) *output_dim = static_cast<size_t>(net->net.output_dim());
  });
}

gmmdnn_status gmmdnn_net_node_count(const gmmdnn_net* net, size_t* out) {
  return guarded([&] {
    require(net && out, "net and out must not be NULL");
    *out = static_cast<size_t>(net->net.node_count());
  });
}

gmmdnn_status gmmdnn_net_eval(const gmmdnn_net* net, const double* x, size_t n, double* out,
                              size_t out_len) {
  return guarded([&] {
    require(net && x && out, "arguments must not be NULL");
    gmmdnn::require_dim(static_cast<Eigen::Index>(out_len), net->net.output_dim(), "output buffer");
    const gmmdnn::Vector y = net->net.eval(to_vector(x, n));
    for (size_t i = 0; i < out_len; ++i) out[i] = y[static_cast<Eigen::Index>(i)];
  });
}

gmmdnn_status gmmdnn_shallow_bound(long n, double s_x, double s_f, size_t n1, double a_norm,
                                   double* out_bound) {
  return guarded([&] {
    require(out_bound != nullptr, "out_bound must not be NULL");
    gmmdnn::ShallowProblem p{n, s_x, s_f, n1, a_norm};
    *out_bound = gmmdnn::eval_lower_bound(p).bound;
  });
}

gmmdnn_status gmmdnn_run_experiment(const char* config_path, const gmmdnn_run_options* options,
                                    int* exit_code, char** summary) {
  return guarded([&] {
    require(config_path && exit_code, "config_path and exit_code must not be NULL");
    gmmdnn::RunOverrides ov;
    if (options) {
      if (options->out_dir) ov.out_dir = options->out_dir;
      if (options->has_seed) ov.seed = options->seed;
      if (options->samples) ov.samples = options->samples;
      if (options->kind) {
        auto k = gmmdnn::parse_experiment_kind(options->kind);
        if (!k) {
          throw Error(ErrorCode::kInvalidArgument,
                      std::string("unknown experiment kind '") + options->kind + "'");
        }
        ov.kind = *k;
      }
    }
    const gmmdnn::ExperimentResult r = gmmdnn::run_experiment(config_path, ov);
    *exit_code = r.exit_code;
    if (summary) *summary = dup_string(r.summary);
  });
}

gmmdnn_status gmmdnn_describe(const char* path, char** out_text) {
  return guarded([&] {
    require(path && out_text, "path and out_text must not be NULL");
    *out_text = dup_string(gmmdnn::describe(path));
  });
}

}  // extern "C"
