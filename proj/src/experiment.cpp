#include "gmmdnn/core/experiment.hpp"

#include "gmmdnn/core/construction.hpp"
#include "gmmdnn/core/gmm_io.hpp"
#include "gmmdnn/core/metrics.hpp"
#include "gmmdnn/core/shallow.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace gmmdnn {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kLockName = ".gmmdnn.lock";

struct KindName {
  ExperimentKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {ExperimentKind::kConstructDeep, "construct-deep"},
    {ExperimentKind::kVerifyDq, "verify-dq"},
    {ExperimentKind::kClassify, "classify"},
    {ExperimentKind::kShallowBound, "shallow-bound"},
    {ExperimentKind::kCosineSnn, "cosine-snn"},
    {ExperimentKind::kNodeScalingSweep, "node-scaling-sweep"},
    {ExperimentKind::kReluVariant, "relu-variant"},
};

[[noreturn]] void config_error(const std::string& msg, const std::string& where) {
  throw Error(ErrorCode::kInvalidArgument, msg, where);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open file", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const fs::path& path) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string(e.what()) + " in " + path.string(),
                "byte " + std::to_string(e.byte));
  }
}

// ---- config --------------------------------------------------------------

struct Config {
  ExperimentKind kind = ExperimentKind::kConstructDeep;
  fs::path base;
  std::optional<fs::path> spec_path;
  std::optional<fs::path> network_path;
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t samples = 100000;
  double delta = 0.5;
  double q = 0.1;
  Activation activation = Activation::of(ActivationTag::kSigmoid);
  double tau = -1.0;
  double r = 0.5;
  TailRule rule = TailRule::kChernoff;
  std::optional<std::size_t> cls;
  double grid_min = -5.0;
  double grid_max = 5.0;
  std::size_t grid_points = 201;
  // node-scaling-sweep
  std::vector<long long> sweep_n{2, 4, 8, 16, 32};
  double sweep_V = 1.0;
  std::size_t sweep_J = 1;
  // shallow-bound and cosine-snn
  std::vector<long long> shallow_n{6};
  std::vector<long long> n1{200, 400};
  double s_x = 1.0;
  double s_f = 1.0;
  double a_norm = 1.0;
  double epsilon = 0.1;
  std::size_t seeds = 20;
};

class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  const json* find(const char* key) const {
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }
  void number(const char* key, double& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number()) config_error("expected a number", std::string("/") + key);
      out = v->get<double>();
    }
  }
  void count(const char* key, std::size_t& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) config_error("expected a non-negative integer", std::string("/") + key);
      out = v->get<std::size_t>();
    }
  }
  void integers(const char* key, std::vector<long long>& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->empty()) config_error("expected a non-empty array", std::string("/") + key);
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_number_integer() || e.get<long long>() < 1) {
          config_error("expected a positive integer", std::string("/") + key + "/" + std::to_string(i));
        }
        out.push_back(e.get<long long>());
      }
    }
  }
  fs::path path(const char* key, const fs::path& base) const {
    const json* v = find(key);
    if (!v->is_string()) config_error("expected a path string", std::string("/") + key);
    fs::path p(v->get<std::string>());
    return p.is_absolute() ? p : base / p;
  }

 private:
  const json& doc_;
};

Config load_config(const fs::path& path, const RunOverrides& ov) {
  const json doc = parse_json(read_file(path), path);
  if (!doc.is_object()) config_error("config must be a JSON object", "");
  Reader rd(doc);
  Config c;
  c.base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  const json* jkind = rd.find("kind");
  if (jkind) {
    if (!jkind->is_string()) config_error("kind must be a string", "/kind");
    auto k = parse_experiment_kind(jkind->get<std::string>());
    if (!k) config_error("unknown experiment kind '" + jkind->get<std::string>() + "'", "/kind");
    c.kind = *k;
    if (ov.kind && *ov.kind != c.kind) {
      config_error("config is a '" + jkind->get<std::string>() + "' experiment, not '" +
                       std::string(experiment_kind_name(*ov.kind)) + "'",
                   "/kind");
    }
  } else if (ov.kind) {
    c.kind = *ov.kind;
  } else {
    config_error("missing field 'kind'", "/kind");
  }

  if (rd.find("spec")) c.spec_path = rd.path("spec", c.base);
  if (rd.find("network")) c.network_path = rd.path("network", c.base);
  if (ov.out_dir) c.out = *ov.out_dir;
  else if (rd.find("output")) c.out = rd.path("output", c.base);
  else config_error("no output directory: set 'output' or pass --out", "/output");

  if (ov.seed) {
    c.seed = *ov.seed;
  } else if (const json* s = rd.find("seed")) {
    if (!s->is_number_unsigned()) config_error("seed must be a non-negative integer", "/seed");
    c.seed = s->get<std::uint64_t>();
  } else {
    config_error("missing field 'seed' (no default seed is used)", "/seed");
  }
  rd.count("samples", c.samples);
  if (ov.samples) c.samples = *ov.samples;
  rd.number("delta", c.delta);
  rd.number("q", c.q);

  if (const json* a = rd.find("activation")) {
    if (!a->is_object()) config_error("activation must be an object", "/activation");
    Reader ra(*a);
    if (const json* k = ra.find("kind")) {
      auto tag = k->is_string() ? parse_activation_tag(k->get<std::string>()) : std::nullopt;
      if (!tag) config_error("unknown activation kind", "/activation/kind");
      c.activation = Activation::of(*tag);
    }
    ra.number("tau", c.tau);
    ra.number("r", c.r);
  }
  if (const json* t = rd.find("tail_rule")) {
    auto rule = t->is_string() ? parse_tail_rule(t->get<std::string>()) : std::nullopt;
    if (!rule) config_error("tail_rule must be 'chernoff' or 'compact'", "/tail_rule");
    c.rule = *rule;
  }
  if (rd.find("class")) {
    std::size_t k = 0;
    rd.count("class", k);
    c.cls = k;
  }
  if (const json* g = rd.find("grid")) {
    Reader rg(*g);
    rg.number("min", c.grid_min);
    rg.number("max", c.grid_max);
    rg.count("points", c.grid_points);
    if (!(c.grid_max > c.grid_min) || c.grid_points < 2) {
      config_error("grid needs max > min and at least 2 points", "/grid");
    }
  }
  if (const json* s = rd.find("sweep")) {
    Reader rs(*s);
    rs.integers("n", c.sweep_n);
    rs.number("V", c.sweep_V);
    rs.count("J", c.sweep_J);
    if (c.sweep_J < 1) config_error("J must be >= 1", "/sweep/J");
  }
  if (const json* s = rd.find("shallow")) {
    Reader rs(*s);
    rs.integers("n", c.shallow_n);
    rs.integers("n1", c.n1);
    rs.number("s_x", c.s_x);
    rs.number("s_f", c.s_f);
    rs.number("a_norm", c.a_norm);
    rs.number("epsilon", c.epsilon);
    rs.count("seeds", c.seeds);
  }

  const bool needs_spec = c.kind == ExperimentKind::kConstructDeep ||
                          c.kind == ExperimentKind::kVerifyDq ||
                          c.kind == ExperimentKind::kClassify ||
                          c.kind == ExperimentKind::kReluVariant;
  if (needs_spec && !c.spec_path) config_error("missing field 'spec'", "/spec");
  if (c.samples < 1000 && needs_spec) config_error("samples must be >= 1000", "/samples");
  if (c.kind == ExperimentKind::kCosineSnn && c.samples < 100) {
    config_error("samples must be >= 100", "/samples");
  }
  if (c.kind == ExperimentKind::kCosineSnn && c.seeds < 1) config_error("seeds must be >= 1", "/shallow/seeds");
  return c;
}

// ---- artifacts -----------------------------------------------------------

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}
  ~ArtifactWriter() {
    if (!committed_) {
      std::error_code ec;
      for (const auto& p : written_) fs::remove(p, ec);
    }
    if (locked_) {
      std::error_code ec;
      fs::remove(dir_ / kLockName, ec);
    }
  }

  void lock() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create output directory: " + ec.message(), dir_.string());
    const fs::path lock = dir_ / kLockName;
    std::FILE* f = std::fopen(lock.c_str(), "wx");
    if (!f) {
      throw Error(ErrorCode::kIo, "output directory is locked by another run (remove " +
                                      lock.string() + " if stale)",
                  dir_.string());
    }
    std::fclose(f);
    locked_ = true;
  }

  void add(const std::string& name, std::string content) { pending_.emplace_back(name, std::move(content)); }

  std::vector<std::string> commit() {
    std::vector<std::string> names;
    for (const auto& [name, content] : pending_) {
      const fs::path p = dir_ / name;
      std::ofstream out(p, std::ios::binary | std::ios::trunc);
      written_.push_back(p);
      out << content;
      out.close();
      if (!out) throw Error(ErrorCode::kIo, "failed to write artifact", p.string());
      names.push_back(name);
    }
    committed_ = true;
    return names;
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> pending_;
  std::vector<fs::path> written_;
  bool locked_ = false;
  bool committed_ = false;
};

struct Outcome {
  bool verdict = true;
  ordered_json report;
  std::optional<std::string> params;
  std::optional<std::string> network;
  std::optional<std::string> table;
  std::optional<std::string> series;
  std::vector<std::string> summary;
};

ordered_json estimate_json(const Estimate& e) {
  ordered_json j;
  j["mean"] = e.mean;
  j["std_error"] = e.std_error;
  j["count"] = e.count;
  return j;
}

ordered_json approx_json(const ApproxReport& r) {
  ordered_json j;
  j["delta"] = r.delta;
  j["q"] = r.q;
  j["t"] = r.t;
  j["count"] = r.count;
  j["in_set"] = estimate_json(r.in_set);
  j["max_rel_error"] = r.max_rel_error;
  j["mean_rel_error"] = r.mean_rel_error;
  j["max_outside"] = r.max_outside;
  j["min_outside"] = r.min_outside;
  j["cond1_violations"] = r.cond1_violations;
  j["cond2_violations"] = r.cond2_violations;
  j["boundary_excluded"] = r.boundary_excluded;
  j["pass"] = r.pass;
  j["coverage_ok"] = r.coverage_ok;
  return j;
}

std::string params_array_json(const std::vector<ConstructionParams>& ps) {
  std::string s = "[\n";
  for (std::size_t i = 0; i < ps.size(); ++i) {
    s += params_to_json(ps[i]);
    s += i + 1 < ps.size() ? ",\n" : "\n";
  }
  return s + "]\n";
}

std::vector<std::size_t> selected_classes(const Config& c, const GmmSpec& spec) {
  if (c.cls) {
    if (*c.cls >= spec.num_classes()) config_error("class index out of range", "/class");
    return {*c.cls};
  }
  std::vector<std::size_t> all(spec.num_classes());
  std::iota(all.begin(), all.end(), 0);
  return all;
}

ActivationConstants constants_for(const Config& c) {
  if (c.activation.tag != ActivationTag::kSigmoid && c.activation.tag != ActivationTag::kTanh) {
    throw Error(ErrorCode::kAssumptionNotVerified,
                "the deep construction needs a smooth activation (sigmoid or tanh), got " +
                    std::string(activation_name(c.activation.tag)),
                "/activation/kind");
  }
  return measure_activation(c.activation, c.tau, c.r);
}

// A slice along the first coordinate through the average component mean.
Matrix series_points(const Config& c, const GmmSpec& spec) {
  Vector center = Vector::Zero(spec.dim());
  for (const auto& g : spec.components()) center += g.mean();
  center /= static_cast<double>(spec.num_components());
  Matrix pts(static_cast<Eigen::Index>(c.grid_points), spec.dim());
  for (std::size_t i = 0; i < c.grid_points; ++i) {
    const double x = c.grid_min + (c.grid_max - c.grid_min) * static_cast<double>(i) /
                                      static_cast<double>(c.grid_points - 1);
    pts.row(static_cast<Eigen::Index>(i)) = center.transpose();
    pts(static_cast<Eigen::Index>(i), 0) = x;
  }
  return pts;
}

std::string overlay_series(const Config& c, const GmmSpec& spec,
                           const std::vector<std::size_t>& classes, const FeedforwardNet& net) {
  std::vector<std::string> header{"x"};
  for (auto k : classes) {
    header.push_back("d_" + std::to_string(k));
    header.push_back("d_hat_" + std::to_string(k));
  }
  CsvTable t(header);
  const Matrix pts = series_points(c, spec);
  const Matrix out = net.eval_batch(pts);
  std::vector<Vector> exact;
  for (auto k : classes) {
    Vector v;
    spec.discriminant(k).value_batch()(pts, v);
    exact.push_back(v);
  }
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    t.row().add(pts(i, 0));
    for (std::size_t j = 0; j < classes.size(); ++j) {
      t.add(exact[j][i]).add(out(i, static_cast<Eigen::Index>(j)));
    }
  }
  return t.str();
}

// construct-deep, verify-dq and relu-variant share this path.
Outcome run_deep(const Config& c, BuildMode mode) {
  const GmmSpec spec = load_spec_file(*c.spec_path);
  const auto classes = selected_classes(c, spec);
  const ActivationConstants act = constants_for(c);

  std::vector<ConstructionParams> params;
  for (auto k : classes) params.push_back(solve_params(spec, k, c.delta, c.q, act, c.rule));

  std::optional<FeedforwardNet> net;
  std::vector<FeedforwardNet> nets;
  if (c.kind == ExperimentKind::kVerifyDq && c.network_path) {
    net = deserialize_net(read_file(*c.network_path));
    if (net->input_dim() != spec.dim() ||
        net->output_dim() != static_cast<Eigen::Index>(classes.size())) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "network has " + std::to_string(net->output_dim()) + " outputs for " +
                      std::to_string(classes.size()) + " classes",
                  c.network_path->string());
    }
  } else {
    for (const auto& p : params) nets.push_back(build_class_subnetwork(spec, p, mode));
    net = nets.size() == 1 ? nets.front() : stack_networks(nets);
  }

  Outcome o;
  o.report["kind"] = std::string(experiment_kind_name(c.kind));
  o.report["mode"] = std::string(build_mode_name(mode));
  o.report["seed"] = c.seed;
  o.report["samples"] = c.samples;
  o.report["network_provenance"] = net->metadata().provenance;
  o.report["params_digest"] = net->metadata().params_digest;
  const NodeCounts counts = count_nodes(*net);
  o.report["node_counts"] = {{"per_layer", counts.per_layer}, {"total", counts.total}};

  CsvTable table({"class", "J", "trivial", "total_steps", "layer1_nodes", "layer2_nodes",
                  "total_nodes", "t_star", "in_set", "in_set_se", "max_rel_error",
                  "mean_rel_error", "max_outside", "cond1_violations", "cond2_violations",
                  "boundary_excluded", "pass", "coverage_ok"});
  ordered_json per_class = ordered_json::array();
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto k = classes[i];
    const auto& p = params[i];
    const Discriminant disc = spec.discriminant(k);
    // A built network is checked class by class; the stacked one computes the
    // same outputs with more work per point.
    const BatchFn d_hat = nets.empty() ? net->output_batch(static_cast<Eigen::Index>(i))
                                       : nets[i].output_batch(0);
    const ApproxReport r =
        verify_dq(disc.log_batch(), d_hat,
                  spec.class_sampler(k), p.tstar, c.delta, c.q, c.samples, c.seed + k);
    const bool ok = r.pass && r.coverage_ok;
    o.verdict = o.verdict && ok;

    // Per-class node counts come from the parameters so they do not depend on
    // whether the classes were stacked.
    std::size_t trivial = 0, nontrivial = 0;
    for (const auto& cp : p.components) (cp.trivial ? trivial : nontrivial) += 1;
    std::size_t l1 = 0, l2 = 0;
    for (const auto& cp : p.components) {
      if (cp.trivial) continue;
      if (mode == BuildMode::kRelu) {
        l1 += build_relu_square(cp.R, cp.nu).node_count() * static_cast<std::size_t>(p.n);
        l2 += 2 * cp.K;
      } else {
        l1 += 2 * static_cast<std::size_t>(p.n);
        l2 += cp.K;
      }
    }
    table.row()
        .add(k)
        .add(p.J)
        .add(trivial)
        .add(p.total_steps())
        .add(l1)
        .add(l2)
        .add(l1 + l2)
        .add(p.tstar)
        .add(r.in_set.mean)
        .add(r.in_set.std_error)
        .add(r.max_rel_error)
        .add(r.mean_rel_error)
        .add(r.max_outside)
        .add(r.cond1_violations)
        .add(r.cond2_violations)
        .add(r.boundary_excluded)
        .add(r.pass ? 1 : 0)
        .add(r.coverage_ok ? 1 : 0);

    ordered_json jc;
    jc["class"] = k;
    jc["verify"] = approx_json(r);
    jc["layer1_nodes"] = l1;
    jc["layer2_nodes"] = l2;
    if (mode == BuildMode::kRelu) {
      ordered_json sn = ordered_json::array();
      for (const auto& cp : p.components) {
        if (cp.trivial) continue;
        const std::size_t nodes = build_relu_square(cp.R, cp.nu).node_count();
        const auto limit = static_cast<std::size_t>(std::ceil(2.0 * cp.R / std::sqrt(cp.nu))) + 2;
        sn.push_back({{"component", cp.component}, {"nodes", nodes}, {"limit", limit},
                      {"ok", nodes <= limit}});
        o.verdict = o.verdict && nodes <= limit;
      }
      jc["square_supernodes"] = sn;
    }
    per_class.push_back(jc);
    o.summary.push_back("class " + std::to_string(k) + ": P[S]=" + format_double(r.in_set.mean) +
                        " max_rel_error=" + format_double(r.max_rel_error) +
                        " violations=" + std::to_string(r.cond1_violations + r.cond2_violations) +
                        (ok ? " pass" : " FAIL"));
  }
  o.report["classes"] = per_class;
  o.report["verdict"] = o.verdict ? "pass" : "fail";
  o.params = params_array_json(params);
  o.network = serialize_net(*net);
  o.table = table.str();
  o.series = overlay_series(c, spec, classes, *net);
  return o;
}

Outcome run_classify(const Config& c) {
  const GmmSpec spec = load_spec_file(*c.spec_path);
  if (spec.num_classes() < 2) config_error("classify needs at least two classes", "/spec");
  const ActivationConstants act = constants_for(c);
  std::vector<ConstructionParams> params;
  std::vector<FeedforwardNet> nets;
  for (std::size_t k = 0; k < spec.num_classes(); ++k) {
    params.push_back(solve_params(spec, k, c.delta, c.q, act, c.rule));
    nets.push_back(build_class_subnetwork(spec, params.back()));
  }
  const FeedforwardNet net = stack_networks(nets);
  const std::vector<std::size_t> counts(spec.num_classes(), c.samples);
  const ConfusionReport approx = empirical_error(network_scores(net), spec, counts, c.seed);
  const ConfusionReport bayes = empirical_error(bayes_scores(spec), spec, counts, c.seed);

  Outcome o;
  o.report["kind"] = "classify";
  o.report["seed"] = c.seed;
  o.report["samples_per_class"] = c.samples;
  CsvTable table({"classifier", "truth", "decided", "count", "rate", "rate_se"});
  auto confusion_json = [&](const char* name, const ConfusionReport& r) {
    ordered_json j;
    j["counts"] = r.counts;
    j["total_error"] = r.total_error;
    j["total_error_se"] = r.total_error_se;
    for (std::size_t a = 0; a < r.counts.size(); ++a) {
      for (std::size_t b = 0; b < r.counts.size(); ++b) {
        table.row().add(name).add(a).add(b).add(r.counts[a][b]).add(r.rate(a, b).mean).add(
            r.rate(a, b).std_error);
      }
    }
    return j;
  };
  o.report["network"] = confusion_json("network", approx);
  o.report["bayes"] = confusion_json("bayes", bayes);
  o.summary.push_back("network error " + format_double(approx.total_error) + ", Bayes error " +
                      format_double(bayes.total_error));

  // Deciding `other` under `truth` needs d_hat_other >= d_hat_truth, so the
  // pairwise bound also holds with more than two classes.
  {
    ordered_json bounds = ordered_json::array();
    for (std::size_t truth = 0; truth < spec.num_classes(); ++truth) {
      for (std::size_t other = 0; other < spec.num_classes(); ++other) {
        if (other == truth) continue;
        const Discriminant dt = spec.discriminant(truth);
        const Discriminant dother = spec.discriminant(other);
        const Sampler sampler = spec.class_sampler(truth);
        double e_opt = 1.0, tail = 1.0;
        Estimate e_est, tail_est;
        if (c.delta < 1.0) {
          const double alpha = (1.0 + c.delta) / (1.0 - c.delta);
          e_est = e21_opt_inflated(dt.log_batch(), dother.log_batch(), sampler, alpha, c.samples,
                                   c.seed + 17);
          tail_est = superlevel_tail(dt.log_batch(), sampler,
                                     (1.0 + c.delta) * params[other].tstar / (1.0 - c.delta),
                                     c.samples, c.seed + 29);
          e_opt = e_est.mean;
          tail = tail_est.mean;
        }
        const double bound = error_upper_bound(e_opt, c.q, tail);
        const Estimate& measured = approx.rate(truth, other);
        const double slack = 3.0 * std::sqrt(measured.std_error * measured.std_error +
                                             e_est.std_error * e_est.std_error +
                                             tail_est.std_error * tail_est.std_error);
        const bool ok = measured.mean <= bound + slack;
        o.verdict = o.verdict && ok;
        bounds.push_back({{"truth", truth},
                          {"decided", other},
                          {"measured", measured.mean},
                          {"measured_se", measured.std_error},
                          {"e_opt_inflated", e_opt},
                          {"q", c.q},
                          {"tail", tail},
                          {"bound", bound},
                          {"ok", ok}});
        o.summary.push_back("e_" + std::to_string(other) + std::to_string(truth) + " = " +
                            format_double(measured.mean) + " <= bound " + format_double(bound) +
                            (ok ? " pass" : " FAIL"));
      }
    }
    o.report["error_bounds"] = bounds;
  }
  o.report["verdict"] = o.verdict ? "pass" : "fail";
  o.params = params_array_json(params);
  o.network = serialize_net(net);
  o.table = table.str();
  std::vector<std::size_t> all(spec.num_classes());
  std::iota(all.begin(), all.end(), 0);
  o.series = overlay_series(c, spec, all, net);
  return o;
}

Outcome run_shallow_bound(const Config& c) {
  Outcome o;
  CsvTable table({"n", "n1", "s_x", "s_f", "a_norm", "alpha", "rho", "rate", "bound", "m1", "m2",
                  "epsilon", "min_n1"});
  CsvTable series({"n", "n1", "bound"});
  ordered_json rows = ordered_json::array();
  for (auto n : c.shallow_n) {
    for (auto n1 : c.n1) {
      ShallowProblem p{n, c.s_x, c.s_f, static_cast<std::size_t>(n1), c.a_norm};
      const ShallowBoundReport r = eval_lower_bound(p, c.epsilon);
      table.row().add(n).add(n1).add(c.s_x).add(c.s_f).add(c.a_norm).add(r.alpha).add(r.rho).add(
          r.rate).add(r.bound).add(r.m1).add(r.m2).add(r.epsilon).add(r.min_n1);
      series.row().add(n).add(n1).add(r.bound);
      rows.push_back({{"n", n}, {"n1", n1}, {"bound", r.bound}, {"rho", r.rho},
                      {"min_n1", std::isfinite(r.min_n1) ? ordered_json(r.min_n1) : ordered_json("inf")}});
    }
  }
  o.report["kind"] = "shallow-bound";
  o.report["rows"] = rows;
  o.report["verdict"] = "pass";
  ordered_json params;
  params["n"] = c.shallow_n;
  params["n1"] = c.n1;
  params["s_x"] = c.s_x;
  params["s_f"] = c.s_f;
  params["a_norm"] = c.a_norm;
  params["epsilon"] = c.epsilon;
  o.params = params.dump(2) + "\n";
  o.table = table.str();
  o.series = series.str();
  o.summary.push_back(std::to_string(table.rows()) + " bound rows");
  return o;
}

double expected_cosine_error(const ShallowProblem& p) {
  const double h = static_cast<double>(p.n) / 2.0;
  return std::pow(p.alpha(), h) / (2.0 * static_cast<double>(p.n1)) *
         (1.0 + std::pow(p.s_f / (p.s_f + 4.0 * p.s_x), h) -
          2.0 * std::pow(p.s_f / (p.s_f + 2.0 * p.s_x), h));
}

Outcome run_cosine_snn(const Config& c) {
  Outcome o;
  const Eigen::Index n = c.shallow_n.front();
  CsvTable table({"n1", "seed", "mse", "mse_se", "target_ms", "ratio", "expected_error",
                  "expected_bound", "lower_bound", "lower_bound_ok"});
  CsvTable series({"n1", "mean_mse", "mean_mse_se", "expected_error", "expected_bound"});
  ordered_json groups = ordered_json::array();
  std::vector<double> means;
  for (auto n1 : c.n1) {
    ShallowProblem p{n, c.s_x, c.s_f, static_cast<std::size_t>(n1), 0.0};
    p.validate();
    const double expected = expected_cosine_error(p);
    const double bound = std::pow(p.alpha(), static_cast<double>(n) / 2.0) / static_cast<double>(n1);
    Moments across;
    double se2 = 0.0;
    bool lower_ok = true;
    for (std::size_t s = 0; s < c.seeds; ++s) {
      const std::uint64_t seed = c.seed + s;
      const FeedforwardNet net = build_cosine_snn(p, seed);
      const ConsistencyReport cr = check_lower_bound(net, p, c.samples, seed);
      across.add(cr.error.mse.mean);
      se2 += cr.error.mse.std_error * cr.error.mse.std_error;
      lower_ok = lower_ok && cr.consistent;
      table.row().add(n1).add(static_cast<long long>(seed)).add(cr.error.mse.mean).add(
          cr.error.mse.std_error).add(cr.error.target_ms.mean).add(cr.error.ratio).add(expected).add(
          bound).add(cr.bound.bound).add(cr.consistent ? 1 : 0);
      if (!o.network) o.network = serialize_net(net);
    }
    const double k = static_cast<double>(c.seeds);
    // Spread across weight draws plus the Monte Carlo error of each estimate.
    const double se = std::sqrt(across.variance() / k + se2 / (k * k));
    const bool ok = across.mean <= bound + 3.0 * se;
    o.verdict = o.verdict && ok && lower_ok;
    means.push_back(across.mean);
    series.row().add(n1).add(across.mean).add(se).add(expected).add(bound);
    groups.push_back({{"n1", n1}, {"mean_mse", across.mean}, {"mean_mse_se", se},
                      {"expected_error", expected}, {"expected_bound", bound},
                      {"within_bound", ok}, {"lower_bound_consistent", lower_ok}});
    o.summary.push_back("n1=" + std::to_string(n1) + ": mean E[(f-mu_c)^2] = " +
                        format_double(across.mean) + " (bound " + format_double(bound) + ")");
  }
  o.report["kind"] = "cosine-snn";
  o.report["n"] = n;
  o.report["seeds"] = c.seeds;
  o.report["samples"] = c.samples;
  o.report["groups"] = groups;
  if (means.size() >= 2) {
    ordered_json ratios = ordered_json::array();
    for (std::size_t i = 1; i < means.size(); ++i) ratios.push_back(means[i - 1] / means[i]);
    o.report["successive_error_ratios"] = ratios;
  }
  o.report["verdict"] = o.verdict ? "pass" : "fail";
  ordered_json params;
  params["n"] = n;
  params["n1"] = c.n1;
  params["s_x"] = c.s_x;
  params["s_f"] = c.s_f;
  params["seeds"] = c.seeds;
  params["first_seed"] = c.seed;
  o.params = params.dump(2) + "\n";
  o.table = table.str();
  o.series = series.str();
  return o;
}

GmmSpec isotropic_spec(Eigen::Index n, double V, std::size_t J) {
  std::vector<GaussianComponent> comps;
  std::vector<double> weights;
  ClassSpec cls{1.0, {}};
  for (std::size_t j = 0; j < J; ++j) {
    Vector mean = Vector::Zero(n);
    mean[0] = 3.0 * static_cast<double>(j);
    comps.push_back(GaussianComponent::factor(mean, Matrix::Identity(n, n) * V));
    weights.push_back(1.0 / static_cast<double>(J));
    cls.components.push_back(j);
  }
  return GmmSpec::create(std::move(comps), std::move(weights), {cls});
}

Outcome run_sweep(const Config& c) {
  const ActivationConstants act = constants_for(c);
  Outcome o;
  CsvTable table({"n", "J", "trivial", "total_steps", "layer1_nodes", "layer2_nodes",
                  "total_nodes", "R_max", "T_max"});
  CsvTable series({"n", "total_nodes"});
  std::vector<ConstructionParams> params;
  std::vector<double> xs, ys;
  bool first_ok = true, monotone = true;
  long long prev_total = -1;
  ordered_json rows = ordered_json::array();
  for (auto n : c.sweep_n) {
    const GmmSpec spec = isotropic_spec(n, c.sweep_V, c.sweep_J);
    const ConstructionParams p = solve_params(spec, 0, c.delta, c.q, act, c.rule);
    const FeedforwardNet net = build_class_subnetwork(spec, p);
    const NodeCounts counts = count_nodes(net);
    std::size_t trivial = 0;
    double r_max = 0.0, t_max = 0.0;
    for (const auto& cp : p.components) {
      trivial += cp.trivial ? 1 : 0;
      r_max = std::max(r_max, cp.R);
      t_max = std::max(t_max, cp.T);
    }
    const auto l1 = counts.per_layer.at(0);
    const auto l2 = counts.per_layer.at(1);
    const long long expected_l1 = 2 * n * static_cast<long long>(c.sweep_J - trivial);
    first_ok = first_ok && (trivial == c.sweep_J || l1 == expected_l1);
    monotone = monotone && counts.total > prev_total;
    prev_total = counts.total;
    table.row().add(n).add(c.sweep_J).add(trivial).add(p.total_steps()).add(
        static_cast<long long>(l1)).add(static_cast<long long>(l2)).add(
        static_cast<long long>(counts.total)).add(r_max).add(t_max);
    series.row().add(n).add(static_cast<long long>(counts.total));
    xs.push_back(static_cast<double>(n));
    ys.push_back(static_cast<double>(counts.total));
    rows.push_back({{"n", n}, {"layer1", l1}, {"layer2", l2}, {"total", counts.total}});
    params.push_back(p);
  }
  // Least-squares affine fit of total nodes against n.
  const double m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (intercept + slope * xs[i]);
    ss_res += e * e;
  }
  const double r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  const bool fit_ok = xs.size() < 3 || r2 >= 0.99;
  o.verdict = fit_ok && first_ok && monotone;

  o.report["kind"] = "node-scaling-sweep";
  o.report["rows"] = rows;
  o.report["fit"] = {{"slope", slope}, {"intercept", intercept}, {"r_squared", r2}, {"ok", fit_ok}};
  o.report["first_layer_equals_2nJ"] = first_ok;
  o.report["monotone"] = monotone;
  o.report["verdict"] = o.verdict ? "pass" : "fail";
  o.params = params_array_json(params);
  o.table = table.str();
  o.series = series.str();
  o.summary.push_back("total nodes ~ " + format_double(slope) + " n + " + format_double(intercept) +
                      ", R^2 = " + format_double(r2));
  return o;
}

}  // namespace

std::string_view experiment_kind_name(ExperimentKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) {
  for (const auto& k : kKindNames) {
    if (k.name == name) return k.kind;
  }
  return std::nullopt;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(double v) {
  rows_.back().push_back(format_double(v));
  return *this;
}

CsvTable& CsvTable::add(long long v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  rows_.back().push_back(v);
  return *this;
}

std::string CsvTable::str() const {
  auto line = [](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += cells[i];
    }
    return s + '\n';
  };
  std::string out = line(header_);
  for (const auto& r : rows_) out += line(r);
  return out;
}

ExperimentResult run_experiment(const fs::path& config_path, const RunOverrides& overrides) {
  const Config c = load_config(config_path, overrides);
  ArtifactWriter writer(c.out);
  writer.lock();

  Outcome o;
  switch (c.kind) {
    case ExperimentKind::kConstructDeep: o = run_deep(c, BuildMode::kSmooth); break;
    case ExperimentKind::kVerifyDq: o = run_deep(c, BuildMode::kSmooth); break;
    case ExperimentKind::kReluVariant: o = run_deep(c, BuildMode::kRelu); break;
    case ExperimentKind::kClassify: o = run_classify(c); break;
    case ExperimentKind::kShallowBound: o = run_shallow_bound(c); break;
    case ExperimentKind::kCosineSnn: o = run_cosine_snn(c); break;
    case ExperimentKind::kNodeScalingSweep: o = run_sweep(c); break;
  }

  if (o.params) writer.add("params.json", *o.params);
  if (o.network) writer.add("network.json", *o.network);
  writer.add("report.json", o.report.dump(2) + "\n");
  if (o.table) writer.add("table.csv", *o.table);
  if (o.series) writer.add("series.csv", *o.series);

  ExperimentResult r;
  r.artifacts = writer.commit();
  r.out_dir = c.out;
  r.verdict = o.verdict;
  r.exit_code = o.verdict ? 0 : 1;
  std::string s;
  for (const auto& line : o.summary) s += line + "\n";
  s += std::string("verdict: ") + (o.verdict ? "pass" : "fail") + "\n";
  r.summary = s;
  return r;
}

std::string describe(const fs::path& path) {
  const std::string text = read_file(path);
  const json doc = parse_json(text, path);
  std::ostringstream os;
  auto describe_spec = [&os](const GmmSpec& spec) {
    os << "n = " << spec.dim() << "\n";
    os << "k = " << spec.num_components() << " components\n";
    os << "c = " << spec.num_classes() << " classes\n";
    os << "eigenvalues in [" << format_double(spec.omega_min()) << ", "
       << format_double(spec.omega_max()) << "]\n";
    for (std::size_t i = 0; i < spec.num_classes(); ++i) {
      const auto& cls = spec.classes()[i];
      os << "class " << i << ": prior " << format_double(cls.prior) << ", "
         << cls.components.size() << " components, max eigenvalue "
         << format_double(spec.class_omega_max(i)) << "\n";
    }
  };

  if (doc.is_object() && doc.contains("kind")) {
    const Config c = load_config(path, RunOverrides{fs::path("."), std::nullopt, std::nullopt, std::nullopt});
    os << "experiment " << experiment_kind_name(c.kind) << "\n";
    os << "seed = " << c.seed << ", samples = " << c.samples << "\n";
    if (c.spec_path) {
      const GmmSpec spec = load_spec_file(*c.spec_path);
      os << "spec " << c.spec_path->string() << "\n";
      describe_spec(spec);
      const bool deep = c.kind == ExperimentKind::kConstructDeep ||
                        c.kind == ExperimentKind::kVerifyDq ||
                        c.kind == ExperimentKind::kClassify ||
                        c.kind == ExperimentKind::kReluVariant;
      if (deep) {
        const ActivationConstants act = constants_for(c);
        os << "activation " << activation_name(act.first.tag) << ": tau = " << format_double(act.tau)
           << ", sigma''(tau) = " << format_double(act.second_derivative)
           << ", M = " << format_double(act.third_max) << ", eta0 = " << format_double(act.eta0)
           << "\n";
        for (auto k : selected_classes(c, spec)) {
          const ConstructionParams p = solve_params(spec, k, c.delta, c.q, act, c.rule);
          os << "class " << k << ": delta = " << format_double(p.delta) << ", q = "
             << format_double(p.q) << ", t* = " << format_double(p.tstar)
             << ", lambda = " << format_double(p.lambda) << "\n";
          for (const auto& cp : p.components) {
            os << "  component " << cp.component;
            if (cp.trivial) {
              os << ": trivial (lambda~ = " << format_double(cp.lambda_tilde) << ")\n";
            } else {
              os << ": R = " << format_double(cp.R) << ", a = " << format_double(cp.a)
                 << ", T = " << format_double(cp.T) << ", Delta = " << format_double(cp.Delta)
                 << ", K = " << cp.K << "\n";
            }
          }
        }
      }
    }
    return os.str();
  }
  describe_spec(load_spec_file(path));
  return os.str();
}

}  // namespace gmmdnn
