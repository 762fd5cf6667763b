// Acceptance run: one PASS/FAIL line per criterion, CSV tables written to the
// output directory (first argument, default ./acceptance_out). Criterion 12
// repeats 1-11 with the same seeds and compares the CSV bytes.

#include "gmmdnn/core/construction.hpp"
#include "gmmdnn/core/experiment.hpp"
#include "gmmdnn/core/gmm_io.hpp"
#include "gmmdnn/core/metrics.hpp"
#include "gmmdnn/core/shallow.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace gmmdnn;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

const fs::path kData = GMMDNN_TEST_DATA_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
  std::string csv;
};

struct Criterion {
  int id;
  const char* title;
  double time_limit;  // seconds, 0 = none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt2(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

GmmSpec standard_normal(Eigen::Index n) {
  return GmmSpec::create({GaussianComponent::factor(Vector::Zero(n), Matrix::Identity(n, n))}, {1.0},
                         {{1.0, {0}}});
}

// 1 --------------------------------------------------------------------------
Outcome exact_oracle() {
  Outcome o;
  CsvTable t({"spec", "n", "components", "class", "max_rel_error"});
  std::mt19937_64 gen(101);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_int_distribution<int> cls(1, 3);
  double worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    const Eigen::Index n = dim(gen);
    const GmmSpec spec = random_spec(gen, n, static_cast<std::size_t>(cls(gen)), 5);
    const Samples pts = sample(spec, 1000, 200 + static_cast<std::uint64_t>(s));
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
      const FeedforwardNet net = build_reference_network(spec, c);
      const Discriminant d = spec.discriminant(c);
      const Matrix out = net.eval_batch(pts.points);
      double m = 0.0;
      for (Eigen::Index i = 0; i < pts.points.rows(); ++i) {
        m = std::max(m, rel_err(out(i, 0), eval_discriminant(d, pts.points.row(i).transpose())));
      }
      worst = std::max(worst, m);
      t.row().add(s).add(static_cast<long long>(n)).add(spec.num_components()).add(c).add(m);
    }
  }
  o.pass = worst <= 1e-10;
  o.detail = fmt("max relative error %.3g over 20 specs x 1000 points (limit 1e-10)", worst);
  o.csv = t.str();
  return o;
}

// 2 --------------------------------------------------------------------------
Outcome square_grid() {
  Outcome o;
  CsvTable t({"delta", "R", "nu", "a", "max_abs_error", "min_tail_margin"});
  const ActivationConstants act = sigmoid_constants();
  const GmmSpec spec = load_spec_file(kData / "specs" / "gauss1d.json");
  for (double delta : {0.1, 0.5}) {
    const ConstructionParams p = solve_params(spec, 0, delta, 0.1, act);
    const ComponentParams& cp = p.components[0];
    const SquareSupernode h = build_supernode_square(cp.a, act.tau, act.second_derivative, act.first);
    const double R = cp.R, nu = cp.nu;
    const int N = 100000;
    double worst = 0.0;
    for (int i = 0; i < N; ++i) {
      const double x = -2.0 * R + 4.0 * R * i / (N - 1);
      worst = std::max(worst, std::abs(h.eval(x) - x * x));
    }
    double margin = 1e300;
    for (int i = 1; i <= N; ++i) {
      const double x = 2.0 * R + 8.0 * R * i / N;
      margin = std::min(margin, h.eval(x) - (4.0 * R * R - nu));
    }
    o.pass = o.pass && worst <= nu && margin >= 0.0;
    t.row().add(delta).add(R).add(nu).add(cp.a).add(worst).add(margin);
    o.detail += fmt2("delta=%.1f: max|h-x^2|/nu=%.3g, ", delta, worst / nu) +
                fmt("tail margin %.3g; ", margin);
  }
  o.csv = t.str();
  return o;
}

// 3 --------------------------------------------------------------------------
Outcome staircase_grid() {
  Outcome o;
  CsvTable t({"delta", "T", "Delta", "K", "max_rel_error", "max_tail_ratio"});
  const ActivationConstants act = sigmoid_constants();
  const GmmSpec spec = load_spec_file(kData / "specs" / "gauss1d.json");
  for (double delta : {0.1, 0.5}) {
    const ConstructionParams p = solve_params(spec, 0, delta, 0.1, act);
    const ComponentParams& cp = p.components[0];
    const StaircaseSupernode psi = build_supernode_negexp(cp.T, cp.Delta, cp.K, act.second);
    const double eps = delta / 2.0, T = cp.T;
    const int N = 100000;
    double worst = 0.0;
    for (int i = 0; i < N; ++i) {
      const double x = T * i / (N - 1);
      worst = std::max(worst, std::abs(psi.eval(x) - std::exp(-x)) / std::exp(-x));
    }
    double tail = 0.0;
    for (int i = 1; i <= N; ++i) {
      const double x = T + 2.0 * T * i / N;
      tail = std::max(tail, psi.eval(x) / std::exp(-T));
    }
    o.pass = o.pass && worst <= eps && tail <= 1.0 + eps;
    t.row().add(delta).add(T).add(cp.Delta).add(cp.K).add(worst).add(tail);
    o.detail += fmt2("delta=%.1f: rel err %.3g, ", delta, worst) +
                fmt2("tail/e^-T %.4f (K=%.0f); ", tail, static_cast<double>(cp.K));
  }
  o.csv = t.str();
  return o;
}

// 4 and 11 ------------------------------------------------------------------
Outcome end_to_end(const std::vector<std::string>& specs, BuildMode mode, std::size_t samples) {
  Outcome o;
  CsvTable t({"spec", "class", "t_star", "in_set", "in_set_se", "max_rel_error",
              "cond1_violations", "cond2_violations", "boundary_excluded", "pass", "coverage_ok"});
  const ActivationConstants act = sigmoid_constants();
  for (const auto& name : specs) {
    const GmmSpec spec = load_spec_file(kData / "specs" / name);
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
      const ConstructionParams p = solve_params(spec, c, 0.5, 0.1, act);
      const FeedforwardNet net = mode == BuildMode::kRelu ? build_relu_variant(spec, p)
                                                          : build_class_subnetwork(spec, p, mode);
      const ApproxReport r = verify_dq(spec.discriminant(c).log_batch(), net.output_batch(0),
                                       spec.class_sampler(c), p.tstar, 0.5, 0.1, samples, 7 + c);
      o.pass = o.pass && r.pass && r.coverage_ok;
      t.row()
          .add(name)
          .add(c)
          .add(p.tstar)
          .add(r.in_set.mean)
          .add(r.in_set.std_error)
          .add(r.max_rel_error)
          .add(r.cond1_violations)
          .add(r.cond2_violations)
          .add(r.boundary_excluded)
          .add(r.pass ? "true" : "false")
          .add(r.coverage_ok ? "true" : "false");
      o.detail += name + "[" + std::to_string(c) + "]: violations " +
                  std::to_string(r.cond1_violations + r.cond2_violations) +
                  fmt2(", P[S]=%.4f+-%.4f; ", r.in_set.mean, r.in_set.std_error);
    }
  }
  o.csv = t.str();
  return o;
}

// 5 --------------------------------------------------------------------------
Outcome node_scaling() {
  Outcome o;
  CsvTable t({"n", "layer1_nodes", "layer2_nodes", "total_nodes"});
  const ActivationConstants act = sigmoid_constants();
  std::vector<double> xs, ys;
  bool first_ok = true;
  for (Eigen::Index n : {2, 4, 8, 16, 32}) {
    const GmmSpec spec = standard_normal(n);
    const ConstructionParams p = solve_params(spec, 0, 0.5, 0.1, act);
    const NodeCounts counts = count_nodes(build_class_subnetwork(spec, p));
    first_ok = first_ok && counts.per_layer[0] == 2 * n;
    xs.push_back(static_cast<double>(n));
    ys.push_back(static_cast<double>(counts.total));
    t.row().add(static_cast<long long>(n)).add(static_cast<long long>(counts.per_layer[0]))
        .add(static_cast<long long>(counts.per_layer[1])).add(static_cast<long long>(counts.total));
  }
  // least squares y = b0 + b1 n
  const double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double b1 = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  const double b0 = (sy - b1 * sx) / m;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ss_res += std::pow(ys[i] - (b0 + b1 * xs[i]), 2);
    ss_tot += std::pow(ys[i] - sy / m, 2);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  o.pass = first_ok && r2 >= 0.99;
  o.detail = fmt2("total = %.2f n + %.2f", b1, b0) + fmt(", R^2 = %.6f", r2) +
             (first_ok ? ", first layer = 2n" : ", first layer != 2n");
  o.csv = t.str();
  return o;
}

// 6 --------------------------------------------------------------------------
Outcome tail_level() {
  Outcome o;
  CsvTable t({"n", "q", "t_star", "tail", "tail_se"});
  for (Eigen::Index n : {1, 2, 8}) {
    const GmmSpec spec = standard_normal(n);
    for (double q : {0.1, 0.01}) {
      const double ts = solve_tstar(n, 1.0, q, 1);
      const Estimate e = superlevel_tail(spec.discriminant(0).log_batch(), spec.mixture_sampler(),
                                         ts, 1000000, 60 + static_cast<std::uint64_t>(n));
      const bool ok = e.mean <= q + 3.0 * e.std_error;
      o.pass = o.pass && ok;
      t.row().add(static_cast<long long>(n)).add(q).add(ts).add(e.mean).add(e.std_error);
      o.detail += "n=" + std::to_string(n) + fmt2(" q=%.2f: %.5f; ", q, e.mean);
    }
  }
  o.csv = t.str();
  return o;
}

// 7 --------------------------------------------------------------------------
Outcome snn_consistency() {
  Outcome o;
  CsvTable t({"net", "activation", "n1", "a_norm", "mse", "mse_se", "bound", "consistent"});
  std::mt19937_64 gen(707);
  std::uniform_int_distribution<int> width(1, 16);
  std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
  const Eigen::Index n = 20;
  ShallowProblem p;
  p.n = n;
  double min_margin = 1e300;
  for (int k = 0; k < 50; ++k) {
    const auto n1 = static_cast<Eigen::Index>(width(gen));
    const bool cosine = k % 2 == 1;
    Matrix w(n1, n);
    for (Eigen::Index i = 0; i < n1; ++i) w.row(i) = random_vector(gen, n).transpose().normalized();
    Vector b = Vector::Zero(n1);
    if (!cosine) for (Eigen::Index i = 0; i < n1; ++i) b[i] = 2.0 * u(gen);
    Matrix out(1, n1);
    for (Eigen::Index i = 0; i < n1; ++i) out(0, i) = u(gen);
    out *= unit(gen) / out.norm();
    std::vector<Layer> layers;
    layers.push_back({w, b, cosine ? Activation::cosine(1.0) : Activation::of(ActivationTag::kSigmoid)});
    layers.push_back({out, Vector::Zero(1), Activation::of(ActivationTag::kIdentity)});
    const FeedforwardNet net(n, std::move(layers));
    p.n1 = static_cast<std::size_t>(n1);
    const ConsistencyReport r = check_lower_bound(net, p, 100000, 700 + static_cast<std::uint64_t>(k));
    const bool small = r.normalized.a_norm <= 1.0;
    o.pass = o.pass && r.consistent && small;
    min_margin = std::min(min_margin, (r.error.mse.mean - r.bound.bound) / r.error.mse.std_error);
    t.row().add(k).add(cosine ? "cosine" : "sigmoid").add(static_cast<long long>(n1))
        .add(r.normalized.a_norm).add(r.error.mse.mean).add(r.error.mse.std_error)
        .add(r.bound.bound).add(r.consistent ? "true" : "false");
  }
  ShallowProblem q;
  q.n = 40;
  q.n1 = 4;
  q.a_norm = 1.0;
  const double b = eval_lower_bound(q).bound;
  o.pass = o.pass && std::abs(b - 0.7322) <= 1e-3;
  o.detail = fmt("50 nets, min (mse - bound) / SE = %.2f; ", min_margin) +
             fmt("bound(n=40, n1=4, |a|=1) = %.5f", b);
  o.csv = t.str();
  return o;
}

// 8 --------------------------------------------------------------------------
Outcome cosine_construction() {
  Outcome o;
  CsvTable t({"n1", "seed", "mse", "mse_se"});
  ShallowProblem p;
  p.n = 6;
  double avg[2] = {0, 0}, se[2] = {0, 0};
  const std::size_t widths[2] = {200, 400};
  const int seeds = 20;
  for (int w = 0; w < 2; ++w) {
    p.n1 = widths[w];
    std::vector<double> v;
    for (int s = 0; s < seeds; ++s) {
      const FeedforwardNet net = build_cosine_snn(p, 800 + static_cast<std::uint64_t>(s));
      const L2Estimate e = estimate_l2_error(net.output_batch(0), mu_c_batch(p), shallow_sampler(p),
                                             50000, 900 + static_cast<std::uint64_t>(s));
      v.push_back(e.mse.mean);
      t.row().add(widths[w]).add(s).add(e.mse.mean).add(e.mse.std_error);
    }
    for (double x : v) avg[w] += x;
    avg[w] /= seeds;
    double ss = 0;
    for (double x : v) ss += (x - avg[w]) * (x - avg[w]);
    se[w] = std::sqrt(ss / (seeds - 1) / seeds);
  }
  const double alpha3 = std::pow(p.alpha(), 3.0);
  const double ratio = avg[0] / avg[1];
  o.pass = avg[0] <= alpha3 / 200.0 + 3.0 * se[0] && ratio >= 1.7 && ratio <= 2.3;
  o.detail = fmt2("mean mse(200) = %.4f +- %.4f", avg[0], se[0]) +
             fmt(" vs alpha^3/200 = %.4f; ", alpha3 / 200.0) + fmt("ratio 200/400 = %.3f", ratio);
  o.csv = t.str();
  return o;
}

// 9 --------------------------------------------------------------------------
// d_hat = (1 +- delta) d on {d >= t} and (1 + delta) t elsewhere.
BatchFn saturated(const BatchFn& log_d, double t, double delta) {
  return [log_d, t, delta](const Matrix& pts, Vector& out) {
    log_d(pts, out);
    const double log_t = std::log(t);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      if (out[i] >= log_t) {
        const double s = std::sin(1e4 * pts(i, 0)) >= 0.0 ? 1.0 : -1.0;
        out[i] = (1.0 + s * delta) * std::exp(out[i]);
      } else {
        out[i] = (1.0 + delta) * t;
      }
    }
  };
}

Outcome saturated_pairs() {
  Outcome o;
  CsvTable t({"pair", "delta", "q", "ratio", "ratio_se", "epsilon", "dq_pass"});
  const GmmSpec spec = standard_normal(1);
  const Discriminant d = spec.discriminant(0);
  std::mt19937_64 gen(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t failures = 0;
  double worst = -1e300;
  for (int k = 0; k < 1000; ++k) {
    const double delta = u(gen);
    const double q = 0.001 + 0.5 * u(gen);
    // P[|X| > z] = q
    double lo = 0.0, hi = 12.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (std::erfc(mid / std::sqrt(2.0)) > q ? lo : hi) = mid;
    }
    const double level = std::exp(-0.5 * lo * lo) / std::sqrt(2.0 * kPi);
    const BatchFn hat = saturated(d.log_batch(), level, delta);
    const auto seed = 1000 + static_cast<std::uint64_t>(k);
    const ApproxReport r = verify_dq(d.log_batch(), hat, spec.mixture_sampler(), level, delta, q,
                                     4000, seed);
    const L2Estimate e = estimate_l2_error(hat, d.value_batch(), spec.mixture_sampler(), 4000, seed);
    const double eps = relative_l2_epsilon(delta, q);
    const bool ok = r.pass && e.ratio <= eps + 3.0 * e.ratio_se;
    failures += ok ? 0 : 1;
    worst = std::max(worst, e.ratio / eps);
    t.row().add(k).add(delta).add(q).add(e.ratio).add(e.ratio_se).add(eps).add(r.pass ? "true" : "false");
  }
  o.pass = failures == 0;
  o.detail = std::to_string(failures) + " failures in 1000 pairs, max ratio / epsilon = " +
             fmt("%.3f", worst);
  o.csv = t.str();
  return o;
}

// 10 -------------------------------------------------------------------------
Outcome classification_bound() {
  Outcome o;
  const double delta = 0.1, q = 0.001;
  const GmmSpec spec = load_spec_file(kData / "specs" / "pm1_1d.json");
  const ActivationConstants act = sigmoid_constants();
  const ConstructionParams p1 = solve_params(spec, 0, delta, q, act);
  const ConstructionParams p2 = solve_params(spec, 1, delta, q, act);
  const FeedforwardNet n1 = build_class_subnetwork(spec, p1);
  const FeedforwardNet n2 = build_class_subnetwork(spec, p2);
  const ScoreFn scores = [&](const Matrix& pts) {
    Matrix s(pts.rows(), 2);
    s.col(0) = n1.eval_batch(pts).col(0);
    s.col(1) = n2.eval_batch(pts).col(0);
    return s;
  };
  const std::size_t count = 20000;
  const ConfusionReport conf = empirical_error(scores, spec, {count, count}, 1010);
  const Estimate& e21 = conf.rate(0, 1);

  const BatchFn l1 = spec.discriminant(0).log_batch();
  const BatchFn l2 = spec.discriminant(1).log_batch();
  const Sampler s1 = spec.class_sampler(0);
  const Estimate opt = e21_opt_inflated(l1, l2, s1, (1 + delta) / (1 - delta), 200000, 1011);
  const Estimate tail = superlevel_tail(l1, s1, (1 + delta) * p2.tstar / (1 - delta), 200000, 1012);
  const double bound = error_upper_bound(opt.mean, q, tail.mean);
  const double se = std::sqrt(e21.std_error * e21.std_error + opt.std_error * opt.std_error +
                              tail.std_error * tail.std_error);
  const double bayes = norm_cdf(-1.0);
  o.pass = e21.mean <= bound + 3.0 * se && std::abs(e21.mean - bayes) <= 0.01;
  CsvTable t({"e21", "e21_se", "e21_opt_inflated", "tail", "q", "bound", "bayes"});
  t.row().add(e21.mean).add(e21.std_error).add(opt.mean).add(tail.mean).add(q).add(bound).add(bayes);
  o.csv = t.str();
  o.detail = fmt2("e21 = %.4f +- %.4f", e21.mean, e21.std_error) + fmt(", bound %.4f", bound) +
             fmt(", Phi(-1) = %.5f", bayes);
  return o;
}

// 11 -------------------------------------------------------------------------
Outcome relu_variant() {
  const GmmSpec spec = load_spec_file(kData / "specs" / "gauss1d.json");
  const ConstructionParams p = solve_params(spec, 0, 0.5, 0.1, sigmoid_constants());
  bool count_ok = true;
  std::string counts;
  for (const auto& cp : p.components) {
    if (cp.trivial) continue;
    const std::size_t nodes = build_relu_square(cp.R, cp.nu).node_count();
    const auto limit = static_cast<std::size_t>(std::ceil(2.0 * cp.R / std::sqrt(cp.nu))) + 2;
    count_ok = count_ok && nodes <= limit;
    counts += std::to_string(nodes) + " <= " + std::to_string(limit) + "; ";
  }
  Outcome o = end_to_end({"gauss1d.json"}, BuildMode::kRelu, 100000);
  o.pass = o.pass && count_ok;
  o.detail = "supernode nodes " + counts + o.detail;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::create_directories(out);

  std::vector<Criterion> all = {
      {1, "exact-activation oracle", 10, exact_oracle},
      {2, "square supernode grid", 5, square_grid},
      {3, "staircase grid", 5, staircase_grid},
      {4, "end-to-end verify 1-D and 2-D", 60,
       [] { return end_to_end({"gauss1d.json", "two_class_2d.json"}, BuildMode::kSmooth, 100000); }},
      {5, "O(n) node scaling", 0, node_scaling},
      {6, "tail level", 30, tail_level},
      {7, "shallow lower bound consistency", 0, snn_consistency},
      {8, "cosine random features", 0, cosine_construction},
      {9, "relative l2 bound on saturated pairs", 0, saturated_pairs},
      {10, "classification error bound", 0, classification_bound},
      {11, "relu variant", 0, relu_variant},
  };

  int failed = 0;
  std::vector<std::string> first;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.time_limit <= 0 || secs < c.time_limit;
    const bool ok = o.pass && in_time;
    failed += ok ? 0 : 1;
    std::ofstream(out / ("criterion_" + std::to_string(c.id) + ".csv"), std::ios::binary) << o.csv;
    first.push_back(o.csv);
    std::printf("criterion %2d %s: %s  (%.1f s%s) %s\n", c.id, c.title, ok ? "PASS" : "FAIL", secs,
                c.time_limit > 0 ? (in_time ? ", within limit" : ", OVER LIMIT") : "",
                o.detail.c_str());
    std::fflush(stdout);
  }

  // 12: same seeds, same bytes.
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<int> differing;
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::string again;
    try {
      again = all[i].run().csv;
    } catch (const std::exception&) {
      again = "<error>";
    }
    if (again != first[i] || first[i].empty()) differing.push_back(all[i].id);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string detail = "reran criteria 1-11: ";
  if (differing.empty()) {
    detail += "all CSV artifacts byte-identical";
  } else {
    detail += "differences in";
    for (int id : differing) detail += " " + std::to_string(id);
  }
  failed += differing.empty() ? 0 : 1;
  std::printf("criterion 12 determinism: %s  (%.1f s) %s\n", differing.empty() ? "PASS" : "FAIL",
              secs, detail.c_str());
  std::printf("%d of 12 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
