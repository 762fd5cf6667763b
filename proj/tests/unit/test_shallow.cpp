#include "doctest.h"

#include "gmmdnn/core/shallow.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace gmmdnn;
using namespace testing_support;

namespace {

ShallowProblem problem(Eigen::Index n, std::size_t n1, double s_x = 1.0, double s_f = 1.0,
                       double a_norm = 0.0) {
  ShallowProblem p;
  p.n = n;
  p.n1 = n1;
  p.s_x = s_x;
  p.s_f = s_f;
  p.a_norm = a_norm;
  return p;
}

// E_w E_x[(f - mu_c)^2] for the random cosine features with w ~ N(0, I):
// E_w cos(w.x / sqrt(s_f)) = exp(-|x|^2 / (2 s_f)) and E[exp(-c |x|^2)] = (1 + 2 c s_x)^{-n/2}.
double cosine_expected_mse(const ShallowProblem& p) {
  const double h = static_cast<double>(p.n) / 2.0;
  const double scale = std::pow(1.0 + 2.0 * p.s_x / p.s_f, h) / static_cast<double>(p.n1);
  const double var = 0.5 + 0.5 * std::pow(1.0 + 4.0 * p.s_x / p.s_f, -h) -
                     std::pow(1.0 + 2.0 * p.s_x / p.s_f, -h);
  return scale * var;
}

struct SeedAverage {
  double mean = 0.0;
  double se = 0.0;
  double ratio = 0.0;
};

SeedAverage average_over_seeds(const ShallowProblem& p, int seeds, std::size_t samples) {
  std::vector<double> mse, ratio;
  for (int s = 0; s < seeds; ++s) {
    const FeedforwardNet net = build_cosine_snn(p, 1000 + static_cast<std::uint64_t>(s));
    const L2Estimate e = estimate_l2_error(net.output_batch(0), mu_c_batch(p), shallow_sampler(p),
                                           samples, 77 + static_cast<std::uint64_t>(s));
    mse.push_back(e.mse.mean);
    ratio.push_back(e.ratio);
  }
  SeedAverage r;
  for (double v : mse) r.mean += v;
  r.mean /= static_cast<double>(seeds);
  double ss = 0.0;
  for (double v : mse) ss += (v - r.mean) * (v - r.mean);
  r.se = std::sqrt(ss / (seeds - 1) / seeds);
  for (double v : ratio) r.ratio += v;
  r.ratio /= static_cast<double>(seeds);
  return r;
}

}  // namespace

TEST_CASE("mu_c") {
  const ShallowProblem p = problem(4, 1);
  CHECK(p.alpha() == 3.0);
  CHECK(eval_mu_c(p, Vector::Zero(4)) == doctest::Approx(3.0).epsilon(1e-15));
  Vector x(4);
  x << 0.3, -1.0, 2.0, 0.5;
  const double want = 3.0 * std::exp(-x.squaredNorm() / 2.0);
  CHECK(eval_mu_c(p, x) == doctest::Approx(want).epsilon(1e-14));
  CHECK_THROWS(eval_mu_c(p, Vector::Zero(3)));

  // Far out, the direct product underflows but the log stays exact.
  const ShallowProblem q = problem(2, 1, 1.0, 0.5);
  Vector far(2);
  far << 40.0, 0.0;
  CHECK(log_mu_c(q, far) == doctest::Approx(0.5 * std::log(5.0) - 1600.0).epsilon(1e-15));
}

TEST_CASE("mu_c is normalized: Monte Carlo of E[mu_c^2], n = 6") {
  for (double s_f : {1.0, 2.5}) {
    const ShallowProblem p = problem(6, 1, 1.0, s_f);
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    const std::size_t count = 1000000;
    double sum = 0.0;
    Vector x(6);
    for (std::size_t i = 0; i < count; ++i) {
      for (Eigen::Index c = 0; c < 6; ++c) x[c] = nd(gen);
      const double m = eval_mu_c(p, x);
      sum += m * m;
    }
    CHECK(sum / static_cast<double>(count) == doctest::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("lower bound: values") {
  const ShallowBoundReport r = eval_lower_bound(problem(40, 4, 1.0, 1.0, 1.0));
  const double hand = 1.0 - 4.0 * std::pow(2.0, 0.25) * std::pow(4.0 / 3.0, -10.0);
  CHECK(r.bound == doctest::Approx(hand).epsilon(1e-13));
  CHECK(std::abs(r.bound - 0.7322) <= 1e-3);
  CHECK(r.rho == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(r.alpha == 3.0);
  CHECK(r.m1 == r.rho);
  CHECK(r.m2 == 9.0);
  CHECK(r.rate == doctest::Approx(std::pow(4.0 / 3.0, 10.0)).epsilon(1e-13));

  CHECK(eval_lower_bound(problem(10, 7, 0.3, 2.0, 0.0)).bound == 1.0);
  CHECK(std::isinf(eval_lower_bound(problem(10, 7, 0.3, 2.0, 0.0)).min_n1));
}

TEST_CASE("lower bound: minimal width gives exactly epsilon") {
  // With |a| = A sqrt(n1), the bound reaches eps at n1 = (1 - eps) rho^{n/4} / (2 A c).
  ShallowProblem p = problem(30, 9, 1.0, 1.0, 0.6);
  const ShallowBoundReport r = eval_lower_bound(p, 0.25);
  CHECK(r.A == doctest::Approx(0.2).epsilon(1e-15));
  const double c = std::pow(2.0, 0.25);
  const double n1 = r.min_n1;
  CHECK(n1 == doctest::Approx(0.75 * std::pow(4.0 / 3.0, 7.5) / (0.4 * c)).epsilon(1e-13));
  const double at = 1.0 - 2.0 * n1 * r.A * c * std::pow(4.0 / 3.0, -7.5);
  CHECK(at == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("lower bound: rho > 1, m1 < m2 and monotone in n") {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int i = 0; i < 2000; ++i) {
    const double s_x = std::exp(u(gen));
    const double s_f = std::exp(u(gen));
    const ShallowBoundReport r = eval_lower_bound(problem(3, 2, s_x, s_f, 0.5));
    CHECK(r.rho > 1.0);
    CHECK(r.m1 < r.m2);
    CHECK(std::isfinite(r.bound));
  }
  for (double s : {0.2, 1.0, 5.0}) {
    double prev = -1e300;
    for (Eigen::Index n = 1; n <= 200; ++n) {
      const double b = eval_lower_bound(problem(n, 4, 1.0, s, 0.8)).bound;
      CHECK(b >= prev);
      if (1.0 - b > 1e-12) CHECK(b > prev);
      prev = b;
    }
  }
  CHECK_THROWS_AS(eval_lower_bound(problem(3, 0)), Error);
  CHECK_THROWS_AS(eval_lower_bound(problem(3, 1, -1.0)), Error);
  CHECK_THROWS_AS(eval_lower_bound(problem(3, 1, 1.0, 0.0)), Error);
}

TEST_CASE("cosine SNN: structure and determinism") {
  const ShallowProblem p = problem(5, 12, 1.0, 2.0);
  const FeedforwardNet a = build_cosine_snn(p, 3);
  const FeedforwardNet b = build_cosine_snn(p, 3);
  const FeedforwardNet c = build_cosine_snn(p, 4);
  CHECK(serialize_net(a) == serialize_net(b));
  CHECK(serialize_net(a) != serialize_net(c));
  REQUIRE(a.layers().size() == 2);
  CHECK(a.node_count() == 12);
  CHECK(a.layers()[0].activation.tag == ActivationTag::kCosine);
  CHECK(a.layers()[0].activation.cosine_scale == 2.0);
  CHECK(a.layers()[0].bias.isZero());
  const double coef = std::pow(2.0, 5.0 / 4.0) / 12.0;
  for (Eigen::Index i = 0; i < 12; ++i) CHECK(a.layers()[1].weights(0, i) == doctest::Approx(coef));
  CHECK(a.layers()[1].bias[0] == 0.0);

  // Rows look standard normal.
  const FeedforwardNet big = build_cosine_snn(problem(50, 400), 9);
  const Matrix& w = big.layers()[0].weights;
  const double mean = w.mean();
  const double var = (w.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("cosine SNN: single node orthogonal to the input") {
  const ShallowProblem p = problem(3, 1, 1.0, 1.0);
  const FeedforwardNet net = build_cosine_snn(p, 21);
  const Vector w = net.layers()[0].weights.row(0).transpose();
  std::mt19937_64 gen(1);
  Vector x = random_vector(gen, 3);
  x -= w * (w.dot(x) / w.squaredNorm());
  CHECK(eval_net(net, x)[0] == doctest::Approx(std::pow(3.0, 0.75)).epsilon(1e-12));
}

TEST_CASE("l2 estimator") {
  const ShallowProblem p = problem(6, 1);
  const BatchFn g = mu_c_batch(p);
  const L2Estimate same = estimate_l2_error(g, g, shallow_sampler(p), 5000, 1);
  CHECK(same.mse.mean == 0.0);
  CHECK(same.ratio == 0.0);

  const BatchFn zero = [](const Matrix& pts, Vector& out) { out = Vector::Zero(pts.rows()); };
  const L2Estimate z = estimate_l2_error(zero, g, shallow_sampler(p), 1000000, 2);
  CHECK(z.ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(z.target_ms.mean == doctest::Approx(1.0).epsilon(0.02));
  // E[mu_c^4] = alpha^n (1 + 4 s_x / s_f)^{-n/2}, so the standard error is predictable.
  const double se = std::sqrt((729.0 / 125.0 - 1.0) / 1e6);
  CHECK(z.target_ms.std_error == doctest::Approx(se).epsilon(0.1));

  CHECK_THROWS_AS(estimate_l2_error(g, g, shallow_sampler(p), 99, 1), Error);

  const L2Estimate r1 = estimate_l2_error(zero, g, shallow_sampler(p), 20000, 4);
  const L2Estimate r2 = estimate_l2_error(zero, g, shallow_sampler(p), 20000, 4);
  CHECK(r1.mse.mean == r2.mse.mean);
  CHECK(r1.mse.std_error == r2.mse.std_error);
}

TEST_CASE("cosine SNN: expected error at n = 6, n1 = 200") {
  const ShallowProblem p = problem(6, 200);
  const SeedAverage avg = average_over_seeds(p, 20, 20000);
  const double oracle = cosine_expected_mse(p);
  CHECK(oracle == doctest::Approx(27.0 / 200.0 * (0.5 + 0.5 / 125.0 - 1.0 / 27.0)).epsilon(1e-13));
  CHECK(avg.mean <= 27.0 / 200.0 + 3.0 * avg.se);
  CHECK(std::abs(avg.mean - oracle) <= 3.0 * avg.se + 0.02 * oracle);
}

TEST_CASE("cosine SNN: width for ratio 0.1") {
  const auto n1 = static_cast<std::size_t>(std::ceil(27.0 / 0.1));
  const ShallowProblem p = problem(6, n1);
  const SeedAverage avg = average_over_seeds(p, 20, 20000);
  CHECK(avg.ratio <= 0.15);
}

TEST_CASE("normalize_snn: cosine rms has a closed form") {
  const ShallowProblem p = problem(4, 3, 0.7, 1.3);
  Matrix w(3, 4);
  w << 1, 0, 0, 0,  //
      0.5, 0.5, 0.5, 0.5,  //
      0, 3, 0, -4;
  std::vector<Layer> layers;
  layers.push_back({w, Vector::Zero(3), Activation::cosine(1.3)});
  Matrix out(1, 3);
  out << 0.2, -0.4, 1.0;
  layers.push_back({out, Vector::Constant(1, 0.5), Activation::of(ActivationTag::kIdentity)});
  const FeedforwardNet net(4, std::move(layers));
  const NormalizedSnn s = normalize_snn(net, shallow_sampler(p), 400000, 8);
  CHECK(s.nodes == 4);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(s.directions.row(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
    const double norm = w.row(i).norm();
    CHECK(s.arg_scale[static_cast<std::size_t>(i)] == doctest::Approx(norm).epsilon(1e-14));
    // u.x ~ N(0, s_x): E[cos^2(|w| u.x / sqrt(s_f))] = (1 + exp(-2 |w|^2 s_x / s_f)) / 2.
    const double ms = 0.5 * (1.0 + std::exp(-2.0 * norm * norm * 0.7 / 1.3));
    CHECK(s.rms[static_cast<std::size_t>(i)] == doctest::Approx(std::sqrt(ms)).epsilon(0.01));
    CHECK(s.a[i] == doctest::Approx(out(0, i) * std::sqrt(ms)).epsilon(0.01));
  }
  CHECK(s.a[3] == 0.5);
  CHECK(s.a_norm == doctest::Approx(s.a.norm()));

  // Two hidden layers are rejected.
  std::vector<Layer> deep;
  deep.push_back({Matrix::Identity(4, 4), Vector::Zero(4), Activation::of(ActivationTag::kSigmoid)});
  deep.push_back({Matrix::Identity(4, 4), Vector::Zero(4), Activation::of(ActivationTag::kSigmoid)});
  deep.push_back({Matrix::Ones(1, 4), Vector::Zero(1), Activation::of(ActivationTag::kIdentity)});
  CHECK_THROWS_AS(normalize_snn(FeedforwardNet(4, std::move(deep)), shallow_sampler(p), 1000, 1),
                  Error);
}

TEST_CASE("measured error never undercuts the lower bound") {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> width(1, 16);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Index n = 20;
  for (int trial = 0; trial < 12; ++trial) {
    const auto n1 = static_cast<Eigen::Index>(width(gen));
    const bool cosine = trial % 2 == 0;
    Matrix w(n1, n);
    for (Eigen::Index i = 0; i < n1; ++i) w.row(i) = random_vector(gen, n).transpose().normalized();
    Vector b = Vector::Zero(n1);
    if (!cosine) for (Eigen::Index i = 0; i < n1; ++i) b[i] = u(gen);
    Matrix out(1, n1);
    for (Eigen::Index i = 0; i < n1; ++i) out(0, i) = u(gen);
    out *= 0.9 / out.norm();
    std::vector<Layer> layers;
    layers.push_back({w, b, cosine ? Activation::cosine(1.0) : Activation::of(ActivationTag::kSigmoid)});
    layers.push_back({out, Vector::Zero(1), Activation::of(ActivationTag::kIdentity)});
    const FeedforwardNet net(n, std::move(layers));
    const ConsistencyReport r = check_lower_bound(net, problem(n, static_cast<std::size_t>(n1)), 50000,
                                                  static_cast<std::uint64_t>(trial));
    CHECK(r.consistent);
    CHECK(r.normalized.nodes == static_cast<std::size_t>(n1));
    CHECK(r.error.mse.mean >= r.bound.bound - 3.0 * r.error.mse.std_error);
  }
}
