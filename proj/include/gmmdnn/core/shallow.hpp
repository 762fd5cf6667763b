#pragma once

#include "gmmdnn/core/montecarlo.hpp"
#include "gmmdnn/core/network.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace gmmdnn {

// Target mu_c(x) = alpha^{n/4} exp(-|x|^2 / (2 s_f)), alpha = 1 + 2 s_x / s_f,
// under x ~ N(0, s_x I). Normalized so E[mu_c^2] = 1.
struct ShallowProblem {
  Eigen::Index n = 1;
  double s_x = 1.0;
  double s_f = 1.0;
  std::size_t n1 = 1;
  double a_norm = 0.0;

  // Throws kInvalidArgument.
  void validate() const;
  double alpha() const { return 1.0 + 2.0 * s_x / s_f; }
  double rho() const { return 1.0 + s_x * s_x / (s_f * s_f + 2.0 * s_x * s_f); }
};

double log_mu_c(const ShallowProblem& p, const Vector& x);
double eval_mu_c(const ShallowProblem& p, const Vector& x);
BatchFn mu_c_batch(const ShallowProblem& p);
// x ~ N(0, s_x I_n).
Sampler shallow_sampler(const ShallowProblem& p);

struct ShallowBoundReport {
  double alpha = 0.0;
  double rho = 0.0;
  double rate = 0.0;   // rho^{n/4}
  double bound = 0.0;  // 1 - 2 sqrt(n1) |a| (1 + s_x/s_f)^{1/4} rho^{-n/4}
  double m1 = 0.0;     // rho
  double m2 = 0.0;     // alpha^2
  double epsilon = 0.0;
  double A = 0.0;          // |a| / sqrt(n1)
  double min_n1 = 0.0;     // (1 - eps) rho^{n/4} / (2 A (1 + s_x/s_f)^{1/4}), +inf if A = 0
};

ShallowBoundReport eval_lower_bound(const ShallowProblem& p, double epsilon = 0.1);

// One Cosine(s_f) hidden layer of n1 nodes with N(0, I) weight rows and zero
// bias; every output weight is alpha^{n/4} / n1.
FeedforwardNet build_cosine_snn(const ShallowProblem& p, std::uint64_t seed);

struct L2Estimate {
  Estimate mse;        // E[(f - g)^2]
  Estimate target_ms;  // E[g^2]
  double ratio = 0.0;
  double ratio_se = 0.0;
};

// Throws kInvalidArgument when count < 100.
L2Estimate estimate_l2_error(const BatchFn& f, const BatchFn& g, const Sampler& sampler,
                             std::size_t count, std::uint64_t seed);

// A single-hidden-layer network rewritten as f(x) = c + sum_i a_i h_i(<u_i, x>)
// with |u_i| = 1 and E[h_i^2] = 1 (second moment measured by Monte Carlo).
// A nonzero output bias c is carried as an extra constant node.
struct NormalizedSnn {
  Matrix directions;              // n1 x n, unit rows
  std::vector<double> arg_scale;  // |w_i|
  std::vector<double> rms;        // sqrt(E[sigma(w_i.x + b_i)^2])
  Vector a;                       // renormalized output coefficients
  double a_norm = 0.0;
  std::size_t nodes = 0;          // including the constant node if present
};

NormalizedSnn normalize_snn(const FeedforwardNet& net, const Sampler& sampler,
                            std::size_t count, std::uint64_t seed);

struct ConsistencyReport {
  L2Estimate error;
  NormalizedSnn normalized;
  ShallowBoundReport bound;
  bool consistent = false;  // error >= bound - 3 SE
};

// Measures E[(f - mu_c)^2] for a single-hidden-layer net and compares it with
// the lower bound evaluated at the renormalized coefficient norm.
ConsistencyReport check_lower_bound(const FeedforwardNet& net, const ShallowProblem& p,
                                    std::size_t count, std::uint64_t seed);

}  // namespace gmmdnn
