#pragma once

#include "gmmdnn/core/gmm.hpp"
#include "gmmdnn/core/montecarlo.hpp"
#include "gmmdnn/core/network.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace gmmdnn {

inline constexpr double kConditionSlack = 1e-9;
inline constexpr double kBoundaryBand = 1e-12;

struct ApproxReport {
  double delta = 0.0;
  double q = 0.0;
  double t = 0.0;
  std::size_t count = 0;
  Estimate in_set;              // P[d >= t]
  double max_rel_error = 0.0;   // on the set
  double mean_rel_error = 0.0;
  double max_outside = 0.0;     // max d_hat off the set
  double min_outside = 0.0;     // min d_hat off the set
  std::size_t cond1_violations = 0;
  std::size_t cond2_violations = 0;
  std::size_t boundary_excluded = 0;
  bool pass = false;         // zero violations
  bool coverage_ok = false;  // P[S] >= 1 - q - 3 SE
};

// Samples x ~ p and checks |d_hat - d| <= delta d where d >= t and
// 0 <= d_hat <= (1 + delta) t elsewhere, with slack 1e-9 d and 1e-9 t.
// Set membership uses log d >= log t; points with |log d - log t| <= 1e-12
// are counted in boundary_excluded and skipped. Throws kInvalidArgument for
// t <= 0 or count < 1000.
ApproxReport verify_dq(const BatchFn& log_d_exact, const BatchFn& d_hat, const Sampler& p,
                       double t, double delta, double q, std::size_t count, std::uint64_t seed);

// delta^2 + (1 + delta)^2 q / (1 - q). Throws kQOutOfRange or kDeltaOutOfRange.
double relative_l2_epsilon(double delta, double q);

// Clamp(e_opt + q + tail, 0, 1). Throws kInvalidArgument for inputs outside [0, 1].
double error_upper_bound(double e_opt_inflated, double q, double tail_prob);

// P_1[d_2(X) > d_1(X) / alpha] with X drawn from class 1.
Estimate e21_opt_inflated(const BatchFn& log_d1, const BatchFn& log_d2, const Sampler& class1,
                          double alpha, std::size_t count, std::uint64_t seed);
// P_1[d_1(X) < level].
Estimate superlevel_tail(const BatchFn& log_d1, const Sampler& class1, double level,
                         std::size_t count, std::uint64_t seed);

// Row-per-point scores, one column per class. The decision is the argmax,
// ties to the lowest class.
using ScoreFn = std::function<Matrix(const Matrix& points)>;

ScoreFn bayes_scores(const GmmSpec& spec);
ScoreFn network_scores(const FeedforwardNet& net);

struct ConfusionReport {
  std::vector<std::vector<std::size_t>> counts;  // [true class][decided class]
  std::vector<std::size_t> per_class;
  std::vector<std::vector<Estimate>> rates;      // counts / per_class
  double total_error = 0.0;                      // prior weighted
  double total_error_se = 0.0;

  // Probability of deciding `decided` when the truth is `truth`.
  const Estimate& rate(std::size_t truth, std::size_t decided) const {
    return rates[truth][decided];
  }
};

// Throws kInvalidArgument for fewer than 1000 samples in a class.
ConfusionReport empirical_error(const ScoreFn& classifier, const GmmSpec& spec,
                                const std::vector<std::size_t>& per_class_counts,
                                std::uint64_t seed);

}  // namespace gmmdnn
