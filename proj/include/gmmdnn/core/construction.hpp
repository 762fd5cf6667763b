#pragma once

#include "gmmdnn/core/gmm.hpp"
#include "gmmdnn/core/network.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace gmmdnn {

// ---- tail level ---------------------------------------------------------

// kChernoff: log(1/t) = (n/2) log(8 pi V) + 2 log(1/q) + log J, which bounds
// P[p(X) < t] <= q for any J-component mixture with covariance eigenvalues
// <= V. kCompact: log(1/t) = (n/32) log(32 pi V) + (1/4) log(1/q) + log J;
// kept for comparison, it does not bound the tail (see README).
enum class TailRule { kChernoff, kCompact };

std::string_view tail_rule_name(TailRule rule);
std::optional<TailRule> parse_tail_rule(std::string_view name);

double log_inv_tstar(Eigen::Index n, double V, double q, std::size_t J,
                     TailRule rule = TailRule::kChernoff);
double solve_tstar(Eigen::Index n, double V, double q, std::size_t J,
                   TailRule rule = TailRule::kChernoff);

// ---- activation constants ----------------------------------------------

struct ActivationConstants {
  Activation first;   // used by the square supernodes
  Activation second;  // staircase nodes, input scale eta0 folded in
  double tau = 0.0;
  double r = 0.0;
  double second_derivative = 0.0;  // sigma''(tau)
  double third_max = 0.0;          // M
  double eta0 = 1.0;
  bool verified = false;
  AssumptionReport report;
};

// Runs the assumption checks and the decay rescaling search. Never throws for
// a failing activation; `verified` is false and report.failure says why.
ActivationConstants measure_activation(const Activation& kind, double tau, double r,
                                       const AssumptionGrid& grid = {});
// Sigmoid at tau = -1, r = 0.5.
ActivationConstants sigmoid_constants();

// ---- parameters ----------------------------------------------------------

struct ComponentParams {
  std::size_t component = 0;  // index into the GmmSpec
  double log_beta = 0.0;
  double log_lambda_tilde = 0.0;
  double lambda_tilde = 0.0;
  bool trivial = false;  // lambda_tilde >= 1, approximated by 0
  double R = 0.0;
  double nu = 0.0;
  double a = 0.0;
  double T = 0.0;
  double Delta = 0.0;
  std::size_t K = 0;
};

struct ConstructionParams {
  std::size_t cls = 0;
  Eigen::Index n = 0;
  double delta = 0.0;
  double q = 0.0;
  double epsilon = 0.0;  // staircase accuracy delta / 2
  std::size_t J = 0;
  double V = 0.0;
  TailRule rule = TailRule::kChernoff;
  double log_inv_tstar_density = 0.0;  // level for p = d / prior
  double log_tstar = 0.0;              // level for d itself
  double tstar = 0.0;
  double log_lambda = 0.0;
  double lambda = 0.0;
  double nu = 0.0;
  double delta_max = 0.0;
  ActivationConstants activation;
  std::vector<ComponentParams> components;
  std::vector<std::string> warnings;

  std::size_t total_steps() const;
};

// a = max(2R/r, 8 M R^3 / (3 nu s2), 4 M R / (3 s2)).
double solve_dilation(double R, double nu, const ActivationConstants& act);

// Throws kDeltaOutOfRange, kQOutOfRange, kAssumptionNotVerified,
// kInvalidArgument (class index).
ConstructionParams solve_params(const GmmSpec& spec, std::size_t cls, double delta, double q,
                                const ActivationConstants& act,
                                TailRule rule = TailRule::kChernoff);

std::string params_to_json(const ConstructionParams& p);
// 16 hex digits, FNV-1a over params_to_json.
std::string params_digest(const ConstructionParams& p);

// ---- supernode fragments -----------------------------------------------

// h(x, a) = a^2 / s2 * (sigma(x/a + tau) + sigma(-x/a + tau) - 2 sigma(tau)).
// Two basic nodes with input weights +-1/a and bias tau, output coefficient
// a^2/s2 and a constant -2 sigma(tau) a^2/s2 for the consuming layer's bias.
struct SquareSupernode {
  double a = 1.0;
  double tau = 0.0;
  double second_derivative = 1.0;
  Activation kind;

  double input_weight() const { return 1.0 / a; }
  double output_weight() const { return a * a / second_derivative; }
  double output_constant() const { return -2.0 * kind(tau) * output_weight(); }
  double eval(double x) const;
};

SquareSupernode build_supernode_square(double a, double tau, double second_derivative,
                                       const Activation& kind);

// psi(x) = 1 + sum_k c_k s(x / Delta - k), c_k = e^{-k Delta} - e^{-(k-1) Delta}.
// `ramp` replaces the activation by s(z) = clamp(z + 1/2, 0, 1), realized by
// two ReLU nodes per step.
struct StaircaseSupernode {
  double T = 0.0;
  double Delta = 0.0;
  std::size_t K = 0;
  Activation kind;
  bool ramp = false;

  double coefficient(std::size_t k) const;
  double step(double z) const;
  std::size_t node_count() const { return ramp ? 2 * K : K; }
  // Evaluates the sum reordered around floor(x / Delta) so the result keeps
  // relative accuracy where psi is small. Terms more than 64 steps away from
  // x are dropped; they are below 1e-13 of the result for any activation that
  // passes the decay check with eta = 1.
  double eval(double x) const;
  // Plain left-to-right sum over all K terms, as the network computes it.
  double eval_direct(double x) const;
};

StaircaseSupernode build_supernode_negexp(double T, double Delta, std::size_t K,
                                          const Activation& kind);
StaircaseSupernode build_supernode_ramp(double T, double Delta, std::size_t K);

// Piecewise-linear interpolant of x^2 on [-2R, 2R] with knot spacing
// <= 2 sqrt(nu), constant 4R^2 outside. f(x) = 4R^2 + sum_i c_i relu(x - k_i).
struct ReluSquare {
  double R = 0.0;
  double nu = 0.0;
  std::vector<double> knots;
  std::vector<double> coefficients;

  double base() const { return 4.0 * R * R; }
  std::size_t node_count() const { return knots.size(); }
  double eval(double x) const;
};

ReluSquare build_relu_square(double R, double nu);

// ---- networks ------------------------------------------------------------

enum class BuildMode { kReference, kSmooth, kRelu };

std::string_view build_mode_name(BuildMode mode);

// Square/NegExp network computing the class discriminant exactly: n square
// nodes and one NegExp node per component.
FeedforwardNet build_reference_network(const GmmSpec& spec, std::size_t cls);

// Two hidden layers: 2n basic nodes per non-trivial component, then K_j
// staircase nodes per component; Identity output sum_j beta_j psi_j.
FeedforwardNet build_class_subnetwork(const GmmSpec& spec, const ConstructionParams& params,
                                      BuildMode mode = BuildMode::kSmooth);
FeedforwardNet build_relu_variant(const GmmSpec& spec, const ConstructionParams& params);

// Places class networks side by side (first layers stacked, deeper layers
// block diagonal) giving one output per class. All inputs must share depth
// and per-layer activations.
FeedforwardNet stack_networks(const std::vector<FeedforwardNet>& nets);

}  // namespace gmmdnn
