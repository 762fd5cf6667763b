#pragma once

#include "gmmdnn/core/common.hpp"
#include "gmmdnn/core/montecarlo.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gmmdnn {

enum class ActivationTag { kSquare, kNegExp, kSigmoid, kTanh, kRelu, kIndicator, kCosine, kIdentity };

std::string_view activation_name(ActivationTag tag);
std::optional<ActivationTag> parse_activation_tag(std::string_view name);

// Elementwise activation sigma(input_scale * x). Cosine evaluates
// cos(input_scale * x / sqrt(cosine_scale)). Indicator is 1{x >= 0}, so -0.0
// maps to 1.
struct Activation {
  ActivationTag tag = ActivationTag::kIdentity;
  double cosine_scale = 1.0;
  double input_scale = 1.0;

  static Activation of(ActivationTag tag) { return Activation{tag, 1.0, 1.0}; }
  static Activation cosine(double s_f) { return Activation{ActivationTag::kCosine, s_f, 1.0}; }

  double operator()(double x) const;
  void apply(Eigen::Ref<Matrix> values) const;
  void validate() const;

  friend bool operator==(const Activation&, const Activation&) = default;
};

double eval_activation(const Activation& kind, double x);

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation;

  Eigen::Index width() const { return weights.rows(); }
};

struct NetMetadata {
  std::string provenance;
  std::string params_digest;
  std::vector<std::string> notes;
};

// Layered affine + activation network. Every layer but the last is hidden;
// node_count() sums the hidden widths.
class FeedforwardNet {
 public:
  // Throws kDimensionMismatch if the layer shapes do not chain, and
  // kInvalidArgument for non-finite parameters.
  FeedforwardNet(Eigen::Index input_dim, std::vector<Layer> layers, NetMetadata meta = {});

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return layers_.back().width(); }
  const std::vector<Layer>& layers() const { return layers_; }
  const NetMetadata& metadata() const { return meta_; }
  NetMetadata& metadata() { return meta_; }

  std::vector<Eigen::Index> hidden_widths() const;
  Eigen::Index node_count() const;

  // Throws kDimensionMismatch or kNonFiniteIntermediate.
  Vector eval(const Vector& x) const;
  // Row-per-point evaluation, returns points.rows() x output_dim().
  Matrix eval_batch(const Matrix& points) const;
  BatchFn output_batch(Eigen::Index output = 0) const;

 private:
  Eigen::Index input_dim_;
  std::vector<Layer> layers_;
  NetMetadata meta_;
};

Vector eval_net(const FeedforwardNet& net, const Vector& x);

struct NodeCounts {
  std::vector<Eigen::Index> per_layer;  // hidden layers only
  Eigen::Index total = 0;
};

NodeCounts count_nodes(const FeedforwardNet& net);

// JSON with explicit activation tags; every float written with 17
// significant digits so a parse reproduces the bits.
std::string serialize_net(const FeedforwardNet& net);
// Throws kParseError with a JSON pointer to the offending value.
FeedforwardNet deserialize_net(const std::string& text);

// ---- activation assumptions -------------------------------------------

struct AssumptionGrid {
  std::size_t points = 100001;
  double monotone_max = 50.0;  // monotonicity checked on [0, monotone_max]
  double decay_min = -50.0;    // decay checked on [decay_min, decay_max]
  double decay_max = 50.0;
};

struct AssumptionReport {
  double tau = 0.0;
  double r = 0.0;
  double eta = 1.0;
  bool curvature_ok = false;  // sigma''(tau) > 0 and |sigma'''| <= M near tau
  bool monotone_ok = false;   // sigma(x + tau) + sigma(-x + tau) nondecreasing on x >= 0
  bool decay_ok = false;      // |sigma(x)| <= e^{eta x}, |sigma(x) - 1| <= e^{-eta x}
  double second_derivative = 0.0;      // sigma''(tau), analytic when available
  double second_derivative_fd = 0.0;   // central difference, h = 1e-5
  double third_derivative_max = 0.0;   // M, sup |sigma'''| on [tau - r, tau + r]
  double third_derivative_max_fd = 0.0;
  std::string failure;  // first failing assumption and where

  bool all_ok() const { return curvature_ok && monotone_ok && decay_ok; }
};

// Numerical check of the curvature, symmetric-monotonicity and exponential
// decay assumptions for a smooth activation (Sigmoid or Tanh).
AssumptionReport check_assumptions(const Activation& kind, double tau, double r,
                                   const AssumptionGrid& grid = {}, double eta = 1.0);

// Throws kAssumptionViolated naming the first failing assumption.
void require_assumptions(const AssumptionReport& report, bool need_square = true,
                         bool need_decay = true);

// Grid check of the decay assumption for an arbitrary scalar function.
// Returns the first violating x, or nullopt when the bound holds.
std::optional<double> decay_violation(const std::function<double(double)>& fn, double eta,
                                      const AssumptionGrid& grid = {});

// Smallest power of two s in [2^-8, 2^16] such that fn(s * x) passes the
// decay check with eta = 1, or nullopt.
std::optional<double> decay_input_scale(const std::function<double(double)>& fn,
                                        const AssumptionGrid& grid = {});

// Analytic derivatives (orders 1..3) for Sigmoid and Tanh, including the
// input scale. nullopt for other kinds.
std::optional<double> analytic_derivative(const Activation& kind, int order, double x);

}  // namespace gmmdnn
