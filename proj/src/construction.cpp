#include "gmmdnn/core/construction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gmmdnn {
namespace {

constexpr std::size_t kWindow = 64;

void check_q(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw Error(ErrorCode::kQOutOfRange, "q must lie in (0, 1), got " + format_double(q));
  }
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 2.0)) {
    throw Error(ErrorCode::kDeltaOutOfRange,
                "delta must lie in (0, 2), got " + format_double(delta));
  }
}

// Rows of the whitening map y' = A (x - mu) / sqrt(2), so that g = |y'|^2.
struct Whitening {
  Matrix rows;  // n x n
  Vector bias;  // n
};

Whitening whitening(const GaussianComponent& g) {
  const double s = 1.0 / std::sqrt(2.0);
  Whitening w;
  w.rows = g.factor() * s;
  w.bias = -(g.factor() * g.mean()) * s;
  return w;
}

NetMetadata metadata_for(const ConstructionParams& p, BuildMode mode) {
  NetMetadata meta;
  meta.provenance = "construct-deep/" + std::string(build_mode_name(mode));
  if (mode == BuildMode::kSmooth) {
    meta.provenance += "/" + std::string(activation_name(p.activation.first.tag));
  }
  meta.params_digest = params_digest(p);
  meta.notes.push_back("class " + std::to_string(p.cls));
  std::string trivial;
  for (const auto& c : p.components) {
    if (c.trivial) trivial += (trivial.empty() ? "" : ",") + std::to_string(c.component);
  }
  if (!trivial.empty()) meta.notes.push_back("trivial components: " + trivial);
  for (const auto& w : p.warnings) meta.notes.push_back(w);
  return meta;
}

// A network that outputs 0 everywhere, used when every component is trivial.
FeedforwardNet zero_network(Eigen::Index n, const Activation& first, const Activation& second,
                            NetMetadata meta) {
  std::vector<Layer> layers(3);
  layers[0] = {Matrix::Zero(1, n), Vector::Zero(1), first};
  layers[1] = {Matrix::Zero(1, 1), Vector::Zero(1), second};
  layers[2] = {Matrix::Zero(1, 1), Vector::Zero(1), Activation::of(ActivationTag::kIdentity)};
  meta.notes.push_back("all components trivial, output is 0");
  return FeedforwardNet(n, std::move(layers), std::move(meta));
}

}  // namespace

// ---- tail level ---------------------------------------------------------

std::string_view tail_rule_name(TailRule rule) {
  return rule == TailRule::kChernoff ? "chernoff" : "compact";
}

std::optional<TailRule> parse_tail_rule(std::string_view name) {
  if (name == "chernoff") return TailRule::kChernoff;
  if (name == "compact") return TailRule::kCompact;
  return std::nullopt;
}

double log_inv_tstar(Eigen::Index n, double V, double q, std::size_t J, TailRule rule) {
  check_q(q);
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "n must be >= 1");
  if (!(V > 0.0) || !std::isfinite(V)) throw Error(ErrorCode::kInvalidArgument, "V must be > 0");
  if (J < 1) throw Error(ErrorCode::kInvalidArgument, "J must be >= 1");
  const double nd = static_cast<double>(n);
  const double pi = std::numbers::pi;
  const double logJ = std::log(static_cast<double>(J));
  if (rule == TailRule::kChernoff) {
    return nd / 2.0 * std::log(8.0 * pi * V) + 2.0 * std::log(1.0 / q) + logJ;
  }
  return nd / 32.0 * std::log(32.0 * pi * V) + 0.25 * std::log(1.0 / q) + logJ;
}

double solve_tstar(Eigen::Index n, double V, double q, std::size_t J, TailRule rule) {
  return std::exp(-log_inv_tstar(n, V, q, J, rule));
}

// ---- activation constants ----------------------------------------------

ActivationConstants measure_activation(const Activation& kind, double tau, double r,
                                       const AssumptionGrid& grid) {
  ActivationConstants c;
  c.first = kind;
  c.second = kind;
  c.tau = tau;
  c.r = r;
  c.report = check_assumptions(kind, tau, r, grid, 1.0);
  c.second_derivative = c.report.second_derivative;
  c.third_max = c.report.third_derivative_max;
  const auto eta = decay_input_scale([&kind](double x) { return kind(x); }, grid);
  const bool square_ok = c.report.curvature_ok && c.report.monotone_ok;
  if (eta) {
    c.eta0 = *eta;
    c.second.input_scale = kind.input_scale * *eta;
    if (square_ok) c.report.failure.clear();
  } else if (c.report.failure.empty()) {
    c.report.failure = "decay: no power-of-two input scale in [2^-8, 2^16] satisfies the bound";
  }
  c.verified = square_ok && eta.has_value();
  return c;
}

ActivationConstants sigmoid_constants() {
  return measure_activation(Activation::of(ActivationTag::kSigmoid), -1.0, 0.5);
}

// ---- parameters ----------------------------------------------------------

std::size_t ConstructionParams::total_steps() const {
  std::size_t k = 0;
  for (const auto& c : components) k += c.trivial ? 0 : c.K;
  return k;
}

double solve_dilation(double R, double nu, const ActivationConstants& act) {
  if (!(R > 0.0) || !(nu > 0.0)) throw Error(ErrorCode::kInvalidArgument, "need R > 0, nu > 0");
  const double M = act.third_max;
  const double s2 = act.second_derivative;
  return std::max({2.0 * R / act.r, 8.0 * M * R * R * R / (3.0 * nu * s2),
                   4.0 * M * R / (3.0 * s2)});
}

ConstructionParams solve_params(const GmmSpec& spec, std::size_t cls, double delta, double q,
                                const ActivationConstants& act, TailRule rule) {
  check_delta(delta);
  check_q(q);
  if (cls >= spec.num_classes()) {
    throw Error(ErrorCode::kInvalidArgument, "class index " + std::to_string(cls) +
                                                 " out of range (c = " +
                                                 std::to_string(spec.num_classes()) + ")");
  }
  if (!act.verified) {
    throw Error(ErrorCode::kAssumptionNotVerified,
                "activation " + std::string(activation_name(act.first.tag)) +
                    " did not pass the assumption checks: " + act.report.failure);
  }

  const Discriminant disc = spec.discriminant(cls);
  ConstructionParams p;
  p.cls = cls;
  p.n = spec.dim();
  p.delta = delta;
  p.q = q;
  p.epsilon = delta / 2.0;
  p.J = disc.terms().size();
  p.V = spec.class_omega_max(cls);
  p.rule = rule;
  p.activation = act;
  p.log_inv_tstar_density = log_inv_tstar(p.n, p.V, q, p.J, rule);
  p.log_tstar = std::log(disc.prior()) - p.log_inv_tstar_density;
  p.tstar = std::exp(p.log_tstar);
  p.log_lambda = p.log_tstar + std::log(delta) - std::log(2.0 * static_cast<double>(p.J) * (1.0 + delta));
  p.lambda = std::exp(p.log_lambda);
  p.nu = std::log1p(delta / 4.0) / static_cast<double>(p.n);
  p.delta_max = std::min(std::log1p(delta / 80.0), 0.5);
  if (delta > 1.5) {
    p.warnings.push_back("delta close to 2: the dilation and step counts grow quickly");
  }

  for (const auto& term : disc.terms()) {
    ComponentParams c;
    c.component = term.component;
    c.log_beta = term.log_beta;
    c.log_lambda_tilde = p.log_lambda - term.log_beta;
    c.lambda_tilde = std::exp(c.log_lambda_tilde);
    c.nu = p.nu;
    c.trivial = c.log_lambda_tilde >= 0.0;
    if (!c.trivial) {
      c.R = std::sqrt(-c.log_lambda_tilde);
      c.a = solve_dilation(c.R, c.nu, act);
      c.T = 4.0 * c.R * c.R;
      c.K = static_cast<std::size_t>(std::ceil(c.T / p.delta_max));
      c.Delta = c.T / static_cast<double>(c.K);
    }
    p.components.push_back(c);
  }
  return p;
}

// ---- fragments -----------------------------------------------------------

double SquareSupernode::eval(double x) const {
  const double u = x / a;
  return output_weight() * (kind(u + tau) + kind(-u + tau) - 2.0 * kind(tau));
}

SquareSupernode build_supernode_square(double a, double tau, double second_derivative,
                                       const Activation& kind) {
  if (!(a > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dilation a must be > 0");
  if (!(second_derivative > 0.0)) {
    throw Error(ErrorCode::kAssumptionViolated, "sigma''(tau) must be > 0", "curvature");
  }
  return SquareSupernode{a, tau, second_derivative, kind};
}

double StaircaseSupernode::coefficient(std::size_t k) const {
  return std::exp(-static_cast<double>(k - 1) * Delta) * std::expm1(-Delta);
}

double StaircaseSupernode::step(double z) const {
  if (ramp) return std::clamp(z + 0.5, 0.0, 1.0);
  return kind(z);
}

double StaircaseSupernode::eval_direct(double x) const {
  double psi = 1.0;
  for (std::size_t k = 1; k <= K; ++k) {
    psi += coefficient(k) * step(x / Delta - static_cast<double>(k));
  }
  return psi;
}

double StaircaseSupernode::eval(double x) const {
  const double u = x / Delta;
  const double fl = std::floor(u);
  const std::size_t m =
      fl <= 0.0 ? 0 : (fl >= static_cast<double>(K) ? K : static_cast<std::size_t>(fl));
  if (!ramp && kind.tag == ActivationTag::kIndicator) {
    return std::exp(-static_cast<double>(m) * Delta);
  }
  const bool symmetric = ramp || kind.tag == ActivationTag::kSigmoid;
  if (!symmetric) return eval_direct(x);

  // s(z) = 1 - s(-z) lets the saturated steps k <= m collapse into e^{-m Delta}.
  double below = 0.0;
  const std::size_t lo = m > kWindow ? m - kWindow + 1 : 1;
  for (std::size_t k = lo; k <= m; ++k) {
    below += coefficient(k) * step(static_cast<double>(k) - u);
  }
  double above = 0.0;
  const std::size_t hi = std::min(K, m + kWindow);
  for (std::size_t k = m + 1; k <= hi; ++k) {
    above += coefficient(k) * step(u - static_cast<double>(k));
  }
  return std::exp(-static_cast<double>(m) * Delta) - below + above;
}

StaircaseSupernode build_supernode_negexp(double T, double Delta, std::size_t K,
                                          const Activation& kind) {
  if (!(Delta > 0.0) || K < 1 || !(T > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "staircase needs T > 0, Delta > 0, K >= 1");
  }
  return StaircaseSupernode{T, Delta, K, kind, false};
}

StaircaseSupernode build_supernode_ramp(double T, double Delta, std::size_t K) {
  auto s = build_supernode_negexp(T, Delta, K, Activation::of(ActivationTag::kRelu));
  s.ramp = true;
  return s;
}

double ReluSquare::eval(double x) const {
  double f = base();
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const double z = x - knots[i];
    if (z > 0.0) f += coefficients[i] * z;
  }
  return f;
}

ReluSquare build_relu_square(double R, double nu) {
  if (!(R > 0.0) || !(nu > 0.0)) throw Error(ErrorCode::kInvalidArgument, "need R > 0, nu > 0");
  ReluSquare f;
  f.R = R;
  f.nu = nu;
  const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * R / std::sqrt(nu))));
  const double h = 4.0 * R / static_cast<double>(m);
  for (std::size_t i = 0; i <= m; ++i) f.knots.push_back(-2.0 * R + h * static_cast<double>(i));
  f.knots.back() = 2.0 * R;
  // Chord slope on [k_{i-1}, k_i] is k_{i-1} + k_i; zero outside the range.
  double prev = 0.0;
  for (std::size_t i = 0; i <= m; ++i) {
    const double next = i < m ? f.knots[i] + f.knots[i + 1] : 0.0;
    f.coefficients.push_back(next - prev);
    prev = next;
  }
  return f;
}

// ---- networks ------------------------------------------------------------

std::string_view build_mode_name(BuildMode mode) {
  switch (mode) {
    case BuildMode::kReference: return "reference";
    case BuildMode::kSmooth: return "smooth";
    case BuildMode::kRelu: return "relu";
  }
  return "unknown";
}

FeedforwardNet build_reference_network(const GmmSpec& spec, std::size_t cls) {
  if (cls >= spec.num_classes()) throw Error(ErrorCode::kInvalidArgument, "class index out of range");
  const Discriminant disc = spec.discriminant(cls);
  const Eigen::Index n = spec.dim();
  const auto J = static_cast<Eigen::Index>(disc.terms().size());

  Layer l1{Matrix(n * J, n), Vector(n * J), Activation::of(ActivationTag::kSquare)};
  Layer l2{Matrix::Zero(J, n * J), Vector(J), Activation::of(ActivationTag::kNegExp)};
  Layer out{Matrix::Ones(1, J), Vector::Zero(1), Activation::of(ActivationTag::kIdentity)};
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto& term = disc.terms()[static_cast<std::size_t>(j)];
    const Whitening w = whitening(term.gaussian);
    l1.weights.middleRows(j * n, n) = w.rows;
    l1.bias.segment(j * n, n) = w.bias;
    l2.weights.block(j, j * n, 1, n).setOnes();
    l2.bias[j] = -term.log_beta;
  }
  NetMetadata meta;
  meta.provenance = "construct-deep/reference";
  meta.notes.push_back("class " + std::to_string(cls));
  return FeedforwardNet(n, {std::move(l1), std::move(l2), std::move(out)}, std::move(meta));
}

FeedforwardNet build_class_subnetwork(const GmmSpec& spec, const ConstructionParams& params,
                                      BuildMode mode) {
  if (mode == BuildMode::kReference) return build_reference_network(spec, params.cls);
  if (params.n != spec.dim() || params.cls >= spec.num_classes()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameters were solved for a different spec");
  }
  const Discriminant disc = spec.discriminant(params.cls);
  if (disc.terms().size() != params.components.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameters were solved for a different class");
  }
  const Eigen::Index n = spec.dim();
  const bool relu = mode == BuildMode::kRelu;
  const Activation relu_act = Activation::of(ActivationTag::kRelu);
  const Activation first = relu ? relu_act : params.activation.first;
  const Activation second = relu ? relu_act : params.activation.second;

  // Width of each component's block in both hidden layers.
  std::vector<Eigen::Index> w1, w2;
  std::vector<ReluSquare> squares;
  Eigen::Index rows1 = 0, rows2 = 0;
  for (const auto& c : params.components) {
    if (c.trivial) {
      w1.push_back(0);
      w2.push_back(0);
      squares.emplace_back();
      continue;
    }
    if (relu) squares.push_back(build_relu_square(c.R, c.nu));
    else squares.emplace_back();
    const Eigen::Index per = relu ? static_cast<Eigen::Index>(squares.back().node_count()) : 2;
    w1.push_back(per * n);
    w2.push_back(static_cast<Eigen::Index>(relu ? 2 * c.K : c.K));
    rows1 += w1.back();
    rows2 += w2.back();
  }
  NetMetadata meta = metadata_for(params, mode);
  if (rows1 == 0) return zero_network(n, first, second, std::move(meta));

  Layer l1{Matrix::Zero(rows1, n), Vector::Zero(rows1), first};
  Layer l2{Matrix::Zero(rows2, rows1), Vector::Zero(rows2), second};
  Layer out{Matrix::Zero(1, rows2), Vector::Zero(1), Activation::of(ActivationTag::kIdentity)};

  Eigen::Index off1 = 0, off2 = 0;
  for (std::size_t j = 0; j < params.components.size(); ++j) {
    const auto& c = params.components[j];
    if (c.trivial) continue;
    const Whitening w = whitening(disc.terms()[j].gaussian);
    const double beta = std::exp(c.log_beta);
    const auto stair = relu ? build_supernode_ramp(c.T, c.Delta, c.K)
                            : build_supernode_negexp(c.T, c.Delta, c.K, second);

    // First layer and the affine map from its outputs to g_hat.
    Vector g_weights(w1[j]);
    double g_bias = 0.0;
    if (relu) {
      const auto& sq = squares[j];
      const auto per = static_cast<Eigen::Index>(sq.node_count());
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index l = 0; l < per; ++l) {
          const Eigen::Index row = off1 + i * per + l;
          l1.weights.row(row) = w.rows.row(i);
          l1.bias[row] = w.bias[i] - sq.knots[static_cast<std::size_t>(l)];
          g_weights[i * per + l] = sq.coefficients[static_cast<std::size_t>(l)];
        }
        g_bias += sq.base();
      }
    } else {
      const auto sq = build_supernode_square(c.a, params.activation.tau,
                                             params.activation.second_derivative, first);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index row = off1 + 2 * i;
        l1.weights.row(row) = w.rows.row(i) * sq.input_weight();
        l1.bias[row] = w.bias[i] * sq.input_weight() + sq.tau;
        l1.weights.row(row + 1) = -w.rows.row(i) * sq.input_weight();
        l1.bias[row + 1] = -w.bias[i] * sq.input_weight() + sq.tau;
        g_weights[2 * i] = sq.output_weight();
        g_weights[2 * i + 1] = sq.output_weight();
        g_bias += sq.output_constant();
      }
    }

    // Second layer: step k sees g_hat / Delta - k (ramp: +-1/2 around it).
    const double inv = 1.0 / c.Delta;
    for (std::size_t k = 1; k <= c.K; ++k) {
      const double shift = g_bias * inv - static_cast<double>(k);
      const double coef = beta * stair.coefficient(k);
      if (relu) {
        const Eigen::Index row = off2 + 2 * static_cast<Eigen::Index>(k - 1);
        l2.weights.block(row, off1, 1, w1[j]) = g_weights.transpose() * inv;
        l2.weights.block(row + 1, off1, 1, w1[j]) = g_weights.transpose() * inv;
        l2.bias[row] = shift + 0.5;
        l2.bias[row + 1] = shift - 0.5;
        out.weights(0, row) = coef;
        out.weights(0, row + 1) = -coef;
      } else {
        const Eigen::Index row = off2 + static_cast<Eigen::Index>(k - 1);
        l2.weights.block(row, off1, 1, w1[j]) = g_weights.transpose() * inv;
        l2.bias[row] = shift;
        out.weights(0, row) = coef;
      }
    }
    out.bias[0] += beta;
    off1 += w1[j];
    off2 += w2[j];
  }
  return FeedforwardNet(n, {std::move(l1), std::move(l2), std::move(out)}, std::move(meta));
}

FeedforwardNet build_relu_variant(const GmmSpec& spec, const ConstructionParams& params) {
  return build_class_subnetwork(spec, params, BuildMode::kRelu);
}

FeedforwardNet stack_networks(const std::vector<FeedforwardNet>& nets) {
  if (nets.empty()) throw Error(ErrorCode::kInvalidArgument, "no networks to stack");
  const auto& first = nets.front();
  const std::size_t depth = first.layers().size();
  for (const auto& net : nets) {
    if (net.input_dim() != first.input_dim() || net.layers().size() != depth) {
      throw Error(ErrorCode::kDimensionMismatch, "networks differ in input size or depth");
    }
    for (std::size_t l = 0; l < depth; ++l) {
      if (!(net.layers()[l].activation == first.layers()[l].activation)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "networks use different activations in layer " + std::to_string(l));
      }
    }
  }

  std::vector<Layer> layers;
  Eigen::Index prev_total = first.input_dim();
  for (std::size_t l = 0; l < depth; ++l) {
    Eigen::Index rows = 0;
    for (const auto& net : nets) rows += net.layers()[l].width();
    Layer layer{Matrix::Zero(rows, prev_total), Vector(rows), first.layers()[l].activation};
    Eigen::Index r = 0, c = 0;
    for (const auto& net : nets) {
      const auto& src = net.layers()[l];
      if (l == 0) layer.weights.middleRows(r, src.width()) = src.weights;
      else layer.weights.block(r, c, src.width(), src.weights.cols()) = src.weights;
      layer.bias.segment(r, src.width()) = src.bias;
      r += src.width();
      c += src.weights.cols();
    }
    prev_total = rows;
    layers.push_back(std::move(layer));
  }

  NetMetadata meta;
  meta.provenance = "stack(" + first.metadata().provenance + ")";
  for (std::size_t i = 0; i < nets.size(); ++i) {
    const auto& m = nets[i].metadata();
    if (!m.params_digest.empty()) {
      meta.params_digest += (meta.params_digest.empty() ? "" : ",") + m.params_digest;
    }
    for (const auto& note : m.notes) meta.notes.push_back("output " + std::to_string(i) + ": " + note);
  }
  return FeedforwardNet(first.input_dim(), std::move(layers), std::move(meta));
}

}  // namespace gmmdnn
