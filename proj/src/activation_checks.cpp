#include "gmmdnn/core/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace gmmdnn {
namespace {

constexpr double kSecondStep = 1e-5;
// Third differences divide roundoff by h^3; 1e-3 keeps that term near 1e-7.
constexpr double kThirdStep = 1e-3;
constexpr double kCrossCheckRel = 1e-4;
constexpr std::size_t kLocalPoints = 2001;

double second_fd(const Activation& s, double x) {
  const double h = kSecondStep;
  return (s(x + h) - 2.0 * s(x) + s(x - h)) / (h * h);
}

double third_fd(const Activation& s, double x) {
  const double h = kThirdStep;
  return (s(x + 2 * h) - 2.0 * s(x + h) + 2.0 * s(x - h) - s(x - 2 * h)) / (2.0 * h * h * h);
}

bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

double grid_at(double lo, double hi, std::size_t i, std::size_t n) {
  if (n < 2) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

std::string at(double x) { return "x=" + format_double(x); }

}  // namespace

std::optional<double> analytic_derivative(const Activation& kind, int order, double x) {
  if (order < 1 || order > 3) return std::nullopt;
  const double c = kind.input_scale;
  const double z = c * x;
  double d = 0.0;
  switch (kind.tag) {
    case ActivationTag::kSigmoid: {
      const double s = Activation::of(ActivationTag::kSigmoid)(z);
      const double ds = s * (1.0 - s);
      if (order == 1) d = ds;
      else if (order == 2) d = ds * (1.0 - 2.0 * s);
      else d = ds * (1.0 - 6.0 * s + 6.0 * s * s);
      break;
    }
    case ActivationTag::kTanh: {
      const double t = std::tanh(z);
      const double dt = 1.0 - t * t;
      if (order == 1) d = dt;
      else if (order == 2) d = -2.0 * t * dt;
      else d = -2.0 * dt * (1.0 - 3.0 * t * t);
      break;
    }
    default:
      return std::nullopt;
  }
  return d * std::pow(c, order);
}

std::optional<double> decay_violation(const std::function<double(double)>& fn, double eta,
                                      const AssumptionGrid& grid) {
  for (std::size_t i = 0; i < grid.points; ++i) {
    const double x = grid_at(grid.decay_min, grid.decay_max, i, grid.points);
    const double v = fn(x);
    const double up = std::exp(eta * x);
    const double down = std::exp(-eta * x);
    const double slack = 1e-15;
    if (!std::isfinite(v) || std::abs(v) > up * (1.0 + 1e-9) + slack ||
        std::abs(v - 1.0) > down * (1.0 + 1e-9) + slack) {
      return x;
    }
  }
  return std::nullopt;
}

std::optional<double> decay_input_scale(const std::function<double(double)>& fn,
                                        const AssumptionGrid& grid) {
  for (int e = -8; e <= 16; ++e) {
    const double s = std::ldexp(1.0, e);
    if (!decay_violation([&](double x) { return fn(s * x); }, 1.0, grid)) return s;
  }
  return std::nullopt;
}

AssumptionReport check_assumptions(const Activation& kind, double tau, double r,
                                   const AssumptionGrid& grid, double eta) {
  if (kind.tag != ActivationTag::kSigmoid && kind.tag != ActivationTag::kTanh) {
    throw Error(ErrorCode::kInvalidArgument,
                "assumption checks need a smooth activation, got " +
                    std::string(activation_name(kind.tag)));
  }
  if (!(r > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kInvalidArgument, "need finite tau and r > 0");
  }
  kind.validate();

  AssumptionReport rep;
  rep.tau = tau;
  rep.r = r;
  rep.eta = eta;
  auto fail = [&rep](const std::string& msg) {
    if (rep.failure.empty()) rep.failure = msg;
  };

  // Curvature at tau and a bound on the third derivative around it.
  rep.second_derivative = *analytic_derivative(kind, 2, tau);
  rep.second_derivative_fd = second_fd(kind, tau);
  double m = 0.0;
  double m_fd = 0.0;
  std::vector<double> an(kLocalPoints), fd(kLocalPoints);
  for (std::size_t i = 0; i < kLocalPoints; ++i) {
    const double x = grid_at(tau - r, tau + r, i, kLocalPoints);
    an[i] = std::abs(*analytic_derivative(kind, 3, x));
    fd[i] = std::abs(third_fd(kind, x));
    m = std::max(m, an[i]);
    m_fd = std::max(m_fd, fd[i]);
  }
  // Relative to M: near a zero of the third derivative the stencil's
  // truncation error dominates any pointwise relative comparison.
  bool third_agrees = true;
  for (std::size_t i = 0; i < kLocalPoints; ++i) {
    if (std::abs(an[i] - fd[i]) > kCrossCheckRel * std::max(m, 1e-3)) third_agrees = false;
  }
  rep.third_derivative_max = m;
  rep.third_derivative_max_fd = m_fd;
  rep.curvature_ok = rep.second_derivative > 0.0 && rep.second_derivative_fd > 0.0;
  if (!rep.curvature_ok) {
    fail("curvature: second derivative at tau is not positive (" + at(tau) + ")");
  } else if (!close_rel(rep.second_derivative, rep.second_derivative_fd, kCrossCheckRel) ||
             !third_agrees) {
    rep.curvature_ok = false;
    fail("curvature: finite differences disagree with the analytic derivative (" + at(tau) + ")");
  }

  // Symmetric sum sigma(x + tau) + sigma(-x + tau) nondecreasing for x >= 0.
  rep.monotone_ok = true;
  double prev = kind(tau) * 2.0;
  for (std::size_t i = 1; i < grid.points; ++i) {
    const double x = grid_at(0.0, grid.monotone_max, i, grid.points);
    const double v = kind(x + tau) + kind(-x + tau);
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(v));
    if (v < prev - tol) {
      rep.monotone_ok = false;
      fail("monotonicity: symmetric sum decreases at " + at(x));
      break;
    }
    prev = v;
  }

  const auto bad = decay_violation([&kind](double x) { return kind(x); }, eta, grid);
  rep.decay_ok = !bad.has_value();
  if (bad) fail("decay: bound with eta=" + format_double(eta) + " fails at " + at(*bad));
  return rep;
}

void require_assumptions(const AssumptionReport& report, bool need_square, bool need_decay) {
  if (need_square && !report.curvature_ok) {
    throw Error(ErrorCode::kAssumptionViolated, report.failure, "curvature");
  }
  if (need_square && !report.monotone_ok) {
    throw Error(ErrorCode::kAssumptionViolated, report.failure, "monotonicity");
  }
  if (need_decay && !report.decay_ok) {
    throw Error(ErrorCode::kAssumptionViolated, report.failure, "decay");
  }
}

}  // namespace gmmdnn
