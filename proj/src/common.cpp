#include "gmmdnn/core/common.hpp"
#include "gmmdnn/core/montecarlo.hpp"
#include "gmmdnn/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

namespace gmmdnn {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kNonFiniteIntermediate: return "NonFiniteIntermediate";
    case ErrorCode::kAssumptionViolated: return "AssumptionViolated";
    case ErrorCode::kAssumptionNotVerified: return "AssumptionNotVerified";
    case ErrorCode::kDeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorCode::kQOutOfRange: return "QOutOfRange";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::string where)
    : std::runtime_error(where.empty() ? message : message + " (at " + where + ")"),
      code_(code),
      where_(std::move(where)) {}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t block) {
  const std::uint64_t s = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ block);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  engine_.seed(seq);
}

Matrix Sampler::draw_block(Rng& rng, Eigen::Index rows) const {
  Matrix out(rows, dim);
  for (Eigen::Index r = 0; r < rows; ++r) draw(rng, out.row(r));
  return out;
}

BatchFn batch_from_scalar(std::function<double(const Vector&)> fn) {
  return [fn = std::move(fn)](const Matrix& points, Vector& out) {
    out.resize(points.rows());
    Vector x(points.cols());
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
      x = points.row(r).transpose();
      out[r] = fn(x);
    }
  };
}

void Moments::merge(const Moments& o) {
  if (o.n == 0) return;
  if (n == 0) {
    *this = o;
    return;
  }
  const double total = static_cast<double>(n + o.n);
  const double d = o.mean - mean;
  mean += d * static_cast<double>(o.n) / total;
  m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
  n += o.n;
}

void PairMoments::merge(const PairMoments& o) {
  if (o.n == 0) return;
  if (n == 0) {
    *this = o;
    return;
  }
  const double a = static_cast<double>(n);
  const double b = static_cast<double>(o.n);
  const double total = a + b;
  const double dx = o.mean_x - mean_x;
  const double dy = o.mean_y - mean_y;
  mean_x += dx * b / total;
  mean_y += dy * b / total;
  m2x += o.m2x + dx * dx * a * b / total;
  m2y += o.m2y + dy * dy * a * b / total;
  cxy += o.cxy + dx * dy * a * b / total;
  n += o.n;
}

double PairMoments::ratio_std_error() const {
  if (n < 2 || mean_y == 0.0) return 0.0;
  const double nn = static_cast<double>(n);
  const double r = mean_x / mean_y;
  const double var = (m2x + r * r * m2y - 2.0 * r * cxy) / (nn - 1.0);
  return std::sqrt(std::max(var, 0.0) / nn) / std::abs(mean_y);
}

Estimate proportion(std::size_t hits, std::size_t count) {
  Estimate e;
  e.count = count;
  if (count == 0) return e;
  const double p = static_cast<double>(hits) / static_cast<double>(count);
  e.mean = p;
  e.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(count));
  return e;
}

std::size_t worker_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

Estimate estimate_mean(const BatchFn& fn, const Sampler& sampler, std::size_t count,
                       std::uint64_t seed, std::uint64_t stream) {
  auto parts = run_blocks<Moments>(count, seed, stream,
                                   [&](Rng& rng, std::size_t begin, std::size_t end) {
                                     const Matrix pts = sampler.draw_block(
                                         rng, static_cast<Eigen::Index>(end - begin));
                                     Vector v;
                                     fn(pts, v);
                                     Moments m;
                                     for (Eigen::Index i = 0; i < v.size(); ++i) m.add(v[i]);
                                     return m;
                                   });
  Moments total;
  for (const auto& p : parts) total.merge(p);
  return to_estimate(total);
}

}  // namespace gmmdnn
