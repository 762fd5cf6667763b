#include "gmmdnn/core/network.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace gmmdnn {
namespace {

struct TagName {
  ActivationTag tag;
  std::string_view name;
};

constexpr TagName kTagNames[] = {
    {ActivationTag::kSquare, "square"},       {ActivationTag::kNegExp, "negexp"},
    {ActivationTag::kSigmoid, "sigmoid"},     {ActivationTag::kTanh, "tanh"},
    {ActivationTag::kRelu, "relu"},           {ActivationTag::kIndicator, "indicator"},
    {ActivationTag::kCosine, "cosine"},       {ActivationTag::kIdentity, "identity"},
};

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string_view activation_name(ActivationTag tag) {
  for (const auto& t : kTagNames) {
    if (t.tag == tag) return t.name;
  }
  return "unknown";
}

std::optional<ActivationTag> parse_activation_tag(std::string_view name) {
  for (const auto& t : kTagNames) {
    if (t.name == name) return t.tag;
  }
  return std::nullopt;
}

void Activation::validate() const {
  if (!(input_scale > 0.0) || !std::isfinite(input_scale)) {
    throw Error(ErrorCode::kInvalidArgument, "activation input scale must be > 0");
  }
  if (tag == ActivationTag::kCosine && (!(cosine_scale > 0.0) || !std::isfinite(cosine_scale))) {
    throw Error(ErrorCode::kInvalidArgument, "cosine scale must be > 0");
  }
}

double Activation::operator()(double x) const {
  const double z = input_scale * x;
  switch (tag) {
    case ActivationTag::kSquare: return z * z;
    case ActivationTag::kNegExp: return std::exp(-z);
    case ActivationTag::kSigmoid: return sigmoid(z);
    case ActivationTag::kTanh: return std::tanh(z);
    case ActivationTag::kRelu: return z > 0.0 ? z : 0.0;
    case ActivationTag::kIndicator: return z >= 0.0 ? 1.0 : 0.0;
    case ActivationTag::kCosine: return std::cos(z / std::sqrt(cosine_scale));
    case ActivationTag::kIdentity: return z;
  }
  return z;
}

void Activation::apply(Eigen::Ref<Matrix> values) const {
  auto a = values.array();
  if (input_scale != 1.0) a *= input_scale;
  switch (tag) {
    case ActivationTag::kSquare: a = a.square(); break;
    case ActivationTag::kNegExp: a = (-a).exp(); break;
    // exp(-x) may overflow to +inf for very negative x; 1 / (1 + inf) is
    // exactly 0, which is the correctly rounded sigmoid there.
    case ActivationTag::kSigmoid: a = 1.0 / (1.0 + (-a).exp()); break;
    case ActivationTag::kTanh: a = a.tanh(); break;
    case ActivationTag::kRelu: a = a.max(0.0); break;
    case ActivationTag::kIndicator: a = (a >= 0.0).cast<double>(); break;
    case ActivationTag::kCosine: a = (a / std::sqrt(cosine_scale)).cos(); break;
    case ActivationTag::kIdentity: break;
  }
}

double eval_activation(const Activation& kind, double x) { return kind(x); }

FeedforwardNet::FeedforwardNet(Eigen::Index input_dim, std::vector<Layer> layers, NetMetadata meta)
    : input_dim_(input_dim), layers_(std::move(layers)), meta_(std::move(meta)) {
  if (input_dim_ < 1) throw Error(ErrorCode::kDimensionMismatch, "input dimension must be >= 1");
  if (layers_.empty()) throw Error(ErrorCode::kDimensionMismatch, "network needs a layer");
  Eigen::Index prev = input_dim_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const std::string where = "/layers/" + std::to_string(l);
    if (layer.weights.cols() != prev || layer.bias.size() != layer.weights.rows() ||
        layer.weights.rows() < 1) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "layer shape " + std::to_string(layer.weights.rows()) + "x" +
                      std::to_string(layer.weights.cols()) + " does not chain from width " +
                      std::to_string(prev),
                  where);
    }
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite layer parameters", where);
    }
    layer.activation.validate();
    prev = layer.weights.rows();
  }
}

std::vector<Eigen::Index> FeedforwardNet::hidden_widths() const {
  std::vector<Eigen::Index> w;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) w.push_back(layers_[l].width());
  return w;
}

Eigen::Index FeedforwardNet::node_count() const {
  Eigen::Index total = 0;
  for (auto w : hidden_widths()) total += w;
  return total;
}

Vector FeedforwardNet::eval(const Vector& x) const {
  require_dim(x.size(), input_dim_, "network input");
  Matrix v = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Matrix next = layer.weights * v;
    next.col(0) += layer.bias;
    layer.activation.apply(next);
    if (!next.allFinite()) {
      throw Error(ErrorCode::kNonFiniteIntermediate,
                  "non-finite value produced in layer " + std::to_string(l));
    }
    v = std::move(next);
  }
  return v.col(0);
}

Matrix FeedforwardNet::eval_batch(const Matrix& points) const {
  require_dim(points.cols(), input_dim_, "network batch input");
  // Rows go through in chunks so the widest hidden layer stays cache sized.
  Eigen::Index widest = 1;
  for (const auto& layer : layers_) widest = std::max(widest, layer.width());
  const Eigen::Index chunk = std::max<Eigen::Index>(1, (Eigen::Index{1} << 20) / widest);

  Matrix result(points.rows(), output_dim());
  for (Eigen::Index r0 = 0; r0 < points.rows(); r0 += chunk) {
    const Eigen::Index rows = std::min(chunk, points.rows() - r0);
    Matrix v = points.middleRows(r0, rows);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      Matrix next = v * layer.weights.transpose();
      next.rowwise() += layer.bias.transpose();
      layer.activation.apply(next);
      if (!next.allFinite()) {
        throw Error(ErrorCode::kNonFiniteIntermediate,
                    "non-finite value produced in layer " + std::to_string(l));
      }
      v = std::move(next);
    }
    result.middleRows(r0, rows) = v;
  }
  return result;
}

BatchFn FeedforwardNet::output_batch(Eigen::Index output) const {
  if (output < 0 || output >= output_dim()) {
    throw Error(ErrorCode::kInvalidArgument, "output index out of range");
  }
  auto self = std::make_shared<const FeedforwardNet>(*this);
  return [self, output](const Matrix& points, Vector& out) {
    out = self->eval_batch(points).col(output);
  };
}

Vector eval_net(const FeedforwardNet& net, const Vector& x) { return net.eval(x); }

NodeCounts count_nodes(const FeedforwardNet& net) {
  NodeCounts c;
  c.per_layer = net.hidden_widths();
  for (auto w : c.per_layer) c.total += w;
  return c;
}

}  // namespace gmmdnn
