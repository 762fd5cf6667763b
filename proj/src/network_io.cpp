#include "gmmdnn/core/network.hpp"

#include "json.hpp"

#include <sstream>

namespace gmmdnn {
namespace {

using nlohmann::json;

constexpr std::string_view kFormat = "gmmdnn-network";
constexpr int kVersion = 1;

std::string quoted(const std::string& s) { return json(s).dump(); }

void write_row(std::ostringstream& os, const double* data, Eigen::Index n, Eigen::Index stride) {
  os << '[';
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) os << ',';
    os << format_double(data[i * stride]);
  }
  os << ']';
}

[[noreturn]] void parse_fail(const std::string& msg, const std::string& where) {
  throw Error(ErrorCode::kParseError, msg, where);
}

const json& need(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) parse_fail("expected an object", where);
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(std::string("missing field '") + key + "'", where);
  return *it;
}

double need_number(const json& v, const std::string& where) {
  if (!v.is_number()) parse_fail("expected a number", where);
  return v.get<double>();
}

}  // namespace

std::string serialize_net(const FeedforwardNet& net) {
  std::ostringstream os;
  os << "{\n  \"format\": " << quoted(std::string(kFormat)) << ",\n  \"version\": " << kVersion
     << ",\n  \"input_dim\": " << net.input_dim() << ",\n  \"metadata\": {\n    \"provenance\": "
     << quoted(net.metadata().provenance)
     << ",\n    \"params_digest\": " << quoted(net.metadata().params_digest)
     << ",\n    \"node_counts\": [";
  const auto widths = net.hidden_widths();
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  os << "],\n    \"total_nodes\": " << net.node_count() << ",\n    \"notes\": [";
  for (std::size_t i = 0; i < net.metadata().notes.size(); ++i) {
    os << (i ? "," : "") << quoted(net.metadata().notes[i]);
  }
  os << "]\n  },\n  \"layers\": [";
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    os << (l ? "," : "") << "\n    {\"activation\": {\"kind\": "
       << quoted(std::string(activation_name(layer.activation.tag)))
       << ", \"input_scale\": " << format_double(layer.activation.input_scale);
    if (layer.activation.tag == ActivationTag::kCosine) {
      os << ", \"scale\": " << format_double(layer.activation.cosine_scale);
    }
    os << "},\n     \"bias\": ";
    write_row(os, layer.bias.data(), layer.bias.size(), 1);
    os << ",\n     \"weights\": [";
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      if (r) os << ',';
      os << "\n       ";
      // Column-major storage: row r is strided by the row count.
      write_row(os, layer.weights.data() + r, layer.weights.cols(), layer.weights.rows());
    }
    os << "]}";
  }
  os << "\n  ]\n}\n";
  return os.str();
}

FeedforwardNet deserialize_net(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    parse_fail(e.what(), "byte " + std::to_string(e.byte));
  }
  const json& fmt = need(doc, "format", "");
  if (!fmt.is_string() || fmt.get<std::string>() != kFormat) {
    parse_fail("unexpected format tag", "/format");
  }
  const json& ver = need(doc, "version", "");
  if (!ver.is_number_integer() || ver.get<int>() != kVersion) {
    parse_fail("unsupported version", "/version");
  }
  const json& jin = need(doc, "input_dim", "");
  if (!jin.is_number_integer() || jin.get<long long>() < 1) {
    parse_fail("input_dim must be a positive integer", "/input_dim");
  }

  NetMetadata meta;
  if (auto it = doc.find("metadata"); it != doc.end() && it->is_object()) {
    meta.provenance = it->value("provenance", "");
    meta.params_digest = it->value("params_digest", "");
    if (auto notes = it->find("notes"); notes != it->end() && notes->is_array()) {
      for (const auto& n : *notes) {
        if (n.is_string()) meta.notes.push_back(n.get<std::string>());
      }
    }
  }

  const json& jlayers = need(doc, "layers", "");
  if (!jlayers.is_array() || jlayers.empty()) parse_fail("layers must be a non-empty array", "/layers");
  std::vector<Layer> layers;
  auto prev = static_cast<Eigen::Index>(jin.get<long long>());
  for (std::size_t l = 0; l < jlayers.size(); ++l) {
    const std::string w = "/layers/" + std::to_string(l);
    const json& jl = jlayers[l];
    Layer layer;
    const json& ja = need(jl, "activation", w);
    const json& kind = need(ja, "kind", w + "/activation");
    if (!kind.is_string()) parse_fail("activation kind must be a string", w + "/activation/kind");
    auto tag = parse_activation_tag(kind.get<std::string>());
    if (!tag) parse_fail("unknown activation tag '" + kind.get<std::string>() + "'", w + "/activation/kind");
    layer.activation.tag = *tag;
    if (auto it = ja.find("input_scale"); it != ja.end()) {
      layer.activation.input_scale = need_number(*it, w + "/activation/input_scale");
    }
    if (*tag == ActivationTag::kCosine) {
      layer.activation.cosine_scale = need_number(need(ja, "scale", w + "/activation"),
                                                  w + "/activation/scale");
    }

    const json& jb = need(jl, "bias", w);
    if (!jb.is_array() || jb.empty()) parse_fail("bias must be a non-empty array", w + "/bias");
    const auto rows = static_cast<Eigen::Index>(jb.size());
    layer.bias.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      layer.bias[i] = need_number(jb[static_cast<std::size_t>(i)], w + "/bias/" + std::to_string(i));
    }
    const json& jw = need(jl, "weights", w);
    if (!jw.is_array() || static_cast<Eigen::Index>(jw.size()) != rows) {
      parse_fail("weights must have one row per bias entry", w + "/weights");
    }
    layer.weights.resize(rows, prev);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::string rw = w + "/weights/" + std::to_string(r);
      const json& jr = jw[static_cast<std::size_t>(r)];
      if (!jr.is_array() || static_cast<Eigen::Index>(jr.size()) != prev) {
        parse_fail("weight row must have " + std::to_string(prev) + " entries", rw);
      }
      for (Eigen::Index c = 0; c < prev; ++c) {
        layer.weights(r, c) = need_number(jr[static_cast<std::size_t>(c)], rw + "/" + std::to_string(c));
      }
    }
    prev = rows;
    layers.push_back(std::move(layer));
  }
  try {
    return FeedforwardNet(static_cast<Eigen::Index>(jin.get<long long>()), std::move(layers),
                          std::move(meta));
  } catch (const Error& e) {
    throw Error(ErrorCode::kParseError, e.what(), e.where());
  }
}

}  // namespace gmmdnn
