#include "gmmdnn/core/gmm_io.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

namespace gmmdnn {
namespace {

using nlohmann::json;

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::kInvalidSpec, "expected an object", where);
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::kInvalidSpec, std::string("missing field '") + key + "'", where);
  }
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw Error(ErrorCode::kInvalidSpec, "expected a number", where);
  return v.get<double>();
}

Vector vector_of(const json& v, Eigen::Index n, const std::string& where) {
  if (!v.is_array()) throw Error(ErrorCode::kInvalidSpec, "expected an array", where);
  if (static_cast<Eigen::Index>(v.size()) != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()),
                where);
  }
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = number(v[static_cast<std::size_t>(i)], where + "/" + std::to_string(i));
  }
  return out;
}

}  // namespace

GmmSpec parse_spec(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, e.what(), "byte " + std::to_string(e.byte));
  }

  const json& jn = field(doc, "n", "");
  if (!jn.is_number_integer() || jn.get<long long>() < 1) {
    throw Error(ErrorCode::kInvalidSpec, "n must be a positive integer", "/n");
  }
  const auto n = static_cast<Eigen::Index>(jn.get<long long>());

  const json& jclasses = field(doc, "classes", "");
  if (!jclasses.is_array() || jclasses.empty()) {
    throw Error(ErrorCode::kInvalidSpec, "classes must be a non-empty array", "/classes");
  }

  std::vector<GaussianComponent> components;
  std::vector<double> weights;
  std::vector<ClassSpec> classes;
  for (std::size_t i = 0; i < jclasses.size(); ++i) {
    const std::string cw = "/classes/" + std::to_string(i);
    const json& jc = jclasses[i];
    ClassSpec cls;
    cls.prior = number(field(jc, "prior", cw), cw + "/prior");
    const json& jcomps = field(jc, "components", cw);
    if (!jcomps.is_array() || jcomps.empty()) {
      throw Error(ErrorCode::kInvalidSpec, "components must be a non-empty array",
                  cw + "/components");
    }
    for (std::size_t j = 0; j < jcomps.size(); ++j) {
      const std::string w = cw + "/components/" + std::to_string(j);
      const json& jg = jcomps[j];
      const double weight = number(field(jg, "weight", w), w + "/weight");
      Vector mean = vector_of(field(jg, "mean", w), n, w + "/mean");
      const json& jcov = field(jg, "covariance", w);
      if (!jcov.is_array() || static_cast<Eigen::Index>(jcov.size()) != n) {
        throw Error(ErrorCode::kDimensionMismatch, "covariance must have n rows",
                    w + "/covariance");
      }
      Matrix cov(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        cov.row(r) = vector_of(jcov[static_cast<std::size_t>(r)], n,
                               w + "/covariance/" + std::to_string(r))
                         .transpose();
      }
      try {
        components.push_back(GaussianComponent::factor(std::move(mean), std::move(cov)));
      } catch (const Error& e) {
        throw Error(e.code(), e.what(), w + "/covariance");
      }
      weights.push_back(weight);
      cls.components.push_back(components.size() - 1);
    }
    classes.push_back(std::move(cls));
  }
  return GmmSpec::create(std::move(components), std::move(weights), std::move(classes));
}

GmmSpec load_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open spec file", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_spec(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " in " + path.string(), e.where());
  }
}

std::string spec_to_json(const GmmSpec& spec) {
  json doc;
  doc["n"] = spec.dim();
  doc["classes"] = json::array();
  for (const auto& cls : spec.classes()) {
    json jc;
    jc["prior"] = cls.prior;
    jc["components"] = json::array();
    for (std::size_t j : cls.components) {
      const auto& g = spec.components()[j];
      json jg;
      jg["weight"] = spec.weights()[j];
      jg["mean"] = std::vector<double>(g.mean().data(), g.mean().data() + g.mean().size());
      json rows = json::array();
      for (Eigen::Index r = 0; r < g.dim(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(g.dim()));
        for (Eigen::Index c = 0; c < g.dim(); ++c) row[static_cast<std::size_t>(c)] = g.covariance()(r, c);
        rows.push_back(row);
      }
      jg["covariance"] = rows;
      jc["components"].push_back(jg);
    }
    doc["classes"].push_back(jc);
  }
  return doc.dump(2);
}

}  // namespace gmmdnn
