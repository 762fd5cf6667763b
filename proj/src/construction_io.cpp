#include "gmmdnn/core/construction.hpp"

#include "json.hpp"

#include <cstdio>

namespace gmmdnn {

std::string params_to_json(const ConstructionParams& p) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["class"] = p.cls;
  doc["n"] = p.n;
  doc["delta"] = p.delta;
  doc["q"] = p.q;
  doc["epsilon"] = p.epsilon;
  doc["J"] = p.J;
  doc["V"] = p.V;
  doc["tail_rule"] = std::string(tail_rule_name(p.rule));
  doc["log_inv_tstar_density"] = p.log_inv_tstar_density;
  doc["log_tstar"] = p.log_tstar;
  doc["tstar"] = p.tstar;
  doc["log_lambda"] = p.log_lambda;
  doc["lambda"] = p.lambda;
  doc["nu"] = p.nu;
  doc["delta_max"] = p.delta_max;

  const auto& a = p.activation;
  ordered_json act;
  act["kind"] = std::string(activation_name(a.first.tag));
  act["tau"] = a.tau;
  act["r"] = a.r;
  act["second_derivative"] = a.second_derivative;
  act["third_derivative_max"] = a.third_max;
  act["eta0"] = a.eta0;
  act["verified"] = a.verified;
  doc["activation"] = act;

  ordered_json comps = ordered_json::array();
  for (const auto& c : p.components) {
    ordered_json jc;
    jc["component"] = c.component;
    jc["log_beta"] = c.log_beta;
    jc["log_lambda_tilde"] = c.log_lambda_tilde;
    jc["lambda_tilde"] = c.lambda_tilde;
    jc["trivial"] = c.trivial;
    jc["R"] = c.R;
    jc["nu"] = c.nu;
    jc["a"] = c.a;
    jc["T"] = c.T;
    jc["Delta"] = c.Delta;
    jc["K"] = c.K;
    comps.push_back(jc);
  }
  doc["components"] = comps;
  doc["total_steps"] = p.total_steps();
  doc["warnings"] = p.warnings;
  return doc.dump(2);
}

std::string params_digest(const ConstructionParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : params_to_json(p)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gmmdnn
