#pragma once

#include <initializer_list>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "strongnoise/errors.hpp"
#include "strongnoise/models.hpp"

namespace strongnoise {

using Json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
}

inline double number_at(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing key '" + key + "'");
  if (!j.at(key).is_number()) throw ValidationError(where + ": key '" + std::string(key) + "' must be a number");
  return j.at(key).get<double>();
}

inline double number_or(const Json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return number_at(j, key, where);
}

} // namespace detail

/// Snapshot of the model parameters. Custom coefficient functions are not
/// serializable; only their family name and strengths are recorded.
inline Json model_to_json(const SdeModel& m) {
  Json j;
  j["family"] = std::string(family_name(m.family()));
  switch (m.family()) {
  case Family::Linear: j["b"] = m.params_as<LinearParams>().b; break;
  case Family::PowerLaw: {
    const auto& p = m.params_as<PowerLawParams>();
    j["b"] = p.b;
    j["q"] = p.q;
    j["n"] = p.n;
    j["k"] = p.k;
    break;
  }
  case Family::Homodyne: j["b"] = m.params_as<HomodyneParams>().b; break;
  case Family::ThermalQND: j["p"] = m.params_as<ThermalQndParams>().p; break;
  case Family::DoubleWell:
    j["nu"] = m.lambda();
    j["depth"] = m.params_as<DoubleWellParams>().depth;
    return j;
  default: break;
  }
  j["lambda"] = m.lambda();
  j["epsilon"] = m.epsilon();
  return j;
}

/// Strict parse: unknown keys and missing parameters are validation errors.
inline SdeModel model_from_json(const Json& j) {
  const std::string where = "model";
  if (!j.is_object() || !j.contains("family") || !j.at("family").is_string())
    throw ValidationError("model: expected an object with a string 'family'");
  const std::string fam = j.at("family").get<std::string>();
  switch (family_from_name(fam)) {
  case Family::Linear:
    detail::reject_unknown_keys(j, {"family", "b", "lambda", "epsilon"}, where);
    return SdeModel::linear(detail::number_at(j, "b", where), detail::number_at(j, "lambda", where),
                            detail::number_at(j, "epsilon", where));
  case Family::PowerLaw:
    detail::reject_unknown_keys(j, {"family", "b", "q", "n", "k", "lambda", "epsilon"}, where);
    return SdeModel::power_law({detail::number_at(j, "b", where), detail::number_at(j, "q", where),
                                detail::number_at(j, "n", where), detail::number_at(j, "k", where)},
                               detail::number_at(j, "lambda", where), detail::number_at(j, "epsilon", where));
  case Family::Homodyne:
    detail::reject_unknown_keys(j, {"family", "b", "lambda", "epsilon"}, where);
    return SdeModel::homodyne(detail::number_or(j, "b", 1.0, where), detail::number_at(j, "lambda", where),
                              detail::number_at(j, "epsilon", where));
  case Family::ThermalQND:
    detail::reject_unknown_keys(j, {"family", "p", "lambda", "epsilon"}, where);
    return SdeModel::thermal_qnd(detail::number_at(j, "p", where), detail::number_at(j, "lambda", where),
                                 detail::number_at(j, "epsilon", where));
  case Family::RabiQND:
    detail::reject_unknown_keys(j, {"family", "lambda", "epsilon"}, where);
    return SdeModel::rabi_qnd(detail::number_at(j, "lambda", where), detail::number_at(j, "epsilon", where));
  case Family::DoubleWell:
    detail::reject_unknown_keys(j, {"family", "nu", "depth"}, where);
    return SdeModel::double_well(detail::number_at(j, "nu", where), detail::number_or(j, "depth", 0.25, where));
  case Family::Custom: break;
  }
  throw ValidationError("model: custom coefficient models cannot be loaded from a configuration file");
}

inline Json scaling_to_json(const ScalingFamily& f) {
  Json j = model_to_json(f.base());
  j.erase("lambda");
  j.erase("epsilon");
  return Json{{"model", j}, {"rule", f.rule() == ScalingRule::PowerLawJ ? "J" : "Jhat"}, {"value", f.invariant()}};
}

/// {"model": {...without lambda/epsilon...}, "rule": "J" | "Jhat", "value": x}
inline ScalingFamily scaling_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"model", "rule", "value"}, "scaling");
  if (!j.contains("model")) throw ValidationError("scaling: missing key 'model'");
  Json mj = j.at("model");
  if (mj.is_object()) {
    if (mj.contains("lambda") || mj.contains("epsilon"))
      throw ValidationError("scaling: lambda and epsilon are set by the scaling rule");
    mj["lambda"] = 1.0;
    mj["epsilon"] = 0.0;
  }
  const SdeModel base = model_from_json(mj);
  const std::string rule = j.value("rule", std::string("J"));
  if (rule != "J" && rule != "Jhat") throw ValidationError("scaling: rule must be 'J' or 'Jhat'");
  return ScalingFamily(base, rule == "J" ? ScalingRule::PowerLawJ : ScalingRule::PartitionJhat,
                       detail::number_at(j, "value", "scaling"));
}

} // namespace strongnoise
