#include "agetrait/model_json.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "agetrait/errors.hpp"
#include "agetrait/examples.hpp"

namespace agetrait {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown field '" + key + "' in " + where);
  }
}

double number(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

std::vector<double> vector_field(const nlohmann::json& j, const char* key, std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.empty()) throw ConfigError(std::string("field '") + key + "' must be a non-empty array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(std::string("field '") + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

nlohmann::json params_json(const Example1Params& p) {
  return {{"x0", p.x0}, {"d0", p.d0}, {"eta", p.eta}, {"sigma", p.sigma}, {"p", p.p}};
}

ModelSpec build_constant(const nlohmann::json& params, nlohmann::json& canonical) {
  reject_unknown(params, {"lower", "upper", "r", "b", "d", "U", "p", "sigma"}, "constant model params");
  const auto lower = vector_field(params, "lower", {0.0});
  const auto upper = vector_field(params, "upper", std::vector<double>(lower.size(), 1.0));
  if (lower.size() != upper.size()) throw ConfigError("lower and upper must have equal length");
  const double r = number(params, "r", 1.0), b = number(params, "b", 0.0), d = number(params, "d", 0.0);
  const double u = number(params, "U", 0.0), p = number(params, "p", 0.0), sigma = number(params, "sigma", 0.0);
  if (!(b >= 0.0 && d >= 0.0 && u >= 0.0)) throw ConfigError("b, d and U must be >= 0");
  if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("r must be finite and >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  ModelSpec spec;
  spec.name = "constant";
  spec.trait_dim = lower.size();
  try {
    spec.domain = TraitDomain::box(lower, upper);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  spec.birth = [b](TraitView, double) { return b; };
  spec.birth_bound = b;
  spec.death = [d](TraitView, double) { return d; };
  spec.death_bound = d;
  spec.allometric = [r](TraitView, double) { return r; };
  spec.allometric_bound = r;
  spec.allometric_floor = [r](double) { return r; };
  spec.allometric_primitive = AllometricPrimitive{
      [r](TraitView, double a) { return r * a; },
      [r](TraitView, double value) { return r > 0.0 ? value / r : kInfinity; }};
  set_focal_interaction(spec, [u](TraitView, double) { return u; }, u);
  spec.mutation_prob = [p](TraitView, double) { return p; };
  if (sigma > 0.0) {
    spec.mutation = std::make_shared<ConditionedGaussianKernel>(std::vector<double>(lower.size(), sigma * sigma));
  } else {
    spec.mutation = std::make_shared<PointMassZeroKernel>();
  }
  canonical = {{"lower", lower}, {"upper", upper}, {"r", r}, {"b", b}, {"d", d},
               {"U", u}, {"p", p}, {"sigma", sigma}};
  return spec;
}

}  // namespace

std::vector<std::string> registered_models() { return {"example1", "example2", "critical"}; }

LoadedModel model_from_json(const nlohmann::json& doc) {
  reject_unknown(doc, {"family", "params"}, "model document");
  if (!doc.contains("family") || !doc.at("family").is_string()) {
    throw ConfigError("model document needs a string field 'family'");
  }
  const std::string family = doc.at("family").get<std::string>();
  const nlohmann::json params = doc.value("params", nlohmann::json::object());
  LoadedModel out;
  nlohmann::json canonical;
  if (family == "example1") {
    const auto p = example1_params_from_json(params);
    out.spec = build_example1(p);
    canonical = params_json(p);
  } else if (family == "example2") {
    const auto p = example2_params_from_json(params);
    out.spec = build_example2(p);
    canonical = params_json(p);
    canonical["x1"] = p.x1;
    canonical["x2"] = p.x2;
  } else if (family == "critical") {
    reject_unknown(params, {"r"}, "critical model params");
    const double r = number(params, "r", 1.0);
    out.spec = build_critical(r);
    canonical = {{"r", r}};
  } else if (family == "constant") {
    out.spec = build_constant(params, canonical);
  } else {
    throw UnknownModelError("unknown model family '" + family + "'");
  }
  out.document = {{"family", family}, {"params", canonical}};
  return out;
}

LoadedModel resolve_model(const std::string& name_or_path) {
  for (const auto& name : registered_models()) {
    if (name == name_or_path) return model_from_json({{"family", name}});
  }
  std::error_code ec;
  if (!std::filesystem::is_regular_file(name_or_path, ec)) {
    throw UnknownModelError("unknown model '" + name_or_path + "': not a registered name or a readable file");
  }
  std::ifstream in(name_or_path);
  if (!in) throw UnknownModelError("cannot read model file '" + name_or_path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("model file '" + name_or_path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace agetrait
