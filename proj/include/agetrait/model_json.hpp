#pragma once

// JSON model documents. Rate functions cannot travel through JSON, so a
// document names a parameterized family and supplies its parameters:
//
//   {"family": "example1", "params": {"x0": 4, "d0": 0.25, "eta": 1.7, "sigma": 1, "p": 1}}
//   {"family": "example2", "params": {..., "x1": 0.05, "x2": 3.95}}
//   {"family": "critical", "params": {"r": 1}}
//   {"family": "constant", "params": {"lower": [0], "upper": [1], "r": 1, "b": 0,
//                                     "d": 0, "U": 0, "p": 0, "sigma": 0}}
//
// Unknown fields are rejected everywhere.

#include <string>
#include <vector>

#include "json.hpp"

#include "agetrait/model.hpp"

namespace agetrait {

struct LoadedModel {
  ModelSpec spec;
  nlohmann::json document;  // canonical form, every parameter filled in
};

LoadedModel model_from_json(const nlohmann::json& doc);

// A registered name ("example1", "example2", "critical") or a path to a JSON
// document. Anything else raises UnknownModelError.
LoadedModel resolve_model(const std::string& name_or_path);

std::vector<std::string> registered_models();

}  // namespace agetrait
