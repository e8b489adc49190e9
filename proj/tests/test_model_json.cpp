#include <fstream>

#include "doctest.h"

#include "agetrait/errors.hpp"
#include "agetrait/model_json.hpp"
#include "support.hpp"

using namespace agetrait;
using nlohmann::json;

TEST_CASE("registered models resolve by name") {
  for (const auto& name : registered_models()) {
    const LoadedModel m = resolve_model(name);
    CHECK(m.document.at("family") == name);
    CHECK_NOTHROW(require_complete(m.spec));
  }
  CHECK_THROWS_AS(resolve_model("example3"), UnknownModelError);
}

TEST_CASE("canonical documents round trip") {
  const std::vector<json> docs = {
      {{"family", "example1"}, {"params", {{"sigma", 0.8}}}},
      {{"family", "example2"}, {"params", {{"sigma", 0.2}, {"x1", 0.1}}}},
      {{"family", "critical"}, {"params", {{"r", 2.0}}}},
      {{"family", "constant"}, {"params", {{"lower", {0, 0}}, {"upper", {1, 2}}, {"b", 0.5}, {"p", 0.3}, {"sigma", 0.1}}}},
  };
  for (const auto& doc : docs) {
    const LoadedModel once = model_from_json(doc);
    const LoadedModel twice = model_from_json(json::parse(once.document.dump()));
    CHECK(twice.document == once.document);
    for (const auto& [key, value] : doc.at("params").items()) CHECK(once.document.at("params").at(key) == value);
  }
  CHECK(model_from_json(docs[3]).spec.trait_dim == 2);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(model_from_json({{"family", "logistic"}}), UnknownModelError);
  CHECK_THROWS_AS(model_from_json({{"params", json::object()}}), ConfigError);
  CHECK_THROWS_AS(model_from_json({{"family", "example1"}, {"extra", 1}}), ConfigError);
  CHECK_THROWS_AS(model_from_json({{"family", "example1"}, {"params", {{"x9", 1}}}}), ConfigError);
  CHECK_THROWS_AS(model_from_json({{"family", "constant"}, {"params", {{"b", -1}}}}), ConfigError);
  CHECK_THROWS_AS(model_from_json({{"family", "constant"}, {"params", {{"lower", {0}}, {"upper", {1, 2}}}}}), ConfigError);
}

TEST_CASE("models load from files") {
  const auto dir = testing::scratch_dir("model-json");
  {
    std::ofstream os(dir / "m.json");
    os << R"({"family": "critical", "params": {"r": 3}})";
  }
  CHECK(resolve_model((dir / "m.json").string()).document.at("params").at("r") == 3.0);
  {
    std::ofstream os(dir / "bad.json");
    os << "{not json";
  }
  CHECK_THROWS_AS(resolve_model((dir / "bad.json").string()), ConfigError);
  CHECK_THROWS_AS(resolve_model((dir / "missing.json").string()), UnknownModelError);
}
