#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace m2trec {

// Checks an instance against a JSON Schema subset: type, enum, properties,
// required, additionalProperties, items, minItems, minLength, minimum,
// maximum, exclusiveMinimum, exclusiveMaximum. Returns one "path: problem"
// message per violation; empty when the instance conforms.
std::vector<std::string> validate_json(const nlohmann::json& instance, const nlohmann::json& schema);

}  // namespace m2trec
