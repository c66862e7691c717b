#include "m2trec/json_schema.hpp"

#include <algorithm>

namespace m2trec {

namespace {

bool has_type(const nlohmann::json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  return false;
}

void check(const nlohmann::json& v, const nlohmann::json& schema, const std::string& path,
           std::vector<std::string>& errors) {
  const auto at = path.empty() ? std::string("$") : path;
  if (const auto it = schema.find("type"); it != schema.end()) {
    const auto types = it->is_array() ? it->get<std::vector<std::string>>()
                                      : std::vector<std::string>{it->get<std::string>()};
    if (std::none_of(types.begin(), types.end(), [&](const std::string& t) { return has_type(v, t); })) {
      errors.push_back(at + ": expected " + it->dump());
      return;
    }
  }
  if (const auto it = schema.find("enum"); it != schema.end()) {
    if (std::find(it->begin(), it->end(), v) == it->end()) {
      errors.push_back(at + ": value " + v.dump() + " not in " + it->dump());
    }
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (const auto it = schema.find("minimum"); it != schema.end() && x < it->get<double>()) {
      errors.push_back(at + ": must be >= " + it->dump());
    }
    if (const auto it = schema.find("maximum"); it != schema.end() && x > it->get<double>()) {
      errors.push_back(at + ": must be <= " + it->dump());
    }
    if (const auto it = schema.find("exclusiveMinimum"); it != schema.end() && x <= it->get<double>()) {
      errors.push_back(at + ": must be > " + it->dump());
    }
    if (const auto it = schema.find("exclusiveMaximum"); it != schema.end() && x >= it->get<double>()) {
      errors.push_back(at + ": must be < " + it->dump());
    }
  }
  if (v.is_string()) {
    if (const auto it = schema.find("minLength"); it != schema.end() &&
                                                  v.get<std::string>().size() < it->get<std::size_t>()) {
      errors.push_back(at + ": shorter than " + it->dump() + " characters");
    }
  }
  if (v.is_array()) {
    if (const auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>()) {
      errors.push_back(at + ": needs at least " + it->dump() + " items");
    }
    if (const auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], *it, at + "[" + std::to_string(i) + "]", errors);
    }
  }
  if (v.is_object()) {
    const auto props = schema.find("properties");
    if (const auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it) {
        if (!v.contains(key.get<std::string>())) errors.push_back(at + ": missing required key " + key.dump());
      }
    }
    for (const auto& [key, value] : v.items()) {
      const std::string child = at + "." + key;
      if (props != schema.end() && props->contains(key)) {
        check(value, (*props)[key], child, errors);
        continue;
      }
      const auto extra = schema.find("additionalProperties");
      if (extra == schema.end()) continue;
      if (extra->is_boolean()) {
        if (!extra->get<bool>()) errors.push_back(at + ": unknown key \"" + key + "\"");
      } else {
        check(value, *extra, child, errors);
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate_json(const nlohmann::json& instance, const nlohmann::json& schema) {
  std::vector<std::string> errors;
  check(instance, schema, "", errors);
  return errors;
}

}  // namespace m2trec
