#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ccac::schema {

// Validator for the JSON Schema subset used by the wire protocol: type,
// properties, required, additionalProperties, items, minItems, maxItems,
// minLength, minimum, maximum, exclusiveMinimum, exclusiveMaximum, enum.
// Returns one message per violation, prefixed with a JSON pointer.
class Validator {
 public:
  explicit Validator(nlohmann::json schema) : schema_(std::move(schema)) {}

  std::vector<std::string> validate(const nlohmann::json& doc) const {
    std::vector<std::string> errors;
    check(schema_, doc, "", errors);
    return errors;
  }

  bool ok(const nlohmann::json& doc) const { return validate(doc).empty(); }

 private:
  static bool has_type(const nlohmann::json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    return false;
  }

  static void check(const nlohmann::json& s, const nlohmann::json& v, const std::string& path,
                    std::vector<std::string>& errors) {
    const std::string at = path.empty() ? "/" : path;
    if (auto t = s.find("type"); t != s.end()) {
      bool match = false;
      if (t->is_array()) {
        for (const auto& one : *t) match = match || has_type(v, one.get<std::string>());
      } else {
        match = has_type(v, t->get<std::string>());
      }
      if (!match) {
        errors.push_back(at + ": expected type " + t->dump());
        return;
      }
    }
    if (auto e = s.find("enum"); e != s.end()) {
      bool found = false;
      for (const auto& opt : *e) found = found || opt == v;
      if (!found) errors.push_back(at + ": value not in " + e->dump());
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (auto m = s.find("minimum"); m != s.end() && x < m->get<double>()) {
        errors.push_back(at + ": below minimum " + m->dump());
      }
      if (auto m = s.find("maximum"); m != s.end() && x > m->get<double>()) {
        errors.push_back(at + ": above maximum " + m->dump());
      }
      if (auto m = s.find("exclusiveMinimum"); m != s.end() && !(x > m->get<double>())) {
        errors.push_back(at + ": must exceed " + m->dump());
      }
      if (auto m = s.find("exclusiveMaximum"); m != s.end() && !(x < m->get<double>())) {
        errors.push_back(at + ": must be below " + m->dump());
      }
      if (v.is_number_float() && !std::isfinite(x)) errors.push_back(at + ": not finite");
    }
    if (v.is_string()) {
      if (auto m = s.find("minLength"); m != s.end() && v.get<std::string>().size() < m->get<std::size_t>()) {
        errors.push_back(at + ": shorter than " + m->dump());
      }
    }
    if (v.is_array()) {
      if (auto m = s.find("minItems"); m != s.end() && v.size() < m->get<std::size_t>()) {
        errors.push_back(at + ": fewer than " + m->dump() + " items");
      }
      if (auto m = s.find("maxItems"); m != s.end() && v.size() > m->get<std::size_t>()) {
        errors.push_back(at + ": more than " + m->dump() + " items");
      }
      if (auto items = s.find("items"); items != s.end()) {
        for (std::size_t i = 0; i < v.size(); ++i) check(*items, v[i], path + "/" + std::to_string(i), errors);
      }
    }
    if (v.is_object()) {
      if (auto req = s.find("required"); req != s.end()) {
        for (const auto& k : *req) {
          if (!v.contains(k.get<std::string>())) errors.push_back(at + ": missing '" + k.get<std::string>() + "'");
        }
      }
      const auto props = s.find("properties");
      const auto extra = s.find("additionalProperties");
      for (const auto& [k, child] : v.items()) {
        if (props != s.end() && props->contains(k)) {
          check((*props)[k], child, path + "/" + k, errors);
        } else if (extra != s.end()) {
          if (extra->is_boolean() && !extra->get<bool>()) {
            errors.push_back(at + ": unexpected property '" + k + "'");
          } else if (extra->is_object()) {
            check(*extra, child, path + "/" + k, errors);
          }
        }
      }
    }
  }

  nlohmann::json schema_;
};

}  // namespace ccac::schema
