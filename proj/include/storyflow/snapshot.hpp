#pragma once

#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "storyflow/interpreter.hpp"

namespace storyflow {

using json = nlohmann::json;

struct GlobalSnapshot {
  json document = json::object();
  std::vector<std::string> skipped;  // keys holding functions, sorted
};

namespace detail {

// NaN has no JSON spelling, so it is tagged as {"$nan":true}; user maps with a
// '$'-prefixed key are wrapped in {"$map":{...}} to keep tags unambiguous.
inline json encode_value(const Value& v, std::unordered_set<const void*>& active) {
  switch (v.type()) {
    case ValueType::Null: return nullptr;
    case ValueType::Bool: return v.as_bool();
    case ValueType::Number:
      if (std::isnan(v.as_number())) return json{{"$nan", true}};
      return v.as_number();
    case ValueType::Str: return v.as_string();
    case ValueType::List: {
      const void* key = v.as_list().get();
      if (!active.insert(key).second) throw Error("CyclicData", "list contains itself");
      json arr = json::array();
      for (const auto& item : *v.as_list()) {
        if (item.is_function()) {
          arr.push_back(nullptr);
        } else {
          arr.push_back(encode_value(item, active));
        }
      }
      active.erase(key);
      return arr;
    }
    case ValueType::Map: {
      const void* key = v.as_map().get();
      if (!active.insert(key).second) throw Error("CyclicData", "map contains itself");
      json obj = json::object();
      bool needs_wrap = false;
      for (const auto& [k, item] : *v.as_map()) {
        if (item.is_function()) continue;
        if (!k.empty() && k.front() == '$') needs_wrap = true;
        obj[k] = encode_value(item, active);
      }
      active.erase(key);
      if (needs_wrap) return json{{"$map", std::move(obj)}};
      return obj;
    }
    default: return nullptr;
  }
}

inline Value decode_value(const json& j, int depth) {
  if (depth > 512) throw Error("MalformedSnapshot", "snapshot nesting too deep");
  switch (j.type()) {
    case json::value_t::null: return {};
    case json::value_t::boolean: return j.get<bool>();
    case json::value_t::number_integer:
    case json::value_t::number_unsigned:
    case json::value_t::number_float: return j.get<double>();
    case json::value_t::string: return j.get<std::string>();
    case json::value_t::array: {
      List items;
      for (const auto& item : j) items.push_back(decode_value(item, depth + 1));
      return Value::list(std::move(items));
    }
    case json::value_t::object: {
      if (j.size() == 1 && j.contains("$nan")) return std::nan("");
      const json* body = &j;
      if (j.size() == 1 && j.contains("$map")) {
        body = &j.at("$map");
        if (!body->is_object()) throw Error("MalformedSnapshot", "$map tag must wrap an object");
      }
      Map entries;
      for (auto it = body->begin(); it != body->end(); ++it) {
        entries[it.key()] = decode_value(it.value(), depth + 1);
      }
      return Value::map(std::move(entries));
    }
    default: throw Error("MalformedSnapshot", "unsupported node in snapshot");
  }
}

}  // namespace detail

/// Sorted-key document of every non-function Global entry. Function-valued
/// top-level keys are reported in `skipped`; functions nested in containers are
/// dropped (maps) or written as null (lists).
inline GlobalSnapshot snapshot_global(const GlobalSpace& globals) {
  GlobalSnapshot snap;
  std::unordered_set<const void*> active;
  active.insert(globals.handle().get());
  for (const auto& [key, v] : globals.entries()) {
    if (v.is_function()) {
      snap.skipped.push_back(key);
      continue;
    }
    snap.document[key] = detail::encode_value(v, active);
  }
  return snap;
}

// Invalid UTF-8 in script strings is replaced rather than aborting the dump.
inline std::string snapshot_text(const GlobalSnapshot& snap) {
  return snap.document.dump(-1, ' ', false, json::error_handler_t::replace);
}

inline GlobalSpace restore_global(const json& doc) {
  if (!doc.is_object()) throw Error("MalformedSnapshot", "snapshot root must be an object");
  GlobalSpace g;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    g.set(it.key(), detail::decode_value(it.value(), 0));
  }
  return g;
}

inline GlobalSpace restore_global(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("MalformedSnapshot", std::string("unreadable snapshot: ") + e.what());
  }
  return restore_global(doc);
}

inline GlobalSpace restore_global(const std::string& text) {
  return restore_global(std::string_view(text));
}
inline GlobalSpace restore_global(const char* text) { return restore_global(std::string_view(text)); }

}  // namespace storyflow
