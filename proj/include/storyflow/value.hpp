#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "storyflow/error.hpp"

namespace storyflow {

class Value;
struct Closure;
struct HostFn;

using List = std::vector<Value>;
using Map = std::map<std::string, Value>;
using ListPtr = std::shared_ptr<List>;
using MapPtr = std::shared_ptr<Map>;
using ClosurePtr = std::shared_ptr<Closure>;
using HostFnPtr = std::shared_ptr<const HostFn>;

enum class ValueType { Null, Bool, Number, Str, List, Map, Closure, HostFn };

inline const char* to_string(ValueType t) {
  switch (t) {
    case ValueType::Null: return "null";
    case ValueType::Bool: return "bool";
    case ValueType::Number: return "number";
    case ValueType::Str: return "string";
    case ValueType::List: return "list";
    case ValueType::Map: return "map";
    case ValueType::Closure: return "function";
    case ValueType::HostFn: return "builtin";
  }
  return "?";
}

/// Runtime value of the Action Language. Lists and maps are shared and
/// mutable in place; copying a Value copies the reference.
class Value {
public:
  using Storage =
      std::variant<std::monostate, bool, double, std::string, ListPtr, MapPtr, ClosurePtr, HostFnPtr>;

  Value() = default;
  Value(std::nullptr_t) {}
  Value(bool b) : v_(b) {}
  Value(double d) : v_(normalize(d)) {}
  Value(int i) : v_(static_cast<double>(i)) {}
  Value(std::int64_t i) : v_(static_cast<double>(i)) {}
  Value(std::size_t i) : v_(static_cast<double>(i)) {}
  Value(std::string s) : v_(std::move(s)) {}
  Value(const char* s) : v_(std::string(s)) {}
  Value(ListPtr l) : v_(std::move(l)) {}
  Value(MapPtr m) : v_(std::move(m)) {}
  Value(ClosurePtr c) : v_(std::move(c)) {}
  Value(HostFnPtr h) : v_(std::move(h)) {}

  static Value list(List items = {}) { return Value(std::make_shared<List>(std::move(items))); }
  static Value map(Map entries = {}) { return Value(std::make_shared<Map>(std::move(entries))); }

  ValueType type() const noexcept { return static_cast<ValueType>(v_.index()); }
  bool is_null() const noexcept { return type() == ValueType::Null; }
  bool is_bool() const noexcept { return type() == ValueType::Bool; }
  bool is_number() const noexcept { return type() == ValueType::Number; }
  bool is_string() const noexcept { return type() == ValueType::Str; }
  bool is_list() const noexcept { return type() == ValueType::List; }
  bool is_map() const noexcept { return type() == ValueType::Map; }
  bool is_function() const noexcept {
    return type() == ValueType::Closure || type() == ValueType::HostFn;
  }

  bool as_bool() const { return std::get<bool>(v_); }
  double as_number() const { return std::get<double>(v_); }
  const std::string& as_string() const { return std::get<std::string>(v_); }
  const ListPtr& as_list() const { return std::get<ListPtr>(v_); }
  const MapPtr& as_map() const { return std::get<MapPtr>(v_); }
  const ClosurePtr& as_closure() const { return std::get<ClosurePtr>(v_); }
  const HostFnPtr& as_host() const { return std::get<HostFnPtr>(v_); }

  const Storage& storage() const noexcept { return v_; }

  /// Numbers are finite or NaN; infinities collapse to NaN.
  static double normalize(double d) { return std::isfinite(d) ? d : std::nan(""); }

private:
  Storage v_;
};

/// Arguments handed to a host function, plus the call site for error positions.
struct HostCall {
  std::span<const Value> args;
  SourcePos pos;

  const Value& arg(std::size_t i) const {
    static const Value null_value;
    return i < args.size() ? args[i] : null_value;
  }
};

struct HostFn {
  std::string name;
  std::size_t min_arity = 0;
  std::size_t max_arity = 0;
  std::function<Value(const HostCall&)> fn;
};

// ---------------------------------------------------------------------------
// truthiness, equality, formatting
// ---------------------------------------------------------------------------

inline bool truthy(const Value& v) {
  switch (v.type()) {
    case ValueType::Null: return false;
    case ValueType::Bool: return v.as_bool();
    case ValueType::Number: {
      double d = v.as_number();
      return !(d == 0.0 || std::isnan(d));
    }
    case ValueType::Str: return !v.as_string().empty();
    default: return true;
  }
}

namespace detail {

inline bool values_equal(const Value& a, const Value& b, int depth) {
  if (depth > 512) {
    throw ScriptError(ScriptPhase::Runtime, "structure too deep to compare", {});
  }
  if (a.type() != b.type()) return false;
  switch (a.type()) {
    case ValueType::Null: return true;
    case ValueType::Bool: return a.as_bool() == b.as_bool();
    case ValueType::Number: return a.as_number() == b.as_number();
    case ValueType::Str: return a.as_string() == b.as_string();
    case ValueType::List: {
      const auto& x = *a.as_list();
      const auto& y = *b.as_list();
      if (&x == &y) return true;
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!values_equal(x[i], y[i], depth + 1)) return false;
      }
      return true;
    }
    case ValueType::Map: {
      const auto& x = *a.as_map();
      const auto& y = *b.as_map();
      if (&x == &y) return true;
      if (x.size() != y.size()) return false;
      for (auto ix = x.begin(), iy = y.begin(); ix != x.end(); ++ix, ++iy) {
        if (ix->first != iy->first || !values_equal(ix->second, iy->second, depth + 1)) {
          return false;
        }
      }
      return true;
    }
    case ValueType::Closure: return a.as_closure() == b.as_closure();
    case ValueType::HostFn: return a.as_host() == b.as_host();
  }
  return false;
}

inline bool is_identifier_like(const std::string& s);

}  // namespace detail

/// Same-type value equality: no cross-type coercion, NaN != NaN, lists and maps
/// compare structurally, functions by identity.
inline bool values_equal(const Value& a, const Value& b) { return detail::values_equal(a, b, 0); }

inline std::string format_number(double d) {
  if (std::isnan(d)) return "NaN";
  char buf[400];
  std::to_chars_result r{};
  if (d == std::floor(d)) {
    if (d == 0.0) return "0";
    r = std::to_chars(buf, buf + sizeof buf, d, std::chars_format::fixed, 0);
  } else {
    r = std::to_chars(buf, buf + sizeof buf, d);
  }
  return std::string(buf, r.ptr);
}

inline std::string quote_string(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\'': out += "\\'"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '\'';
  return out;
}

namespace detail {

inline bool is_keyword(const std::string& s) {
  static const std::unordered_set<std::string> kw = {"var",   "function", "return", "if",
                                                      "else",  "while",    "true",   "false",
                                                      "null",  "Global"};
  return kw.count(s) > 0;
}

inline bool is_identifier_like(const std::string& s) {
  if (s.empty()) return false;
  auto head = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  if (!head(s.front())) return false;
  for (char c : s) {
    if (!head(c) && !(c >= '0' && c <= '9')) return false;
  }
  return !is_keyword(s);
}

inline void render(const Value& v, std::string& out, bool nested,
                   std::unordered_set<const void*>& active) {
  switch (v.type()) {
    case ValueType::Null: out += "null"; return;
    case ValueType::Bool: out += v.as_bool() ? "true" : "false"; return;
    case ValueType::Number: out += format_number(v.as_number()); return;
    case ValueType::Str: out += nested ? quote_string(v.as_string()) : v.as_string(); return;
    case ValueType::List: {
      const void* key = v.as_list().get();
      if (!active.insert(key).second) {
        out += "[...]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& item : *v.as_list()) {
        if (!first) out += ", ";
        first = false;
        render(item, out, true, active);
      }
      out += ']';
      active.erase(key);
      return;
    }
    case ValueType::Map: {
      const void* key = v.as_map().get();
      if (!active.insert(key).second) {
        out += "{...}";
        return;
      }
      out += '{';
      bool first = true;
      for (const auto& [k, item] : *v.as_map()) {
        if (!first) out += ", ";
        first = false;
        out += is_identifier_like(k) ? k : quote_string(k);
        out += ": ";
        render(item, out, true, active);
      }
      out += '}';
      active.erase(key);
      return;
    }
    case ValueType::Closure: out += "[function]"; return;
    case ValueType::HostFn: out += "[builtin " + v.as_host()->name + "]"; return;
  }
}

}  // namespace detail

/// str(): integral numbers without fraction, other numbers shortest round-trip,
/// strings raw at top level and quoted inside containers, maps in key order.
inline std::string to_display(const Value& v) {
  std::string out;
  std::unordered_set<const void*> active;
  detail::render(v, out, false, active);
  return out;
}

}  // namespace storyflow
