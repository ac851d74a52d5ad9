#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "storyflow/ast.hpp"
#include "storyflow/parser.hpp"
#include "storyflow/value.hpp"

namespace storyflow {

/// The shared, string-keyed data space visible to every script. Reading an
/// absent key yields Null.
class GlobalSpace {
public:
  GlobalSpace() : entries_(std::make_shared<Map>()) {}

  Value get(const std::string& key) const {
    auto it = entries_->find(key);
    return it == entries_->end() ? Value{} : it->second;
  }
  void set(const std::string& key, Value v) { (*entries_)[key] = std::move(v); }
  void erase(const std::string& key) { entries_->erase(key); }
  bool contains(const std::string& key) const { return entries_->count(key) > 0; }
  std::size_t size() const { return entries_->size(); }

  const Map& entries() const { return *entries_; }
  /// The map object that the `Global` keyword evaluates to.
  const MapPtr& handle() const { return entries_; }

  /// Write-log used for guard purity checks: while armed, attempted writes are
  /// recorded (and rejected by the interpreter).
  void arm_write_log() {
    write_log_armed_ = true;
    write_log_.clear();
  }
  void disarm_write_log() { write_log_armed_ = false; }
  bool write_log_armed() const { return write_log_armed_; }
  void record_write(const std::string& key) {
    if (write_log_armed_) write_log_.push_back(key);
  }
  const std::vector<std::string>& write_log() const { return write_log_; }

private:
  MapPtr entries_;
  bool write_log_armed_ = false;
  std::vector<std::string> write_log_;
};

inline bool globals_equal(const GlobalSpace& a, const GlobalSpace& b) {
  return values_equal(Value(a.handle()), Value(b.handle()));
}

struct Environment {
  std::map<std::string, Value> vars;
  std::shared_ptr<Environment> parent;

  explicit Environment(std::shared_ptr<Environment> up = nullptr) : parent(std::move(up)) {}

  Value* lookup(const std::string& name) {
    for (Environment* e = this; e; e = e->parent.get()) {
      auto it = e->vars.find(name);
      if (it != e->vars.end()) return &it->second;
    }
    return nullptr;
  }
};

using EnvPtr = std::shared_ptr<Environment>;

struct Closure {
  std::vector<std::string> params;
  ast::SharedBody body;
  EnvPtr env;
};

/// Builtins resolved after local variables. Engine sessions extend the
/// standard set with their service functions.
using HostBindings = std::unordered_map<std::string, HostFnPtr>;

inline HostFnPtr make_host(std::string name, std::size_t min_arity, std::size_t max_arity,
                           std::function<Value(const HostCall&)> fn) {
  return std::make_shared<const HostFn>(
      HostFn{std::move(name), min_arity, max_arity, std::move(fn)});
}

[[noreturn]] inline void runtime_error(const std::string& msg, SourcePos pos,
                                       std::string code = "ScriptRuntime") {
  throw ScriptError(ScriptPhase::Runtime, msg, pos, std::move(code));
}

inline std::optional<double> parse_number_text(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\n\r");
  std::size_t e = s.find_last_not_of(" \t\n\r");
  if (b == std::string::npos) return std::nullopt;
  const char* first = s.data() + b;
  const char* last = s.data() + e + 1;
  if (*first == '+') ++first;
  double d = 0;
  auto r = std::from_chars(first, last, d);
  if (r.ec != std::errc{} || r.ptr != last) return std::nullopt;
  return Value::normalize(d);
}

/// Names of builtins that mutate state; rejected while evaluating guards.
inline bool is_side_effecting_builtin(const std::string& name) {
  return name == "push" || name == "journal" || name == "interrupt" || name == "setMode" ||
         name == "setContent" || name == "finish" || name == "fail";
}

/// Pure language builtins: floor, len, push, keys, str, num.
inline HostBindings standard_builtins() {
  HostBindings b;
  b["floor"] = make_host("floor", 1, 1, [](const HostCall& c) -> Value {
    if (!c.arg(0).is_number()) runtime_error("floor() expects a number", c.pos);
    return std::floor(c.arg(0).as_number());
  });
  b["len"] = make_host("len", 1, 1, [](const HostCall& c) -> Value {
    const Value& v = c.arg(0);
    if (v.is_list()) return v.as_list()->size();
    if (v.is_map()) return v.as_map()->size();
    if (v.is_string()) return v.as_string().size();
    runtime_error(std::string("len() of ") + to_string(v.type()), c.pos);
  });
  b["push"] = make_host("push", 2, 2, [](const HostCall& c) -> Value {
    if (!c.arg(0).is_list()) runtime_error("push() expects a list", c.pos);
    c.arg(0).as_list()->push_back(c.arg(1));
    return c.arg(0).as_list()->size();
  });
  b["keys"] = make_host("keys", 1, 1, [](const HostCall& c) -> Value {
    if (!c.arg(0).is_map()) runtime_error("keys() expects a map", c.pos);
    List out;
    for (const auto& [k, v] : *c.arg(0).as_map()) out.emplace_back(k);
    return Value::list(std::move(out));
  });
  b["str"] = make_host("str", 1, 1, [](const HostCall& c) -> Value { return to_display(c.arg(0)); });
  b["num"] = make_host("num", 1, 1, [](const HostCall& c) -> Value {
    const Value& v = c.arg(0);
    if (v.is_number()) return v;
    if (v.is_string()) {
      if (auto d = parse_number_text(v.as_string())) return *d;
    }
    return Value{};
  });
  return b;
}

struct InterpreterLimits {
  std::uint64_t step_budget = 1'000'000;
  int max_call_depth = 200;
};

/// Tree-walking evaluator. One instance evaluates against one GlobalSpace and
/// one set of host bindings; the step budget is per top-level run.
class Interpreter {
public:
  Interpreter(GlobalSpace& globals, const HostBindings& host, InterpreterLimits limits = {})
      : globals_(globals), host_(host), limits_(limits) {}

  struct Completion {
    bool returned = false;
    Value value;
  };

  Completion exec_program(const ast::Program& program, EnvPtr locals = nullptr) {
    begin_run();
    if (!locals) locals = std::make_shared<Environment>();
    for (const auto& s : program.stmts) {
      Flow f = exec(s, locals);
      if (f.returned) return {true, std::move(f.value)};
    }
    return {};
  }

  Value eval_expr(const ast::Expr& e, EnvPtr locals = nullptr) {
    begin_run();
    if (!locals) locals = std::make_shared<Environment>();
    return eval(e, locals);
  }

  /// Guard entry point: evaluates with the write-log armed and raises
  /// GuardSideEffect on any attempted write.
  Value eval_guard(const ast::Expr& e) {
    globals_.arm_write_log();
    pure_ = true;
    struct Reset {
      Interpreter& self;
      ~Reset() {
        self.pure_ = false;
        self.globals_.disarm_write_log();
      }
    } reset{*this};
    return eval_expr(e);
  }

  /// Calls a function value from host code (policies, stored callbacks).
  Value call(const Value& fn, std::vector<Value> args) {
    begin_run();
    return invoke(fn, args, {});
  }

  std::uint64_t steps_used() const { return steps_; }

private:
  struct Flow {
    bool returned = false;
    Value value;
  };

  void begin_run() {
    steps_ = 0;
    depth_ = 0;
  }

  void tick(SourcePos pos) {
    if (++steps_ > limits_.step_budget) {
      runtime_error("step budget of " + std::to_string(limits_.step_budget) + " exceeded", pos,
                    "StepBudgetExceeded");
    }
  }

  void reject_write(const std::string& what, SourcePos pos) {
    if (pure_) runtime_error("guard attempted a write (" + what + ")", pos, "GuardSideEffect");
  }

  Flow exec(const ast::Stmt& s, const EnvPtr& env) {
    tick(s.pos);
    return std::visit([&](const auto& n) { return exec_node(n, env, s.pos); }, s.node);
  }

  Flow exec_node(const ast::VarDecl& n, const EnvPtr& env, SourcePos) {
    env->vars[n.name] = n.init ? eval(*n.init, env) : Value{};
    return {};
  }
  Flow exec_node(const ast::ExprStmt& n, const EnvPtr& env, SourcePos) {
    eval(n.expr, env);
    return {};
  }
  Flow exec_node(const ast::Block& n, const EnvPtr& env, SourcePos) {
    auto scope = std::make_shared<Environment>(env);
    for (const auto& s : n.stmts) {
      Flow f = exec(s, scope);
      if (f.returned) return f;
    }
    return {};
  }
  Flow exec_node(const ast::If& n, const EnvPtr& env, SourcePos) {
    if (truthy(eval(n.cond, env))) return exec(*n.then_branch, env);
    if (n.else_branch) return exec(**n.else_branch, env);
    return {};
  }
  Flow exec_node(const ast::While& n, const EnvPtr& env, SourcePos pos) {
    while (true) {
      tick(pos);
      if (!truthy(eval(n.cond, env))) return {};
      Flow f = exec(*n.body, env);
      if (f.returned) return f;
    }
  }
  Flow exec_node(const ast::Return& n, const EnvPtr& env, SourcePos) {
    return {true, n.value ? eval(*n.value, env) : Value{}};
  }

  Value eval(const ast::Expr& e, const EnvPtr& env) {
    tick(e.pos);
    return std::visit([&](const auto& n) { return eval_node(n, env, e.pos); }, e.node);
  }

  Value eval_node(const ast::NullLit&, const EnvPtr&, SourcePos) { return {}; }
  Value eval_node(const ast::BoolLit& n, const EnvPtr&, SourcePos) { return n.value; }
  Value eval_node(const ast::NumberLit& n, const EnvPtr&, SourcePos) { return n.value; }
  Value eval_node(const ast::StringLit& n, const EnvPtr&, SourcePos) { return n.value; }
  Value eval_node(const ast::GlobalRef&, const EnvPtr&, SourcePos) { return globals_.handle(); }

  Value eval_node(const ast::Identifier& n, const EnvPtr& env, SourcePos pos) {
    if (Value* v = env->lookup(n.name)) return *v;
    auto it = host_.find(n.name);
    if (it != host_.end()) return it->second;
    runtime_error("undefined variable '" + n.name + "'", pos);
  }

  Value eval_node(const ast::ListLit& n, const EnvPtr& env, SourcePos) {
    List items;
    items.reserve(n.items.size());
    for (const auto& item : n.items) items.push_back(eval(item, env));
    return Value::list(std::move(items));
  }

  Value eval_node(const ast::MapLit& n, const EnvPtr& env, SourcePos) {
    Map entries;
    for (const auto& entry : n.entries) entries[entry.key] = eval(entry.value, env);
    return Value::map(std::move(entries));
  }

  Value eval_node(const ast::FunctionLit& n, const EnvPtr& env, SourcePos) {
    return std::make_shared<Closure>(Closure{n.params, n.body, env});
  }

  Value eval_node(const ast::Call& n, const EnvPtr& env, SourcePos pos) {
    Value callee = eval(*n.callee, env);
    std::vector<Value> args;
    args.reserve(n.args.size());
    for (const auto& a : n.args) args.push_back(eval(a, env));
    return invoke(callee, args, pos);
  }

  Value invoke(const Value& callee, const std::vector<Value>& args, SourcePos pos) {
    if (callee.type() == ValueType::HostFn) {
      const HostFn& h = *callee.as_host();
      if (args.size() < h.min_arity || args.size() > h.max_arity) {
        runtime_error(h.name + "() takes " + arity_text(h) + " argument(s), got " +
                          std::to_string(args.size()),
                      pos, "ArityError");
      }
      if (pure_ && is_side_effecting_builtin(h.name)) reject_write(h.name + "()", pos);
      return h.fn(HostCall{args, pos});
    }
    if (callee.type() != ValueType::Closure) {
      runtime_error(std::string("cannot call a ") + to_string(callee.type()) + " value", pos,
                    "NotCallable");
    }
    if (++depth_ > limits_.max_call_depth) {
      --depth_;
      runtime_error("call depth limit exceeded", pos);
    }
    const Closure& c = *callee.as_closure();
    auto frame = std::make_shared<Environment>(c.env);
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      frame->vars[c.params[i]] = i < args.size() ? args[i] : Value{};
    }
    Value result;
    for (const auto& s : *c.body.stmts) {
      Flow f = exec(s, frame);
      if (f.returned) {
        result = std::move(f.value);
        break;
      }
    }
    --depth_;
    return result;
  }

  static std::string arity_text(const HostFn& h) {
    if (h.min_arity == h.max_arity) return std::to_string(h.min_arity);
    return std::to_string(h.min_arity) + ".." + std::to_string(h.max_arity);
  }

  Value index_read(const Value& obj, const Value& key, SourcePos pos) {
    switch (obj.type()) {
      case ValueType::Map: {
        if (!key.is_string()) runtime_error("map keys must be strings", pos);
        const auto& m = *obj.as_map();
        auto it = m.find(key.as_string());
        return it == m.end() ? Value{} : it->second;
      }
      case ValueType::List: {
        const auto& l = *obj.as_list();
        auto i = list_index(key, pos);
        if (i < 0 || static_cast<std::size_t>(i) >= l.size()) return {};
        return l[static_cast<std::size_t>(i)];
      }
      case ValueType::Str: {
        const auto& s = obj.as_string();
        auto i = list_index(key, pos);
        if (i < 0 || static_cast<std::size_t>(i) >= s.size()) return {};
        return std::string(1, s[static_cast<std::size_t>(i)]);
      }
      default:
        runtime_error(std::string("cannot index a ") + to_string(obj.type()) + " value", pos,
                      "NotIndexable");
    }
  }

  static long long list_index(const Value& key, SourcePos pos) {
    if (!key.is_number() || std::isnan(key.as_number()) ||
        key.as_number() != std::floor(key.as_number())) {
      runtime_error("list index must be an integer", pos);
    }
    return static_cast<long long>(key.as_number());
  }

  Value eval_node(const ast::Index& n, const EnvPtr& env, SourcePos pos) {
    Value obj = eval(*n.object, env);
    Value key = eval(*n.key, env);
    return index_read(obj, key, pos);
  }

  Value eval_node(const ast::Unary& n, const EnvPtr& env, SourcePos pos) {
    Value v = eval(*n.operand, env);
    if (n.op == ast::UnaryOp::Not) return !truthy(v);
    if (!v.is_number()) runtime_error(std::string("cannot negate a ") + to_string(v.type()), pos,
                                      "TypeError");
    return -v.as_number();
  }

  Value eval_node(const ast::Binary& n, const EnvPtr& env, SourcePos pos) {
    if (n.op == ast::BinaryOp::And) {
      Value l = eval(*n.lhs, env);
      return truthy(l) ? eval(*n.rhs, env) : l;
    }
    if (n.op == ast::BinaryOp::Or) {
      Value l = eval(*n.lhs, env);
      return truthy(l) ? l : eval(*n.rhs, env);
    }
    Value l = eval(*n.lhs, env);
    Value r = eval(*n.rhs, env);
    switch (n.op) {
      case ast::BinaryOp::Eq: return values_equal(l, r);
      case ast::BinaryOp::NotEq: return !values_equal(l, r);
      case ast::BinaryOp::Add:
        if (l.is_string() || r.is_string()) return to_display(l) + to_display(r);
        break;
      case ast::BinaryOp::Less:
      case ast::BinaryOp::LessEq:
      case ast::BinaryOp::Greater:
      case ast::BinaryOp::GreaterEq:
        if (l.is_string() && r.is_string()) {
          int c = l.as_string().compare(r.as_string());
          return compare_result(n.op, c < 0 ? -1.0 : (c > 0 ? 1.0 : 0.0), 0.0);
        }
        break;
      default: break;
    }
    if (!l.is_number() || !r.is_number()) {
      runtime_error(std::string("operator ") + ast::to_string(n.op) + " not defined for " +
                        to_string(l.type()) + " and " + to_string(r.type()),
                    pos, "TypeError");
    }
    double a = l.as_number();
    double b = r.as_number();
    switch (n.op) {
      case ast::BinaryOp::Add: return a + b;
      case ast::BinaryOp::Sub: return a - b;
      case ast::BinaryOp::Mul: return a * b;
      case ast::BinaryOp::Div: return b == 0.0 ? std::nan("") : a / b;
      case ast::BinaryOp::Mod: return b == 0.0 ? std::nan("") : std::fmod(a, b);
      default: return compare_result(n.op, a, b);
    }
  }

  static Value compare_result(ast::BinaryOp op, double a, double b) {
    switch (op) {
      case ast::BinaryOp::Less: return a < b;
      case ast::BinaryOp::LessEq: return a <= b;
      case ast::BinaryOp::Greater: return a > b;
      case ast::BinaryOp::GreaterEq: return a >= b;
      default: return Value{};
    }
  }

  Value eval_node(const ast::Assign& n, const EnvPtr& env, SourcePos pos) {
    if (const auto* id = std::get_if<ast::Identifier>(&n.target->node)) {
      Value* slot = env->lookup(id->name);
      if (!slot) runtime_error("assignment to undeclared variable '" + id->name + "'", pos);
      Value v = eval(*n.value, env);
      // lookup again: evaluating the value may have declared into a scope
      slot = env->lookup(id->name);
      *slot = v;
      return v;
    }
    const auto& target = std::get<ast::Index>(n.target->node);
    Value obj = eval(*target.object, env);
    Value key = eval(*target.key, env);
    Value v = eval(*n.value, env);
    if (obj.is_map()) {
      if (!key.is_string()) runtime_error("map keys must be strings", pos);
      if (obj.as_map() == globals_.handle()) globals_.record_write(key.as_string());
      reject_write("Global['" + key.as_string() + "']", pos);
      (*obj.as_map())[key.as_string()] = v;
      return v;
    }
    if (obj.is_list()) {
      auto i = list_index(key, pos);
      auto& l = *obj.as_list();
      reject_write("list element", pos);
      if (i < 0 || static_cast<std::size_t>(i) > l.size()) {
        runtime_error("list index " + std::to_string(i) + " out of range", pos);
      }
      if (static_cast<std::size_t>(i) == l.size()) {
        l.push_back(v);
      } else {
        l[static_cast<std::size_t>(i)] = v;
      }
      return v;
    }
    runtime_error(std::string("cannot assign into a ") + to_string(obj.type()) + " value", pos,
                  "NotIndexable");
  }

  GlobalSpace& globals_;
  const HostBindings& host_;
  InterpreterLimits limits_;
  std::uint64_t steps_ = 0;
  int depth_ = 0;
  bool pure_ = false;
};

/// Convenience: parse and run a program against `globals` with the standard
/// builtins plus `extra`.
inline Interpreter::Completion run_script(std::string_view source, GlobalSpace& globals,
                                          const HostBindings& extra = {}) {
  HostBindings host = standard_builtins();
  for (const auto& [k, v] : extra) host[k] = v;
  Interpreter interp(globals, host);
  return interp.exec_program(parse_program(source));
}

}  // namespace storyflow
