#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "storyflow/engine.hpp"

namespace storyflow {

/// Script-facing form of a presenter view. `options` holds the option ids,
/// `labels` the matching labels, `segments` the path split at '/'.
inline Value view_to_value(const PresenterView& v) {
  List options, labels, segments;
  for (const auto& o : v.options) {
    options.emplace_back(o.id);
    labels.emplace_back(o.label);
  }
  for (const auto& s : v.path.segments()) segments.emplace_back(s);
  Map m;
  m["path"] = v.path.str();
  m["segments"] = Value::list(std::move(segments));
  m["presenterType"] = v.presenter_type;
  m["kind"] = v.kind;
  m["payload"] = v.payload;
  m["prompt"] = v.prompt;
  m["options"] = Value::list(std::move(options));
  m["labels"] = Value::list(std::move(labels));
  m["recordTo"] = v.record_to ? Value(*v.record_to) : Value{};
  return Value::map(std::move(m));
}

/// Scripted learner. The program runs once in its own data space and must
/// leave a function in Global['Policy']; it may also define Global['Ticks'],
/// called before each answer, returning milliseconds to advance the clock.
///
/// The builtin `course(key)` reads the course's Global without changing it.
class LearnerPolicy {
public:
  explicit LearnerPolicy(const std::string& source) : interp_(globals_, host_) {
    host_ = standard_builtins();
    host_["course"] = make_host("course", 1, 1, [this](const HostCall& c) -> Value {
      if (!course_ || !c.arg(0).is_string()) return {};
      return course_->get(c.arg(0).as_string());
    });
    interp_.exec_program(parse_program(source));
  }

  LearnerPolicy(const LearnerPolicy&) = delete;
  LearnerPolicy& operator=(const LearnerPolicy&) = delete;

  Value answer(const PresenterView& view, const GlobalSpace& course) {
    Value fn = globals_.get("Policy");
    if (!fn.is_function()) throw Error("PolicyMissing", "policy does not define Global['Policy']");
    Value result = call(fn, view, course);
    if (result.is_null() && view.kind == "choice" && !view.options.empty()) {
      return view.options.front().id;
    }
    return result;
  }

  std::int64_t ticks(const PresenterView& view, const GlobalSpace& course) {
    Value fn = globals_.get("Ticks");
    if (!fn.is_function()) return 0;
    Value ms = call(fn, view, course);
    if (!ms.is_number() || std::isnan(ms.as_number()) || ms.as_number() <= 0) return 0;
    return static_cast<std::int64_t>(ms.as_number());
  }

  GlobalSpace& globals() { return globals_; }

private:
  Value call(const Value& fn, const PresenterView& view, const GlobalSpace& course) {
    course_ = &course;
    struct Reset {
      const GlobalSpace*& p;
      ~Reset() { p = nullptr; }
    } reset{course_};
    return interp_.call(fn, {view_to_value(view)});
  }

  GlobalSpace globals_;
  HostBindings host_;
  Interpreter interp_;
  const GlobalSpace* course_ = nullptr;
};

}  // namespace storyflow
