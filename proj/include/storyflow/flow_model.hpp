#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "storyflow/interpreter.hpp"
#include "storyflow/parser.hpp"
#include "storyflow/path.hpp"

namespace storyflow {

enum class ElementKind { Stream, Scene, Action };

inline const char* to_string(ElementKind k) {
  switch (k) {
    case ElementKind::Stream: return "stream";
    case ElementKind::Scene: return "scene";
    case ElementKind::Action: return "action";
  }
  return "?";
}

/// Declarative node of the course flow. Only the fields belonging to `kind`
/// are meaningful: children for streams; presenter fields for scenes; script
/// for actions.
struct StoryElementSpec {
  std::string id;
  ElementKind kind = ElementKind::Stream;

  std::optional<std::string> include_if;
  bool include_if_legacy = false;  // spelled `includeSelf` in the document
  std::optional<std::string> on_execute;
  std::optional<std::string> on_complete;
  std::optional<std::string> on_interrupt;

  std::optional<std::string> content_url;
  bool preload = false;
  bool cached = false;

  std::vector<StoryElementSpec> children;

  std::optional<std::string> presenter_type;
  std::string payload;
  std::optional<std::string> record_to;

  std::string script;

  SourcePos pos;

  bool is_leaf() const { return kind != ElementKind::Stream; }

  bool has_inline_body() const {
    auto blank = [](const std::string& s) {
      return s.find_first_not_of(" \t\r\n") == std::string::npos;
    };
    switch (kind) {
      case ElementKind::Stream: return !children.empty();
      case ElementKind::Scene: return !blank(payload);
      case ElementKind::Action: return !blank(script);
    }
    return false;
  }

  const StoryElementSpec* find_child(const std::string& child_id) const {
    for (const auto& c : children) {
      if (c.id == child_id) return &c;
    }
    return nullptr;
  }
};

enum class Severity { Error, Warning };

struct Diagnostic {
  Severity severity = Severity::Error;
  CoursePath path;
  std::string message;
  std::string code;
};

inline std::string format_diagnostic(const Diagnostic& d) {
  return std::string(d.severity == Severity::Error ? "error" : "warning") + " [" + d.code + "] " +
         d.path.str() + ": " + d.message;
}

inline std::size_t count_errors(const std::vector<Diagnostic>& diags) {
  std::size_t n = 0;
  for (const auto& d : diags) n += d.severity == Severity::Error;
  return n;
}

inline const StoryElementSpec& resolve_path(const StoryElementSpec& root, const CoursePath& path) {
  const StoryElementSpec* node = &root;
  CoursePath walked;
  for (const auto& seg : path.segments()) {
    if (node->kind != ElementKind::Stream) {
      throw Error("NotAStream", "cannot descend through " + std::string(to_string(node->kind)) +
                                    " " + walked.str());
    }
    const StoryElementSpec* next = node->find_child(seg);
    walked = walked.child(seg);
    if (!next) throw Error("PathNotFound", "no element at " + walked.str());
    node = next;
  }
  return *node;
}

namespace detail {

class Validator {
public:
  std::vector<Diagnostic> diags;

  void run(const StoryElementSpec& root) {
    check_scripts(root, CoursePath::root());
    visit_children(root, CoursePath::root());
    if (legacy_count_ > 0) {
      diags.push_back({Severity::Warning, first_legacy_,
                       "attribute 'includeSelf' is deprecated, use 'includeIf' (" +
                           std::to_string(legacy_count_) + " occurrence" +
                           (legacy_count_ == 1 ? "" : "s") + " in document)",
                       "LegacyIncludeSelf"});
    }
  }

private:
  void error(const CoursePath& p, std::string code, std::string msg) {
    diags.push_back({Severity::Error, p, std::move(msg), std::move(code)});
  }

  void visit_children(const StoryElementSpec& stream, const CoursePath& at) {
    std::set<std::string> seen;
    for (const auto& child : stream.children) {
      CoursePath p = at.child(child.id);
      if (!is_valid_id(child.id)) {
        error(p, "InvalidId", "invalid element id '" + child.id + "'");
      } else if (!seen.insert(child.id).second) {
        error(p, "DuplicateId", "duplicate id '" + child.id + "' among siblings");
      }
      visit(child, p);
    }
  }

  void visit(const StoryElementSpec& el, const CoursePath& p) {
    if (el.include_if_legacy && el.include_if) {
      if (legacy_count_++ == 0) first_legacy_ = p;
    }
    if (el.content_url && el.has_inline_body()) {
      error(p, "BodyConflict", "element has both an inline body and a contentURL");
    }
    if (el.kind == ElementKind::Scene && !el.presenter_type && !el.content_url) {
      error(p, "MissingPresenterType", "scene has no presenterType");
    }
    if (el.include_if) check_guard(*el.include_if, p, "includeIf");
    check_scripts(el, p);
    if (el.kind == ElementKind::Stream) visit_children(el, p);
  }

  void check_scripts(const StoryElementSpec& el, const CoursePath& p) {
    if (el.on_execute) check_program(*el.on_execute, p, "onExecute");
    if (el.on_complete) check_program(*el.on_complete, p, "onComplete");
    if (el.on_interrupt) check_program(*el.on_interrupt, p, "onInterrupt");
    if (el.kind == ElementKind::Action) check_program(el.script, p, "script");
  }

  void check_guard(const std::string& src, const CoursePath& p, const char* what) {
    try {
      parse_expression(src);
    } catch (const ScriptError& e) {
      error(p, "ScriptParse", std::string(what) + ": " + e.what());
    }
  }

  void check_program(const std::string& src, const CoursePath& p, const char* what) {
    try {
      parse_program(src);
    } catch (const ScriptError& e) {
      error(p, "ScriptParse", std::string(what) + ": " + e.what());
    }
  }

  int legacy_count_ = 0;
  CoursePath first_legacy_;
};

}  // namespace detail

/// Static checks over one parsed document. Never throws; returns every
/// violation found.
inline std::vector<Diagnostic> validate_course(const StoryElementSpec& root) {
  detail::Validator v;
  v.run(root);
  return v.diags;
}

namespace detail {

inline void flatten_into(const StoryElementSpec& stream, const CoursePath& at, Interpreter& interp,
                         std::vector<CoursePath>& out) {
  for (const auto& child : stream.children) {
    if (child.include_if && !truthy(interp.eval_guard(parse_expression(*child.include_if)))) {
      continue;
    }
    CoursePath p = at.child(child.id);
    if (child.is_leaf() || child.children.empty()) {
      out.push_back(std::move(p));
    } else {
      flatten_into(child, p, interp, out);
    }
  }
}

}  // namespace detail

/// Depth-first, left-to-right listing of includable leaves under a frozen
/// guard environment. Streams without inline children are listed as opaque
/// units. Used as the brute-force oracle for the engine's REGULAR traversal.
inline std::vector<CoursePath> static_flatten(const StoryElementSpec& root,
                                              GlobalSpace& guard_env) {
  HostBindings host = standard_builtins();
  Interpreter interp(guard_env, host);
  std::vector<CoursePath> out;
  detail::flatten_into(root, CoursePath::root(), interp, out);
  return out;
}

}  // namespace storyflow
