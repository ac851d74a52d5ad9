#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "storyflow/engine.hpp"
#include "storyflow/xml.hpp"

namespace storyflow {

/// Maps presenterType tokens to one of the built-in presenter kinds.
/// The kind names themselves are always registered.
class PresenterRegistry {
public:
  PresenterRegistry() {
    for (const char* k : {"message", "choice", "input", "auto"}) kinds_[k] = k;
  }

  static bool is_kind(const std::string& kind) { return builtin_presenter_kind(kind).has_value(); }

  void add(const std::string& type, const std::string& kind) {
    if (!is_kind(kind)) {
      throw Error("UnknownPresenter", "presenter kind '" + kind + "' is not one of message, choice, input, auto");
    }
    kinds_[type] = kind;
  }

  std::optional<std::string> kind_of(const std::string& type) const {
    auto it = kinds_.find(type);
    if (it == kinds_.end()) return std::nullopt;
    return it->second;
  }

  PresenterResolver resolver() const {
    auto table = kinds_;
    return [table](const std::string& type) -> std::optional<std::string> {
      auto it = table.find(type);
      if (it == table.end()) return std::nullopt;
      return it->second;
    };
  }

  const std::map<std::string, std::string>& entries() const { return kinds_; }

private:
  std::map<std::string, std::string> kinds_;
};

/// Reads `<presenters><presenter type=".." kind=".."/>...</presenters>`.
inline PresenterRegistry parse_presenters(std::string_view text) {
  xml::Element root = xml::parse(text);
  if (root.name != "presenters") {
    throw Error("XmlParse", "presenter file root must be <presenters>, got <" + root.name + ">");
  }
  PresenterRegistry reg;
  for (const auto& child : root.children) {
    if (child.name != "presenter") continue;
    const std::string* type = child.attribute("type");
    const std::string* kind = child.attribute("kind");
    if (!type || !kind) throw Error("XmlParse", "<presenter> needs type and kind attributes");
    reg.add(*type, *kind);
  }
  return reg;
}

namespace detail {

inline void collect_presenter_types(const StoryElementSpec& el, const CoursePath& at,
                                    std::vector<std::pair<CoursePath, std::string>>& out) {
  if (el.kind == ElementKind::Scene && el.presenter_type) out.emplace_back(at, *el.presenter_type);
  for (const auto& c : el.children) collect_presenter_types(c, at.child(c.id), out);
}

}  // namespace detail

/// One warning per presenterType token in the static tree that the registry
/// does not map. Content loaded at run time is not inspected.
inline std::vector<Diagnostic> check_presenters(const StoryElementSpec& root,
                                                const PresenterRegistry& reg) {
  std::vector<std::pair<CoursePath, std::string>> uses;
  detail::collect_presenter_types(root, CoursePath::root(), uses);
  std::vector<Diagnostic> out;
  std::set<std::string> reported;
  for (const auto& [path, type] : uses) {
    if (reg.kind_of(type) || !reported.insert(type).second) continue;
    out.push_back({Severity::Warning, path, "presenterType '" + type + "' is not registered",
                   "UnknownPresenter"});
  }
  return out;
}

}  // namespace storyflow
