#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "storyflow/error.hpp"

namespace storyflow {

/// Element ids: `[A-Za-z_][A-Za-z0-9_-]*`.
inline bool is_valid_id(std::string_view id) {
  if (id.empty()) return false;
  auto head = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  if (!head(id.front())) return false;
  for (char c : id.substr(1)) {
    if (!head(c) && !(c >= '0' && c <= '9') && c != '-') return false;
  }
  return true;
}

/// Absolute location of a StoryElement; the RootStream itself is "/".
class CoursePath {
public:
  CoursePath() = default;
  explicit CoursePath(std::vector<std::string> segments) : segments_(std::move(segments)) {}

  static CoursePath root() { return CoursePath{}; }

  const std::vector<std::string>& segments() const noexcept { return segments_; }
  bool is_root() const noexcept { return segments_.empty(); }
  std::size_t depth() const noexcept { return segments_.size(); }
  const std::string& leaf() const { return segments_.back(); }

  CoursePath child(std::string id) const {
    auto s = segments_;
    s.push_back(std::move(id));
    return CoursePath{std::move(s)};
  }

  CoursePath parent() const {
    auto s = segments_;
    if (!s.empty()) s.pop_back();
    return CoursePath{std::move(s)};
  }

  /// True when `this` is `other` or one of its ancestors.
  bool is_prefix_of(const CoursePath& other) const {
    if (segments_.size() > other.segments_.size()) return false;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (segments_[i] != other.segments_[i]) return false;
    }
    return true;
  }

  std::string str() const {
    if (segments_.empty()) return "/";
    std::string out;
    for (const auto& s : segments_) {
      out += '/';
      out += s;
    }
    return out;
  }

  auto operator<=>(const CoursePath&) const = default;

private:
  std::vector<std::string> segments_;
};

inline CoursePath parse_path(std::string_view text) {
  if (text.empty() || text.front() != '/') {
    throw Error("MalformedPath", "path must start with '/': '" + std::string(text) + "'");
  }
  if (text == "/") return CoursePath::root();
  std::vector<std::string> segments;
  std::size_t pos = 1;
  while (true) {
    auto next = text.find('/', pos);
    auto seg = text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    if (seg.empty()) {
      throw Error("MalformedPath", "empty segment in path '" + std::string(text) + "'");
    }
    if (!is_valid_id(seg)) {
      throw Error("MalformedPath", "invalid segment '" + std::string(seg) + "' in path '" +
                                       std::string(text) + "'");
    }
    segments.emplace_back(seg);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return CoursePath{std::move(segments)};
}

}  // namespace storyflow
