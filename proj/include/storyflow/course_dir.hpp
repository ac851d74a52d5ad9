#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "storyflow/content.hpp"
#include "storyflow/flow_model.hpp"
#include "storyflow/presenters.hpp"

namespace storyflow {

struct CourseBundle {
  std::string name;
  std::filesystem::path dir;
  std::shared_ptr<const StoryElementSpec> root;
  PresenterRegistry presenters;
  std::string content_hash;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("Unreadable", "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void fnv1a(std::uint64_t& h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
}

// Fetches every contentURL reachable in the static tree and checks that it
// parses as the element's kind.
inline void check_external_content(const StoryElementSpec& el, const CoursePath& at,
                                   ContentSource& source, std::vector<Diagnostic>& out) {
  if (el.content_url) {
    try {
      ParsedBody body = parse_flow_document(source.fetch(*el.content_url), el.kind, at);
      if (el.kind == ElementKind::Action) parse_program(body.body.script);
      if (body.body.on_execute) parse_program(*body.body.on_execute);
    } catch (const ScriptError& e) {
      out.push_back({Severity::Error, at, *el.content_url + ": " + e.what(), "ScriptParse"});
    } catch (const Error& e) {
      out.push_back({Severity::Error, at, e.what(), e.code()});
    }
  }
  for (const auto& c : el.children) check_external_content(c, at.child(c.id), source, out);
}

}  // namespace detail

/// FNV-1a 64 over every .xml file below `dir`, visited in sorted relative
/// path order. Each file contributes its relative path, a NUL and its bytes.
inline std::string content_hash(const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") {
      files.push_back(std::filesystem::relative(entry.path(), dir).generic_string());
    }
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& rel : files) {
    detail::fnv1a(h, rel);
    detail::fnv1a(h, std::string_view("\0", 1));
    detail::fnv1a(h, detail::slurp(dir / rel));
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

/// Loads `course.xml` and the optional `presenters.xml` of a course
/// directory. Throws CourseNotFound when the directory has no course.xml;
/// parse failures of course.xml propagate. Validation findings are returned
/// in `diagnostics`, never thrown.
inline CourseBundle load_course_dir(const std::filesystem::path& dir) {
  std::filesystem::path course_file = dir / "course.xml";
  if (!std::filesystem::is_regular_file(course_file)) {
    throw Error("CourseNotFound", "no course.xml in " + dir.string());
  }
  CourseBundle b;
  b.dir = dir;
  b.name = std::filesystem::canonical(dir).filename().string();

  ParsedBody parsed = parse_course_document(detail::slurp(course_file));
  b.diagnostics = parsed.warnings;
  auto found = validate_course(parsed.body);
  b.diagnostics.insert(b.diagnostics.end(), found.begin(), found.end());

  std::filesystem::path presenters_file = dir / "presenters.xml";
  if (std::filesystem::is_regular_file(presenters_file)) {
    b.presenters = parse_presenters(detail::slurp(presenters_file));
  }
  auto unmapped = check_presenters(parsed.body, b.presenters);
  b.diagnostics.insert(b.diagnostics.end(), unmapped.begin(), unmapped.end());

  DirectorySource source(dir);
  detail::check_external_content(parsed.body, CoursePath::root(), source, b.diagnostics);

  b.root = std::make_shared<const StoryElementSpec>(std::move(parsed.body));
  b.content_hash = content_hash(dir);
  return b;
}

}  // namespace storyflow
