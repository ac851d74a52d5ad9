#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "storyflow/flow_model.hpp"
#include "storyflow/xml.hpp"

namespace storyflow {

// ---------------------------------------------------------------------------
// Flow XML documents
// ---------------------------------------------------------------------------

struct ParsedBody {
  StoryElementSpec body;
  std::vector<Diagnostic> warnings;  // UnknownAttribute and friends
};

namespace detail {

inline const char* root_element_for(ElementKind k) {
  switch (k) {
    case ElementKind::Stream: return "streamContent";
    case ElementKind::Scene: return "sceneContent";
    case ElementKind::Action: return "actionContent";
  }
  return "?";
}

class FlowDocumentReader {
public:
  explicit FlowDocumentReader(CoursePath base) : base_(std::move(base)) {}

  std::vector<Diagnostic> warnings;

  StoryElementSpec read_root(const xml::Element& root, ElementKind expected) {
    if (root.name != root_element_for(expected)) {
      throw Error("WrongRootElement", "expected <" + std::string(root_element_for(expected)) +
                                          "> but found <" + root.name + ">");
    }
    StoryElementSpec body;
    body.kind = expected;
    body.pos = root.pos;
    for (const auto& [key, value] : root.attributes) {
      if (expected == ElementKind::Stream && key == "id") {
        body.id = value;
      } else if (expected == ElementKind::Scene && key == "presenterType") {
        body.presenter_type = value;
      } else if (expected == ElementKind::Scene && key == "recordTo") {
        body.record_to = value;
      } else {
        unknown_attribute(base_, root.name, key);
      }
    }
    fill_body(body, root, base_);
    return body;
  }

private:
  void unknown_attribute(const CoursePath& at, const std::string& element, const std::string& key) {
    warnings.push_back({Severity::Warning, at,
                        "unknown attribute '" + key + "' on <" + element + ">", "UnknownAttribute"});
  }

  static bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw Error("XmlSyntax", "attribute " + key + " must be \"true\" or \"false\", got \"" +
                                 value + "\"");
  }

  void fill_body(StoryElementSpec& spec, const xml::Element& el, const CoursePath& at) {
    switch (spec.kind) {
      case ElementKind::Stream:
        for (const auto& child : el.children) spec.children.push_back(read_element(child, at));
        break;
      case ElementKind::Scene: spec.payload = el.inner; break;
      case ElementKind::Action:
        if (!el.children.empty()) {
          throw Error("UnknownElement", "action script may not contain element <" +
                                            el.children.front().name + ">");
        }
        spec.script = el.text;
        break;
    }
  }

  StoryElementSpec read_element(const xml::Element& el, const CoursePath& parent) {
    StoryElementSpec spec;
    if (el.name == "stream") {
      spec.kind = ElementKind::Stream;
    } else if (el.name == "scene") {
      spec.kind = ElementKind::Scene;
    } else if (el.name == "action") {
      spec.kind = ElementKind::Action;
    } else {
      throw Error("UnknownElement", "unknown element <" + el.name + "> at line " +
                                        std::to_string(el.pos.line));
    }
    spec.pos = el.pos;
    if (const auto* id = el.attribute("id")) spec.id = *id;
    CoursePath at = is_valid_id(spec.id) ? parent.child(spec.id) : parent;

    std::optional<std::string> include_self;
    for (const auto& [key, value] : el.attributes) {
      if (key == "id") continue;
      if (key == "includeIf") spec.include_if = value;
      else if (key == "includeSelf") include_self = value;
      else if (key == "contentURL") spec.content_url = value;
      else if (key == "preload") spec.preload = parse_bool(key, value);
      else if (key == "cached") spec.cached = parse_bool(key, value);
      else if (key == "onExecute") spec.on_execute = value;
      else if (key == "onComplete") spec.on_complete = value;
      else if (key == "onInterrupt") spec.on_interrupt = value;
      else if (spec.kind == ElementKind::Scene && key == "presenterType") spec.presenter_type = value;
      else if (spec.kind == ElementKind::Scene && key == "recordTo") spec.record_to = value;
      else unknown_attribute(at, el.name, key);
    }
    if (include_self) {
      if (spec.include_if) {
        throw Error("XmlSyntax", "element " + at.str() + " has both includeIf and includeSelf");
      }
      spec.include_if = std::move(include_self);
      spec.include_if_legacy = true;
    }
    fill_body(spec, el, at);
    return spec;
  }

  CoursePath base_;
};

}  // namespace detail

/// Parses a flow document whose root must match `expected`. `base` is only
/// used to give warnings a best-effort path.
inline ParsedBody parse_flow_document(std::string_view bytes, ElementKind expected,
                                      const CoursePath& base = CoursePath::root()) {
  xml::Element root = xml::parse(bytes);
  detail::FlowDocumentReader reader(base);
  ParsedBody out;
  out.body = reader.read_root(root, expected);
  out.warnings = std::move(reader.warnings);
  return out;
}

/// A course's RootStream. Its id defaults to "root".
inline ParsedBody parse_course_document(std::string_view bytes) {
  ParsedBody parsed = parse_flow_document(bytes, ElementKind::Stream);
  if (parsed.body.id.empty()) parsed.body.id = "root";
  return parsed;
}

// ---------------------------------------------------------------------------
// Content sources
// ---------------------------------------------------------------------------

/// Fetches external content by relative locator. Locators may not be absolute
/// or climb above the base with "..".
class ContentSource {
public:
  virtual ~ContentSource() = default;

  std::string fetch(const std::string& locator) {
    check_locator(locator);
    ++fetch_counts_[locator];
    return read(locator);
  }

  int fetch_count(const std::string& locator) const {
    auto it = fetch_counts_.find(locator);
    return it == fetch_counts_.end() ? 0 : it->second;
  }
  const std::map<std::string, int>& fetch_counts() const { return fetch_counts_; }

  static void check_locator(const std::string& locator) {
    if (locator.empty() || locator.front() == '/' || locator.front() == '\\' ||
        locator.find(':') != std::string::npos) {
      throw Error("FetchFailed", "locator must be relative: '" + locator + "'");
    }
    std::size_t pos = 0;
    while (pos <= locator.size()) {
      std::size_t next = locator.find_first_of("/\\", pos);
      std::string seg = locator.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      if (seg == "..") throw Error("FetchFailed", "locator escapes the content base: '" + locator + "'");
      if (next == std::string::npos) break;
      pos = next + 1;
    }
  }

protected:
  virtual std::string read(const std::string& locator) = 0;

private:
  std::map<std::string, int> fetch_counts_;
};

class DirectorySource : public ContentSource {
public:
  explicit DirectorySource(std::filesystem::path base) : base_(std::move(base)) {}

  const std::filesystem::path& base() const { return base_; }

protected:
  std::string read(const std::string& locator) override {
    std::filesystem::path file = base_ / locator;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("FetchFailed", "cannot read content '" + locator + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

private:
  std::filesystem::path base_;
};

/// In-memory source, mostly for tests and generated courses.
class MemorySource : public ContentSource {
public:
  void put(std::string locator, std::string text) { files_[std::move(locator)] = std::move(text); }
  void remove(const std::string& locator) { files_.erase(locator); }

protected:
  std::string read(const std::string& locator) override {
    auto it = files_.find(locator);
    if (it == files_.end()) throw Error("FetchFailed", "no content at '" + locator + "'");
    return it->second;
  }

private:
  std::map<std::string, std::string> files_;
};

// ---------------------------------------------------------------------------
// Cache, overrides, resolution
// ---------------------------------------------------------------------------

/// Path-keyed cache of resolved bodies plus per-path load counts.
struct ContentCache {
  struct Entry {
    StoryElementSpec body;
    bool one_shot = false;  // preloaded, dropped on first use unless cached
  };
  std::map<CoursePath, Entry> entries;
  std::map<CoursePath, int> load_count;
};

inline std::map<std::string, int> load_stats(const ContentCache& cache) {
  std::map<std::string, int> out;
  for (const auto& [path, n] : cache.load_count) out[path.str()] = n;
  return out;
}

struct Override {
  ElementKind kind = ElementKind::Stream;
  std::string xml;
  StoryElementSpec body;
};

using OverrideTable = std::map<CoursePath, Override>;

inline Override make_override(const CoursePath& path, ElementKind kind, std::string xml_text) {
  ParsedBody parsed = parse_flow_document(xml_text, kind, path);
  return Override{kind, std::move(xml_text), std::move(parsed.body)};
}

/// The element's own attributes with the kind-specific body taken from `body`.
inline StoryElementSpec merge_body(const StoryElementSpec& element, const StoryElementSpec& body) {
  StoryElementSpec out = element;
  switch (element.kind) {
    case ElementKind::Stream: out.children = body.children; break;
    case ElementKind::Scene:
      out.payload = body.payload;
      if (body.presenter_type) out.presenter_type = body.presenter_type;
      if (body.record_to) out.record_to = body.record_to;
      break;
    case ElementKind::Action: out.script = body.script; break;
  }
  return out;
}

/// Resolves an element's body: override, then cache hit, then fetch+parse of
/// contentURL, then the inline body.
inline StoryElementSpec resolve_content(const CoursePath& path, const StoryElementSpec& spec,
                                        ContentSource& source, ContentCache& cache,
                                        const OverrideTable& overrides,
                                        std::vector<Diagnostic>* warnings = nullptr) {
  if (auto ov = overrides.find(path); ov != overrides.end()) {
    return merge_body(spec, ov->second.body);
  }
  if (auto hit = cache.entries.find(path); hit != cache.entries.end()) {
    if (spec.cached || hit->second.one_shot) {
      StoryElementSpec out = merge_body(spec, hit->second.body);
      if (!spec.cached) {
        cache.entries.erase(hit);
      } else {
        hit->second.one_shot = false;
      }
      return out;
    }
  }
  if (spec.content_url) {
    std::string bytes = source.fetch(*spec.content_url);
    ParsedBody parsed = parse_flow_document(bytes, spec.kind, path);
    ++cache.load_count[path];
    if (warnings) warnings->insert(warnings->end(), parsed.warnings.begin(), parsed.warnings.end());
    if (spec.cached) cache.entries[path] = ContentCache::Entry{parsed.body, false};
    return merge_body(spec, parsed.body);
  }
  return spec;
}

/// Fetches every direct child flagged preload (with a contentURL) into the
/// cache. Failures become warnings; the element fails later only if executed.
inline std::vector<CoursePath> schedule_preloads(const CoursePath& stream_path,
                                                 const StoryElementSpec& stream_body,
                                                 ContentSource& source, ContentCache& cache,
                                                 const OverrideTable& overrides,
                                                 std::vector<Diagnostic>* warnings = nullptr) {
  std::vector<CoursePath> preloaded;
  for (const auto& child : stream_body.children) {
    if (!child.preload || !child.content_url) continue;
    CoursePath p = stream_path.child(child.id);
    if (cache.entries.count(p) || overrides.count(p)) continue;
    try {
      std::string bytes = source.fetch(*child.content_url);
      ParsedBody parsed = parse_flow_document(bytes, child.kind, p);
      ++cache.load_count[p];
      if (warnings) warnings->insert(warnings->end(), parsed.warnings.begin(), parsed.warnings.end());
      cache.entries[p] = ContentCache::Entry{std::move(parsed.body), true};
      preloaded.push_back(std::move(p));
    } catch (const Error& e) {
      if (warnings) warnings->push_back({Severity::Warning, p, e.what(), "PreloadFailed"});
    }
  }
  return preloaded;
}

/// Installs an override for `path`, resolving the path through inline bodies
/// and existing overrides of `root`. Replaces any earlier override.
inline void apply_override(OverrideTable& overrides, const StoryElementSpec& root,
                           const CoursePath& path, std::string xml_text) {
  const StoryElementSpec* node = &root;
  CoursePath walked;
  for (const auto& seg : path.segments()) {
    const StoryElementSpec* scope = node;
    if (auto ov = overrides.find(walked); ov != overrides.end() && !walked.is_root()) {
      scope = &ov->second.body;
    }
    if (scope->kind != ElementKind::Stream) {
      throw Error("NotAStream", "cannot descend through " + walked.str());
    }
    node = scope->find_child(seg);
    walked = walked.child(seg);
    if (!node) throw Error("PathNotFound", "no element at " + walked.str());
  }
  if (path.is_root()) throw Error("PathNotFound", "the root stream cannot be overridden");
  overrides[path] = make_override(path, node->kind, std::move(xml_text));
}

}  // namespace storyflow
