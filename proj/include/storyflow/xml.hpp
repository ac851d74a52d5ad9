#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "storyflow/error.hpp"

namespace storyflow::xml {

/// Element of a parsed document. `text` is the element's own character data
/// (CDATA included, entities decoded); `inner` is the raw source between the
/// start and end tags.
struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;
  std::string text;
  std::string inner;
  SourcePos pos;

  const std::string* attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Reader {
public:
  explicit Reader(std::string_view src) : src_(src) {}

  Element document() {
    skip_bom();
    skip_misc();
    if (at_end() || peek() != '<') fail("expected root element");
    Element root = element();
    skip_misc();
    if (!at_end()) fail("content after root element");
    return root;
  }

private:
  bool at_end() const { return i_ >= src_.size(); }
  char peek(std::size_t ahead = 0) const {
    return i_ + ahead < src_.size() ? src_[i_ + ahead] : '\0';
  }
  bool starts_with(std::string_view s) const { return src_.substr(i_, s.size()) == s; }
  SourcePos here() const { return {line_, col_}; }

  void advance(std::size_t n = 1) {
    for (std::size_t k = 0; k < n && i_ < src_.size(); ++k) {
      if (src_[i_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++i_;
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("XmlSyntax", "XML error at " + std::to_string(line_) + ":" +
                                 std::to_string(col_) + ": " + msg);
  }

  static bool space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }
  static bool name_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-' || c == '.' || c == ':' || static_cast<unsigned char>(c) >= 0x80;
  }

  void skip_bom() {
    if (starts_with("\xEF\xBB\xBF")) advance(3);
  }
  void skip_space() {
    while (!at_end() && space(peek())) advance();
  }

  void skip_until(std::string_view terminator, const char* what) {
    while (!starts_with(terminator)) {
      if (at_end()) fail(std::string("unterminated ") + what);
      advance();
    }
    advance(terminator.size());
  }

  // Prolog/epilog: whitespace, comments, processing instructions, doctype.
  void skip_misc() {
    while (true) {
      skip_space();
      if (starts_with("<!--")) {
        advance(4);
        skip_until("-->", "comment");
      } else if (starts_with("<?")) {
        advance(2);
        skip_until("?>", "processing instruction");
      } else if (starts_with("<!DOCTYPE")) {
        advance(9);
        while (!at_end() && peek() != '>') {
          if (peek() == '[') fail("DOCTYPE internal subsets are not supported");
          advance();
        }
        if (at_end()) fail("unterminated DOCTYPE");
        advance();
      } else {
        return;
      }
    }
  }

  std::string name() {
    std::size_t start = i_;
    if (at_end() || !name_char(peek()) || peek() == '-' || peek() == '.' ||
        (peek() >= '0' && peek() <= '9')) {
      fail("expected a name");
    }
    while (!at_end() && name_char(peek())) advance();
    return std::string(src_.substr(start, i_ - start));
  }

  void entity(std::string& out) {
    advance();  // '&'
    std::size_t start = i_;
    while (!at_end() && peek() != ';') {
      if (i_ - start > 10) fail("malformed entity reference");
      advance();
    }
    if (at_end()) fail("unterminated entity reference");
    std::string_view ref = src_.substr(start, i_ - start);
    advance();  // ';'
    if (ref == "lt") out += '<';
    else if (ref == "gt") out += '>';
    else if (ref == "amp") out += '&';
    else if (ref == "quot") out += '"';
    else if (ref == "apos") out += '\'';
    else if (ref.size() > 1 && ref[0] == '#') {
      std::uint32_t cp = 0;
      bool hex = ref[1] == 'x';
      std::string_view digits = ref.substr(hex ? 2 : 1);
      if (digits.empty()) fail("malformed character reference");
      for (char c : digits) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (hex && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else fail("malformed character reference");
        cp = cp * (hex ? 16u : 10u) + static_cast<std::uint32_t>(d);
        if (cp > 0x10FFFF) fail("character reference out of range");
      }
      append_utf8(out, cp);
    } else {
      fail("unknown entity '&" + std::string(ref) + ";'");
    }
  }

  std::string attribute_value() {
    char quote = peek();
    if (quote != '"' && quote != '\'') fail("expected quoted attribute value");
    advance();
    std::string value;
    while (true) {
      if (at_end()) fail("unterminated attribute value");
      char c = peek();
      if (c == quote) break;
      if (c == '<') fail("'<' in attribute value");
      if (c == '&') {
        entity(value);
      } else {
        value += c;
        advance();
      }
    }
    advance();
    return value;
  }

  Element element() {
    Element el;
    el.pos = here();
    advance();  // '<'
    el.name = name();
    while (true) {
      bool had_space = !at_end() && space(peek());
      skip_space();
      if (at_end()) fail("unterminated start tag <" + el.name + ">");
      if (starts_with("/>")) {
        advance(2);
        return el;
      }
      if (peek() == '>') {
        advance();
        break;
      }
      if (!had_space) fail("expected whitespace between attributes");
      std::string key = name();
      skip_space();
      if (peek() != '=') fail("expected '=' after attribute " + key);
      advance();
      skip_space();
      if (el.attribute(key)) fail("duplicate attribute " + key);
      el.attributes.emplace_back(std::move(key), attribute_value());
    }

    std::size_t inner_start = i_;
    while (true) {
      if (at_end()) fail("missing end tag </" + el.name + ">");
      if (starts_with("</")) {
        std::size_t inner_end = i_;
        advance(2);
        std::string closing = name();
        if (closing != el.name) {
          fail("mismatched end tag </" + closing + "> for <" + el.name + ">");
        }
        skip_space();
        if (peek() != '>') fail("expected '>'");
        advance();
        el.inner = std::string(src_.substr(inner_start, inner_end - inner_start));
        return el;
      }
      if (starts_with("<!--")) {
        advance(4);
        skip_until("-->", "comment");
      } else if (starts_with("<![CDATA[")) {
        advance(9);
        std::size_t start = i_;
        while (!starts_with("]]>")) {
          if (at_end()) fail("unterminated CDATA section");
          advance();
        }
        el.text += src_.substr(start, i_ - start);
        advance(3);
      } else if (starts_with("<?")) {
        advance(2);
        skip_until("?>", "processing instruction");
      } else if (peek() == '<') {
        el.children.push_back(element());
      } else if (peek() == '&') {
        entity(el.text);
      } else {
        el.text += peek();
        advance();
      }
    }
  }

  std::string_view src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace detail

inline Element parse(std::string_view text) { return detail::Reader(text).document(); }

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Concatenated character data of an element and all its descendants.
inline std::string deep_text(const Element& e) {
  // `text` only holds the element's own data; interleaving with children is
  // not preserved, which is fine for labels and prompts.
  std::string out = e.text;
  for (const auto& c : e.children) out += deep_text(c);
  return out;
}

}  // namespace storyflow::xml
