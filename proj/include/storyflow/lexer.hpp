#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "storyflow/error.hpp"

namespace storyflow {

enum class TokenKind {
  Identifier,
  Number,
  String,
  // keywords
  KwVar,
  KwFunction,
  KwReturn,
  KwIf,
  KwElse,
  KwWhile,
  KwTrue,
  KwFalse,
  KwNull,
  KwGlobal,
  // punctuation
  LParen,
  RParen,
  LBracket,
  RBracket,
  LBrace,
  RBrace,
  Comma,
  Colon,
  Semicolon,
  Dot,
  Bang,
  Plus,
  Minus,
  Star,
  Slash,
  Percent,
  Less,
  LessEqual,
  Greater,
  GreaterEqual,
  EqualEqual,
  BangEqual,
  AndAnd,
  OrOr,
  Assign,
  End,
};

struct Token {
  TokenKind kind = TokenKind::End;
  std::string text;  // identifier name, decoded string literal, or lexeme
  double number = 0.0;
  SourcePos pos;
};

namespace detail {

struct Keyword {
  std::string_view word;
  TokenKind kind;
};

inline constexpr Keyword kKeywords[] = {
    {"var", TokenKind::KwVar},       {"function", TokenKind::KwFunction},
    {"return", TokenKind::KwReturn}, {"if", TokenKind::KwIf},
    {"else", TokenKind::KwElse},     {"while", TokenKind::KwWhile},
    {"true", TokenKind::KwTrue},     {"false", TokenKind::KwFalse},
    {"null", TokenKind::KwNull},     {"Global", TokenKind::KwGlobal},
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_trivia();
      if (at_end()) break;
      out.push_back(next());
    }
    return out;
  }

private:
  bool at_end() const { return i_ >= src_.size(); }
  char peek(std::size_t ahead = 0) const {
    return i_ + ahead < src_.size() ? src_[i_ + ahead] : '\0';
  }
  SourcePos here() const { return {line_, col_}; }

  char advance() {
    char c = src_[i_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  [[noreturn]] void fail(const std::string& msg, SourcePos at) const {
    throw ScriptError(ScriptPhase::Lex, msg, at, "ScriptLex");
  }

  void skip_trivia() {
    while (!at_end()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (!at_end() && peek() != '\n') advance();
      } else if (c == '/' && peek(1) == '*') {
        SourcePos start = here();
        advance();
        advance();
        while (true) {
          if (at_end()) fail("unterminated comment", start);
          if (peek() == '*' && peek(1) == '/') {
            advance();
            advance();
            break;
          }
          advance();
        }
      } else {
        break;
      }
    }
  }

  static bool ident_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
  }
  static bool ident_part(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
  static bool digit(char c) { return c >= '0' && c <= '9'; }

  Token make(TokenKind k, std::string text, SourcePos at) {
    Token t;
    t.kind = k;
    t.text = std::move(text);
    t.pos = at;
    return t;
  }

  Token next() {
    SourcePos at = here();
    char c = peek();
    if (ident_start(c)) {
      std::size_t start = i_;
      while (!at_end() && ident_part(peek())) advance();
      std::string word(src_.substr(start, i_ - start));
      for (const auto& kw : kKeywords) {
        if (kw.word == word) return make(kw.kind, word, at);
      }
      return make(TokenKind::Identifier, word, at);
    }
    if (digit(c)) {
      std::size_t start = i_;
      while (!at_end() && digit(peek())) advance();
      if (peek() == '.' && digit(peek(1))) {
        advance();
        while (!at_end() && digit(peek())) advance();
      }
      std::string lexeme(src_.substr(start, i_ - start));
      Token t = make(TokenKind::Number, lexeme, at);
      std::from_chars(lexeme.data(), lexeme.data() + lexeme.size(), t.number);
      return t;
    }
    if (c == '\'' || c == '"') return string_literal(at);

    advance();
    auto two = [&](char second, TokenKind yes, TokenKind no, const char* yes_text,
                   const char* no_text) {
      if (peek() == second) {
        advance();
        return make(yes, yes_text, at);
      }
      return make(no, no_text, at);
    };
    switch (c) {
      case '(': return make(TokenKind::LParen, "(", at);
      case ')': return make(TokenKind::RParen, ")", at);
      case '[': return make(TokenKind::LBracket, "[", at);
      case ']': return make(TokenKind::RBracket, "]", at);
      case '{': return make(TokenKind::LBrace, "{", at);
      case '}': return make(TokenKind::RBrace, "}", at);
      case ',': return make(TokenKind::Comma, ",", at);
      case ':': return make(TokenKind::Colon, ":", at);
      case ';': return make(TokenKind::Semicolon, ";", at);
      case '.': return make(TokenKind::Dot, ".", at);
      case '+': return make(TokenKind::Plus, "+", at);
      case '-': return make(TokenKind::Minus, "-", at);
      case '*': return make(TokenKind::Star, "*", at);
      case '/': return make(TokenKind::Slash, "/", at);
      case '%': return make(TokenKind::Percent, "%", at);
      case '!': return two('=', TokenKind::BangEqual, TokenKind::Bang, "!=", "!");
      case '<': return two('=', TokenKind::LessEqual, TokenKind::Less, "<=", "<");
      case '>': return two('=', TokenKind::GreaterEqual, TokenKind::Greater, ">=", ">");
      case '=': return two('=', TokenKind::EqualEqual, TokenKind::Assign, "==", "=");
      case '&':
        if (peek() == '&') {
          advance();
          return make(TokenKind::AndAnd, "&&", at);
        }
        break;
      case '|':
        if (peek() == '|') {
          advance();
          return make(TokenKind::OrOr, "||", at);
        }
        break;
      default: break;
    }
    fail(std::string("illegal character '") + c + "'", at);
  }

  Token string_literal(SourcePos at) {
    char quote = advance();
    std::string value;
    while (true) {
      if (at_end()) fail("unterminated string", at);
      char c = advance();
      if (c == quote) break;
      if (c == '\\') {
        if (at_end()) fail("unterminated string", at);
        SourcePos esc = here();
        char e = advance();
        switch (e) {
          case '\\': value += '\\'; break;
          case '\'': value += '\''; break;
          case '"': value += '"'; break;
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          default: fail(std::string("unknown escape '\\") + e + "'", esc);
        }
        continue;
      }
      value += c;
    }
    return make(TokenKind::String, std::move(value), at);
  }

  std::string_view src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace detail

/// Splits Action-Language source into tokens. The trailing End token is not
/// included.
inline std::vector<Token> tokenize(std::string_view source) {
  return detail::Lexer(source).run();
}

}  // namespace storyflow
