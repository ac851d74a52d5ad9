#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "storyflow/ast.hpp"
#include "storyflow/lexer.hpp"

namespace storyflow {

namespace detail {

class Parser {
public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {
    Token end;
    end.kind = TokenKind::End;
    end.text = "end of input";
    end.pos = toks_.empty() ? SourcePos{1, 1} : toks_.back().pos;
    if (!toks_.empty()) end.pos.column += static_cast<int>(toks_.back().text.size());
    toks_.push_back(end);
  }

  ast::Program program() {
    ast::Program p;
    while (!check(TokenKind::End)) p.stmts.push_back(statement(true));
    return p;
  }

  /// A single expression filling the whole input; one trailing ';' allowed.
  ast::Expr lone_expression() {
    ast::Expr e = expression();
    match(TokenKind::Semicolon);
    if (!check(TokenKind::End)) fail("expected end of expression");
    return e;
  }

private:
  static constexpr int kMaxDepth = 200;

  const Token& cur() const { return toks_[i_]; }
  bool check(TokenKind k) const { return cur().kind == k; }
  const Token& advance() {
    const Token& t = toks_[i_];
    if (t.kind != TokenKind::End) ++i_;
    return t;
  }
  bool match(TokenKind k) {
    if (!check(k)) return false;
    advance();
    return true;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ScriptError(ScriptPhase::Parse, msg + " near '" + cur().text + "'", cur().pos,
                      "ScriptParse");
  }

  const Token& expect(TokenKind k, const char* what) {
    if (!check(k)) fail(std::string("expected ") + what);
    return advance();
  }

  struct DepthGuard {
    Parser& p;
    explicit DepthGuard(Parser& parser) : p(parser) {
      if (++p.depth_ > kMaxDepth) p.fail("nesting too deep");
    }
    ~DepthGuard() { --p.depth_; }
  };

  // The final statement of a program may omit its ';' at end of input.
  void terminate_statement(bool top_level) {
    if (match(TokenKind::Semicolon)) return;
    if (top_level && check(TokenKind::End)) return;
    fail("expected ';'");
  }

  ast::Stmt statement(bool top_level) {
    DepthGuard guard(*this);
    SourcePos at = cur().pos;
    switch (cur().kind) {
      case TokenKind::KwVar: {
        advance();
        ast::VarDecl decl;
        decl.name = expect(TokenKind::Identifier, "variable name").text;
        if (match(TokenKind::Assign)) decl.init = expression();
        terminate_statement(top_level);
        return {std::move(decl), at};
      }
      case TokenKind::LBrace: {
        advance();
        ast::Block block;
        while (!check(TokenKind::RBrace)) {
          if (check(TokenKind::End)) fail("expected '}'");
          block.stmts.push_back(statement(false));
        }
        advance();
        return {std::move(block), at};
      }
      case TokenKind::KwIf: {
        advance();
        expect(TokenKind::LParen, "'('");
        ast::Expr cond = expression();
        expect(TokenKind::RParen, "')'");
        ast::Stmt then_branch = statement(false);
        ast::If node{std::move(cond), std::move(then_branch), std::nullopt};
        if (match(TokenKind::KwElse)) node.else_branch = ast::Box<ast::Stmt>(statement(false));
        return {std::move(node), at};
      }
      case TokenKind::KwWhile: {
        advance();
        expect(TokenKind::LParen, "'('");
        ast::Expr cond = expression();
        expect(TokenKind::RParen, "')'");
        ast::Stmt body = statement(false);
        return {ast::While{std::move(cond), std::move(body)}, at};
      }
      case TokenKind::KwReturn: {
        advance();
        ast::Return ret;
        if (!check(TokenKind::Semicolon) && !check(TokenKind::End) && !check(TokenKind::RBrace)) {
          ret.value = expression();
        }
        terminate_statement(top_level);
        return {std::move(ret), at};
      }
      default: {
        ast::Expr e = expression();
        terminate_statement(top_level);
        return {ast::ExprStmt{std::move(e)}, at};
      }
    }
  }

  ast::Expr expression() {
    DepthGuard guard(*this);
    return assignment();
  }

  ast::Expr assignment() {
    ast::Expr lhs = logical_or();
    if (check(TokenKind::Assign)) {
      SourcePos at = cur().pos;
      bool assignable = std::holds_alternative<ast::Identifier>(lhs.node) ||
                        std::holds_alternative<ast::Index>(lhs.node);
      if (!assignable) fail("invalid assignment target");
      advance();
      ast::Expr rhs = assignment();
      return {ast::Assign{std::move(lhs), std::move(rhs)}, at};
    }
    return lhs;
  }

  template <class Next>
  ast::Expr binary_level(Next next, std::initializer_list<std::pair<TokenKind, ast::BinaryOp>> ops) {
    ast::Expr lhs = (this->*next)();
    while (true) {
      bool matched = false;
      for (auto [kind, op] : ops) {
        if (check(kind)) {
          SourcePos at = advance().pos;
          ast::Expr rhs = (this->*next)();
          lhs = ast::Expr{ast::Binary{op, std::move(lhs), std::move(rhs)}, at};
          matched = true;
          break;
        }
      }
      if (!matched) return lhs;
    }
  }

  ast::Expr logical_or() {
    return binary_level(&Parser::logical_and, {{TokenKind::OrOr, ast::BinaryOp::Or}});
  }
  ast::Expr logical_and() {
    return binary_level(&Parser::equality, {{TokenKind::AndAnd, ast::BinaryOp::And}});
  }
  ast::Expr equality() {
    return binary_level(&Parser::relational, {{TokenKind::EqualEqual, ast::BinaryOp::Eq},
                                              {TokenKind::BangEqual, ast::BinaryOp::NotEq}});
  }
  ast::Expr relational() {
    return binary_level(&Parser::additive, {{TokenKind::Less, ast::BinaryOp::Less},
                                            {TokenKind::LessEqual, ast::BinaryOp::LessEq},
                                            {TokenKind::Greater, ast::BinaryOp::Greater},
                                            {TokenKind::GreaterEqual, ast::BinaryOp::GreaterEq}});
  }
  ast::Expr additive() {
    return binary_level(&Parser::multiplicative, {{TokenKind::Plus, ast::BinaryOp::Add},
                                                  {TokenKind::Minus, ast::BinaryOp::Sub}});
  }
  ast::Expr multiplicative() {
    return binary_level(&Parser::unary, {{TokenKind::Star, ast::BinaryOp::Mul},
                                         {TokenKind::Slash, ast::BinaryOp::Div},
                                         {TokenKind::Percent, ast::BinaryOp::Mod}});
  }

  ast::Expr unary() {
    DepthGuard guard(*this);
    SourcePos at = cur().pos;
    if (match(TokenKind::Bang)) return {ast::Unary{ast::UnaryOp::Not, unary()}, at};
    if (match(TokenKind::Minus)) return {ast::Unary{ast::UnaryOp::Negate, unary()}, at};
    return postfix();
  }

  ast::Expr postfix() {
    ast::Expr e = primary();
    while (true) {
      SourcePos at = cur().pos;
      if (match(TokenKind::LParen)) {
        std::vector<ast::Expr> args;
        if (!check(TokenKind::RParen)) {
          do {
            args.push_back(expression());
          } while (match(TokenKind::Comma));
        }
        expect(TokenKind::RParen, "')'");
        e = ast::Expr{ast::Call{std::move(e), std::move(args)}, at};
      } else if (match(TokenKind::LBracket)) {
        ast::Expr key = expression();
        expect(TokenKind::RBracket, "']'");
        e = ast::Expr{ast::Index{std::move(e), std::move(key)}, at};
      } else if (match(TokenKind::Dot)) {
        const Token& name = cur();
        if (name.kind != TokenKind::Identifier && !is_keyword_token(name.kind)) {
          fail("expected member name");
        }
        ast::Expr key{ast::StringLit{name.text}, name.pos};
        advance();
        e = ast::Expr{ast::Index{std::move(e), std::move(key)}, at};
      } else {
        return e;
      }
    }
  }

  static bool is_keyword_token(TokenKind k) {
    return k >= TokenKind::KwVar && k <= TokenKind::KwGlobal;
  }

  ast::Expr primary() {
    const Token& t = cur();
    SourcePos at = t.pos;
    switch (t.kind) {
      case TokenKind::KwNull: advance(); return {ast::NullLit{}, at};
      case TokenKind::KwTrue: advance(); return {ast::BoolLit{true}, at};
      case TokenKind::KwFalse: advance(); return {ast::BoolLit{false}, at};
      case TokenKind::Number: {
        double v = t.number;
        advance();
        return {ast::NumberLit{v}, at};
      }
      case TokenKind::String: {
        std::string v = t.text;
        advance();
        return {ast::StringLit{std::move(v)}, at};
      }
      case TokenKind::Identifier: {
        std::string name = t.text;
        advance();
        return {ast::Identifier{std::move(name)}, at};
      }
      case TokenKind::KwGlobal: advance(); return {ast::GlobalRef{}, at};
      case TokenKind::LParen: {
        advance();
        ast::Expr inner = expression();
        expect(TokenKind::RParen, "')'");
        return inner;
      }
      case TokenKind::LBracket: {
        advance();
        ast::ListLit list;
        if (!check(TokenKind::RBracket)) {
          do {
            list.items.push_back(expression());
          } while (match(TokenKind::Comma));
        }
        expect(TokenKind::RBracket, "']'");
        return {std::move(list), at};
      }
      case TokenKind::LBrace: {
        advance();
        ast::MapLit map;
        if (!check(TokenKind::RBrace)) {
          do {
            const Token& key = cur();
            if (key.kind != TokenKind::Identifier && key.kind != TokenKind::String) {
              fail("expected map key");
            }
            std::string name = key.text;
            advance();
            expect(TokenKind::Colon, "':'");
            map.entries.push_back(ast::MapEntry{std::move(name), expression()});
          } while (match(TokenKind::Comma));
        }
        expect(TokenKind::RBrace, "'}'");
        return {std::move(map), at};
      }
      case TokenKind::KwFunction: {
        advance();
        expect(TokenKind::LParen, "'('");
        ast::FunctionLit fn;
        if (!check(TokenKind::RParen)) {
          do {
            fn.params.push_back(expect(TokenKind::Identifier, "parameter name").text);
          } while (match(TokenKind::Comma));
        }
        expect(TokenKind::RParen, "')'");
        expect(TokenKind::LBrace, "'{'");
        auto body = std::make_shared<ast::StmtList>();
        while (!check(TokenKind::RBrace)) {
          if (check(TokenKind::End)) fail("expected '}'");
          body->push_back(statement(false));
        }
        advance();
        fn.body.stmts = std::move(body);
        return {std::move(fn), at};
      }
      default: fail("expected expression");
    }
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  int depth_ = 0;
};

}  // namespace detail

inline ast::Program parse_program(std::string_view source) {
  return detail::Parser(tokenize(source)).program();
}

/// Guards (`includeIf`) are single expressions.
inline ast::Expr parse_expression(std::string_view source) {
  return detail::Parser(tokenize(source)).lone_expression();
}

}  // namespace storyflow
