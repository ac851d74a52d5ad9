#pragma once

#include <charconv>
#include <string>

#include "storyflow/ast.hpp"
#include "storyflow/value.hpp"

namespace storyflow {

namespace detail {

// Every compound expression is fully parenthesized so reparsing reproduces the
// same tree regardless of precedence.
class AstPrinter {
public:
  std::string out;

  void program(const ast::Program& p) {
    for (const auto& s : p.stmts) stmt(s, 0);
  }

  void stmt(const ast::Stmt& s, int indent) {
    pad(indent);
    std::visit([&](const auto& n) { print_stmt(n, indent); }, s.node);
    out += '\n';
  }

  void expr(const ast::Expr& e) {
    std::visit([&](const auto& n) { print_expr(n); }, e.node);
  }

private:
  void pad(int indent) { out.append(static_cast<std::size_t>(indent) * 2, ' '); }

  void block_body(const ast::StmtList& stmts, int indent) {
    out += "{\n";
    for (const auto& s : stmts) stmt(s, indent + 1);
    pad(indent);
    out += '}';
  }

  void print_stmt(const ast::VarDecl& n, int) {
    out += "var " + n.name;
    if (n.init) {
      out += " = ";
      expr(*n.init);
    }
    out += ';';
  }
  void print_stmt(const ast::ExprStmt& n, int) {
    expr(n.expr);
    out += ';';
  }
  void print_stmt(const ast::Block& n, int indent) { block_body(n.stmts, indent); }
  void print_stmt(const ast::If& n, int indent) {
    out += "if (";
    expr(n.cond);
    out += ") ";
    nested(*n.then_branch, indent);
    if (n.else_branch) {
      out += " else ";
      nested(**n.else_branch, indent);
    }
  }
  void print_stmt(const ast::While& n, int indent) {
    out += "while (";
    expr(n.cond);
    out += ") ";
    nested(*n.body, indent);
  }
  void print_stmt(const ast::Return& n, int) {
    out += "return";
    if (n.value) {
      out += ' ';
      expr(*n.value);
    }
    out += ';';
  }

  // Branch bodies are always printed as blocks; a non-block body is wrapped in
  // a block only if it already was one, so print it inline otherwise.
  void nested(const ast::Stmt& s, int indent) {
    if (const auto* b = std::get_if<ast::Block>(&s.node)) {
      block_body(b->stmts, indent);
    } else {
      std::visit([&](const auto& n) { print_stmt(n, indent); }, s.node);
    }
  }

  void print_expr(const ast::NullLit&) { out += "null"; }
  void print_expr(const ast::BoolLit& n) { out += n.value ? "true" : "false"; }
  void print_expr(const ast::NumberLit& n) {
    char buf[400];
    auto r = std::to_chars(buf, buf + sizeof buf, n.value, std::chars_format::fixed);
    out.append(buf, r.ptr);
  }
  void print_expr(const ast::StringLit& n) { out += quote_string(n.value); }
  void print_expr(const ast::Identifier& n) { out += n.name; }
  void print_expr(const ast::GlobalRef&) { out += "Global"; }
  void print_expr(const ast::ListLit& n) {
    out += '[';
    for (std::size_t i = 0; i < n.items.size(); ++i) {
      if (i) out += ", ";
      expr(n.items[i]);
    }
    out += ']';
  }
  void print_expr(const ast::MapLit& n) {
    out += '{';
    for (std::size_t i = 0; i < n.entries.size(); ++i) {
      if (i) out += ", ";
      out += quote_string(n.entries[i].key);
      out += ": ";
      expr(n.entries[i].value);
    }
    out += '}';
  }
  void print_expr(const ast::FunctionLit& n) {
    out += "function(";
    for (std::size_t i = 0; i < n.params.size(); ++i) {
      if (i) out += ", ";
      out += n.params[i];
    }
    out += ") {";
    for (const auto& s : *n.body.stmts) {
      out += ' ';
      std::visit([&](const auto& node) { print_stmt(node, 0); }, s.node);
    }
    out += " }";
  }
  void print_expr(const ast::Call& n) {
    expr(*n.callee);
    out += '(';
    for (std::size_t i = 0; i < n.args.size(); ++i) {
      if (i) out += ", ";
      expr(n.args[i]);
    }
    out += ')';
  }
  void print_expr(const ast::Index& n) {
    expr(*n.object);
    out += '[';
    expr(*n.key);
    out += ']';
  }
  void print_expr(const ast::Unary& n) {
    out += n.op == ast::UnaryOp::Not ? "(!" : "(-";
    expr(*n.operand);
    out += ')';
  }
  void print_expr(const ast::Binary& n) {
    out += '(';
    expr(*n.lhs);
    out += ' ';
    out += ast::to_string(n.op);
    out += ' ';
    expr(*n.rhs);
    out += ')';
  }
  void print_expr(const ast::Assign& n) {
    out += '(';
    expr(*n.target);
    out += " = ";
    expr(*n.value);
    out += ')';
  }
};

}  // namespace detail

inline std::string print_program(const ast::Program& p) {
  detail::AstPrinter printer;
  printer.program(p);
  return printer.out;
}

inline std::string print_expression(const ast::Expr& e) {
  detail::AstPrinter printer;
  printer.expr(e);
  return printer.out;
}

}  // namespace storyflow
