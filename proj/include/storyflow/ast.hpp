#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "storyflow/error.hpp"

namespace storyflow::ast {

/// Owning pointer with value semantics: deep copy, compare by pointee.
template <class T>
class Box {
public:
  Box(T value) : p_(std::make_unique<T>(std::move(value))) {}
  Box(const Box& other) : p_(std::make_unique<T>(*other.p_)) {}
  Box(Box&&) noexcept = default;
  Box& operator=(const Box& other) {
    if (this != &other) p_ = std::make_unique<T>(*other.p_);
    return *this;
  }
  Box& operator=(Box&&) noexcept = default;

  T& operator*() { return *p_; }
  const T& operator*() const { return *p_; }
  T* operator->() { return p_.get(); }
  const T* operator->() const { return p_.get(); }

  bool operator==(const Box& other) const { return *p_ == *other.p_; }

private:
  std::unique_ptr<T> p_;
};

struct Expr;
struct Stmt;

using StmtList = std::vector<Stmt>;

/// Function bodies are shared so closures can outlive the program they were
/// parsed from.
struct SharedBody {
  std::shared_ptr<const StmtList> stmts;
  bool operator==(const SharedBody& other) const;
};

enum class UnaryOp { Not, Negate };
enum class BinaryOp { Mul, Div, Mod, Add, Sub, Less, LessEq, Greater, GreaterEq, Eq, NotEq, And, Or };

inline const char* to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Mod: return "%";
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Less: return "<";
    case BinaryOp::LessEq: return "<=";
    case BinaryOp::Greater: return ">";
    case BinaryOp::GreaterEq: return ">=";
    case BinaryOp::Eq: return "==";
    case BinaryOp::NotEq: return "!=";
    case BinaryOp::And: return "&&";
    case BinaryOp::Or: return "||";
  }
  return "?";
}

struct NullLit {
  bool operator==(const NullLit&) const = default;
};
struct BoolLit {
  bool value;
  bool operator==(const BoolLit&) const = default;
};
struct NumberLit {
  double value;
  bool operator==(const NumberLit&) const = default;
};
struct StringLit {
  std::string value;
  bool operator==(const StringLit&) const = default;
};
struct Identifier {
  std::string name;
  bool operator==(const Identifier&) const = default;
};
struct GlobalRef {
  bool operator==(const GlobalRef&) const = default;
};
struct ListLit {
  std::vector<Expr> items;
  bool operator==(const ListLit&) const;
};
struct MapEntry;
struct MapLit {
  std::vector<MapEntry> entries;
  bool operator==(const MapLit&) const;
};
struct FunctionLit {
  std::vector<std::string> params;
  SharedBody body;
  bool operator==(const FunctionLit&) const = default;
};
struct Call {
  Box<Expr> callee;
  std::vector<Expr> args;
  bool operator==(const Call&) const;
};
/// `a[k]`; member access `a.b` parses to Index with a string key.
struct Index {
  Box<Expr> object;
  Box<Expr> key;
  bool operator==(const Index&) const = default;
};
struct Unary {
  UnaryOp op;
  Box<Expr> operand;
  bool operator==(const Unary&) const = default;
};
struct Binary {
  BinaryOp op;
  Box<Expr> lhs;
  Box<Expr> rhs;
  bool operator==(const Binary&) const = default;
};
struct Assign {
  Box<Expr> target;  // Identifier or Index
  Box<Expr> value;
  bool operator==(const Assign&) const = default;
};

struct Expr {
  using Node = std::variant<NullLit, BoolLit, NumberLit, StringLit, Identifier, GlobalRef, ListLit,
                            MapLit, FunctionLit, Call, Index, Unary, Binary, Assign>;
  Node node;
  SourcePos pos;

  // Positions are ignored so that print-then-reparse compares equal.
  bool operator==(const Expr& other) const { return node == other.node; }
};

struct MapEntry {
  std::string key;
  Expr value;
  bool operator==(const MapEntry&) const = default;
};

inline bool ListLit::operator==(const ListLit& o) const { return items == o.items; }
inline bool MapLit::operator==(const MapLit& o) const { return entries == o.entries; }
inline bool Call::operator==(const Call& o) const { return callee == o.callee && args == o.args; }

struct VarDecl {
  std::string name;
  std::optional<Expr> init;
  bool operator==(const VarDecl&) const = default;
};
struct ExprStmt {
  Expr expr;
  bool operator==(const ExprStmt&) const = default;
};
struct Block {
  StmtList stmts;
  bool operator==(const Block&) const;
};
struct If {
  Expr cond;
  Box<Stmt> then_branch;
  std::optional<Box<Stmt>> else_branch;
  bool operator==(const If&) const = default;
};
struct While {
  Expr cond;
  Box<Stmt> body;
  bool operator==(const While&) const = default;
};
struct Return {
  std::optional<Expr> value;
  bool operator==(const Return&) const = default;
};

struct Stmt {
  using Node = std::variant<VarDecl, ExprStmt, Block, If, While, Return>;
  Node node;
  SourcePos pos;
  bool operator==(const Stmt& other) const { return node == other.node; }
};

inline bool Block::operator==(const Block& o) const { return stmts == o.stmts; }

inline bool SharedBody::operator==(const SharedBody& other) const {
  if (stmts == other.stmts) return true;
  if (!stmts || !other.stmts) return false;
  return *stmts == *other.stmts;
}

struct Program {
  StmtList stmts;
  bool operator==(const Program&) const = default;
};

}  // namespace storyflow::ast
