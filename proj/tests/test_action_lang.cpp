#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "storyflow/ast_printer.hpp"
#include "storyflow/interpreter.hpp"
#include "storyflow/lexer.hpp"
#include "storyflow/parser.hpp"
#include "storyflow/snapshot.hpp"

using namespace storyflow;

namespace {

std::vector<TokenKind> kinds(const std::vector<Token>& toks) {
  std::vector<TokenKind> out;
  for (const auto& t : toks) out.push_back(t.kind);
  return out;
}

template <class F>
std::string error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

Value eval(std::string_view src, GlobalSpace& g) {
  HostBindings host = standard_builtins();
  Interpreter interp(g, host);
  return interp.eval_expr(parse_expression(src));
}

Value eval(std::string_view src) {
  GlobalSpace g;
  return eval(src, g);
}

}  // namespace

// --- tokenize --------------------------------------------------------------

TEST(Tokenize, GuardFromCourseFlow) {
  auto toks = tokenize("!Global['initializedAlready']");
  ASSERT_EQ(toks.size(), 5u);
  EXPECT_EQ(kinds(toks), (std::vector<TokenKind>{TokenKind::Bang, TokenKind::KwGlobal,
                                                 TokenKind::LBracket, TokenKind::String,
                                                 TokenKind::RBracket}));
  EXPECT_EQ(toks[3].text, "initializedAlready");
}

TEST(Tokenize, EmptySourceHasNoTokens) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, UnterminatedStringIsLexErrorOnLineOne) {
  try {
    tokenize("'abc");
    FAIL() << "expected ScriptError";
  } catch (const ScriptError& e) {
    EXPECT_EQ(e.phase(), ScriptPhase::Lex);
    EXPECT_EQ(e.line(), 1);
  }
}

TEST(Tokenize, CommentsEscapesAndPositions) {
  auto toks = tokenize("// line\n/* block\n */ x = \"a\\n\\t\\\\\\'\\\"\";");
  ASSERT_EQ(toks.size(), 4u);
  EXPECT_EQ(toks[0].text, "x");
  EXPECT_EQ(toks[0].pos.line, 3);
  EXPECT_EQ(toks[2].text, "a\n\t\\'\"");
}

TEST(Tokenize, NumbersWithFraction) {
  auto toks = tokenize("12 3.25 7.");
  ASSERT_EQ(toks.size(), 4u);
  EXPECT_EQ(toks[0].number, 12.0);
  EXPECT_EQ(toks[1].number, 3.25);
  EXPECT_EQ(toks[3].kind, TokenKind::Dot);
}

TEST(Tokenize, ErrorsAreLexPhase) {
  EXPECT_EQ(error_code([] { tokenize("/* open"); }), "ScriptLex");
  EXPECT_EQ(error_code([] { tokenize("a # b"); }), "ScriptLex");
  EXPECT_EQ(error_code([] { tokenize("a & b"); }), "ScriptLex");
  EXPECT_EQ(error_code([] { tokenize("'\\q'"); }), "ScriptLex");
}

// --- parse_program -------------------------------------------------------------

TEST(Parse, StoredFunctionCallWithMapArgument) {
  auto prog = parse_program("Global['onSurveyComplete']({})");
  ASSERT_EQ(prog.stmts.size(), 1u);
  const auto& es = std::get<ast::ExprStmt>(prog.stmts[0].node);
  const auto& call = std::get<ast::Call>(es.expr.node);
  const auto& callee = std::get<ast::Index>(call.callee->node);
  EXPECT_TRUE(std::holds_alternative<ast::GlobalRef>(callee.object->node));
  EXPECT_EQ(std::get<ast::StringLit>(callee.key->node).value, "onSurveyComplete");
  ASSERT_EQ(call.args.size(), 1u);
  EXPECT_TRUE(std::get<ast::MapLit>(call.args[0].node).entries.empty());
}

TEST(Parse, TwoStatements) {
  EXPECT_EQ(parse_program("var x = 1; x = x + 2;").stmts.size(), 2u);
}

TEST(Parse, MissingSemicolonInsideBlockIsError) {
  try {
    parse_program("if (x) { y = 1 }");
    FAIL();
  } catch (const ScriptError& e) {
    EXPECT_EQ(e.phase(), ScriptPhase::Parse);
    EXPECT_EQ(e.line(), 1);
    EXPECT_EQ(e.column(), 16);
  }
}

TEST(Parse, SemicolonRequiredBetweenStatements) {
  EXPECT_EQ(error_code([] { parse_program("x = 1 y = 2;"); }), "ScriptParse");
  EXPECT_EQ(error_code([] { parse_program("var x = 1"); }), "none");
}

TEST(Parse, PrecedenceTable) {
  // 1 + 2 * 3 == 7 && !false || x = 0  groups as  x = ((((1 + (2*3)) == 7) && (!false)) || ...)
  auto e = parse_expression("a = 1 + 2 * 3 == 7 && !b || c");
  const auto& assign = std::get<ast::Assign>(e.node);
  const auto& orr = std::get<ast::Binary>(assign.value->node);
  EXPECT_EQ(orr.op, ast::BinaryOp::Or);
  const auto& andd = std::get<ast::Binary>(orr.lhs->node);
  EXPECT_EQ(andd.op, ast::BinaryOp::And);
  const auto& eq = std::get<ast::Binary>(andd.lhs->node);
  EXPECT_EQ(eq.op, ast::BinaryOp::Eq);
  const auto& add = std::get<ast::Binary>(eq.lhs->node);
  EXPECT_EQ(add.op, ast::BinaryOp::Add);
  EXPECT_EQ(std::get<ast::Binary>(add.rhs->node).op, ast::BinaryOp::Mul);
}

TEST(Parse, MemberIsIndexSugar) {
  EXPECT_EQ(parse_expression("a.b"), parse_expression("a['b']"));
}

TEST(Parse, RejectsUnsupportedForms) {
  EXPECT_EQ(error_code([] { parse_program("for (;;) {}"); }), "ScriptParse");
  EXPECT_EQ(error_code([] { parse_program("1 = 2;"); }), "ScriptParse");
  EXPECT_EQ(error_code([] { parse_expression("1 +"); }), "ScriptParse");
  EXPECT_EQ(error_code([] { parse_expression("a b"); }), "ScriptParse");
  EXPECT_EQ(error_code([] { parse_program(std::string(500, '(') + "1" + std::string(500, ')')); }),
            "ScriptParse");
}

// --- eval_expr ----------------------------------------------------------------

TEST(Eval, AbsentGlobalReadsNull) {
  Value v = eval("!Global['initializedAlready']");
  ASSERT_TRUE(v.is_bool());
  EXPECT_TRUE(v.as_bool());
}

TEST(Eval, Arithmetic) {
  EXPECT_EQ(eval("1 + 2 * 3").as_number(), 7.0);
  EXPECT_EQ(eval("7 % 4 - 10 / 4").as_number(), 0.5);
  EXPECT_TRUE(std::isnan(eval("1 / 0").as_number()));
  EXPECT_TRUE(std::isnan(eval("5 % 0").as_number()));
}

TEST(Eval, StringConcatenationFormatsOtherOperand) {
  // str() rule: integral numbers print without a fraction.
  EXPECT_EQ(eval("'q' + 2").as_string(), "q2");
  EXPECT_EQ(eval("2.5 + 'x'").as_string(), "2.5x");
  EXPECT_EQ(eval("'n' + null + true").as_string(), "nnulltrue");
  EXPECT_EQ(eval("'l' + [1, 'a']").as_string(), "l[1, 'a']");
}

TEST(Eval, EqualityNeverCoerces) {
  EXPECT_FALSE(eval("1 == '1'").as_bool());
  EXPECT_TRUE(eval("null == null").as_bool());
  EXPECT_FALSE(eval("0 == false").as_bool());
  EXPECT_TRUE(eval("(0/0) != (0/0)").as_bool());
  EXPECT_TRUE(eval("[1, {a: 2}] == [1, {a: 2}]").as_bool());
}

TEST(Eval, ShortCircuitYieldsDecidingOperand) {
  EXPECT_EQ(eval("0 || 'x'").as_string(), "x");
  EXPECT_EQ(eval("'' && 3").as_string(), "");
  EXPECT_EQ(eval("2 && 3").as_number(), 3.0);
}

TEST(Eval, RuntimeErrors) {
  EXPECT_EQ(error_code([] { eval("1(2)"); }), "NotCallable");
  EXPECT_EQ(error_code([] { eval("(5)[0]"); }), "NotIndexable");
  EXPECT_EQ(error_code([] { eval("len(1, 2)"); }), "ArityError");
  EXPECT_EQ(error_code([] { eval("true - 1"); }), "TypeError");
  EXPECT_EQ(error_code([] { eval("nope"); }), "ScriptRuntime");
  EXPECT_EQ(error_code([] { eval("1 < 'a'"); }), "TypeError");
}

TEST(Eval, RuntimeErrorCarriesPosition) {
  try {
    eval("1 +\n  true * 2");
    FAIL();
  } catch (const ScriptError& e) {
    EXPECT_EQ(e.phase(), ScriptPhase::Runtime);
    EXPECT_EQ(e.line(), 2);
  }
}

// --- exec_program -------------------------------------------------------------

TEST(Exec, WhileLoopOverGlobal) {
  GlobalSpace g;
  run_script("Global['n'] = 0; while (Global['n'] < 3) { Global['n'] = Global['n'] + 1; }", g);
  EXPECT_EQ(g.get("n").as_number(), 3.0);
}

TEST(Exec, StoredClosureWithMapArgument) {
  GlobalSpace g;
  run_script("Global['f'] = function(m){ return m['x']; }; Global['r'] = Global['f']({x: 5});", g);
  EXPECT_EQ(g.get("r").as_number(), 5.0);
}

TEST(Exec, InfiniteLoopTripsStepBudget) {
  GlobalSpace g;
  EXPECT_EQ(error_code([&] { run_script("while (true) {}", g); }), "StepBudgetExceeded");
}

TEST(Exec, ShortCircuitSkipsSideEffect) {
  GlobalSpace g;
  run_script("Global['hit']=false; var r = true || (Global['hit']=true);", g);
  EXPECT_FALSE(g.get("hit").as_bool());
}

TEST(Exec, VarScopingAndNoImplicitGlobals) {
  GlobalSpace g;
  run_script("var a = 1; { var a = 2; Global['inner'] = a; } Global['outer'] = a;", g);
  EXPECT_EQ(g.get("inner").as_number(), 2.0);
  EXPECT_EQ(g.get("outer").as_number(), 1.0);
  EXPECT_EQ(error_code([&] { run_script("undeclared = 1;", g); }), "ScriptRuntime");
}

TEST(Exec, ClosuresCaptureByReference) {
  GlobalSpace g;
  run_script(
      "var n = 0; var inc = function() { n = n + 1; return n; };"
      "inc(); inc(); Global['n'] = n;",
      g);
  EXPECT_EQ(g.get("n").as_number(), 2.0);
}

TEST(Exec, ReturnCompletion) {
  GlobalSpace g;
  HostBindings host = standard_builtins();
  Interpreter interp(g, host);
  auto c = interp.exec_program(parse_program("if (true) { return 4; } Global['x'] = 1;"));
  EXPECT_TRUE(c.returned);
  EXPECT_EQ(c.value.as_number(), 4.0);
  EXPECT_FALSE(g.contains("x"));
}

TEST(Exec, DeterministicOnIdenticalInputs) {
  const char* src =
      "var l = []; var i = 0; while (i < 20) { push(l, i * 7 % 5); i = i + 1; }"
      "Global['l'] = l; Global['k'] = keys({z: 1, a: 2});";
  GlobalSpace a, b;
  run_script(src, a);
  run_script(src, b);
  EXPECT_TRUE(globals_equal(a, b));
}

TEST(Exec, GuardEntryPointRejectsWrites) {
  GlobalSpace g;
  HostBindings host = standard_builtins();
  Interpreter interp(g, host);
  EXPECT_EQ(error_code([&] { interp.eval_guard(parse_expression("Global['x'] = 1")); }),
            "GuardSideEffect");
  EXPECT_EQ(g.write_log(), std::vector<std::string>{"x"});
  EXPECT_FALSE(g.contains("x"));
  EXPECT_EQ(error_code([&] { interp.eval_guard(parse_expression("push([], 1)")); }),
            "GuardSideEffect");
  // reads and local computation are fine
  EXPECT_TRUE(truthy(interp.eval_guard(parse_expression("len([1]) == 1 && !Global['x']"))));
  EXPECT_TRUE(g.write_log().empty());
}

// --- truthy -------------------------------------------------------------------

TEST(Truthy, Table) {
  EXPECT_FALSE(truthy(Value{}));
  EXPECT_FALSE(truthy(Value(false)));
  EXPECT_FALSE(truthy(Value(0.0)));
  EXPECT_FALSE(truthy(Value(std::nan(""))));
  EXPECT_FALSE(truthy(Value("")));
  EXPECT_TRUE(truthy(Value("0")));
  EXPECT_TRUE(truthy(Value(-1.5)));
  EXPECT_TRUE(truthy(Value::list()));
  EXPECT_TRUE(truthy(Value::map()));
}

// --- str formatting -------------------------------------------------------------

TEST(Display, NumberAndContainerFormatting) {
  EXPECT_EQ(to_display(Value(3.0)), "3");
  EXPECT_EQ(to_display(Value(-0.0)), "0");
  EXPECT_EQ(to_display(Value(0.1)), "0.1");
  EXPECT_EQ(to_display(Value(1e21)), "1000000000000000000000");
  EXPECT_EQ(to_display(Value::map({{"b", 1}, {"a", "x"}, {"not id", Value{}}})),
            "{a: 'x', b: 1, 'not id': null}");
}

// --- snapshot / restore ---------------------------------------------------------

TEST(Snapshot, SingleBoolean) {
  GlobalSpace g;
  g.set("initializedAlready", true);
  auto snap = snapshot_global(g);
  EXPECT_EQ(snapshot_text(snap), R"({"initializedAlready":true})");
  EXPECT_TRUE(snap.skipped.empty());
}

TEST(Snapshot, EmptyAndFunctionSkipping) {
  GlobalSpace g;
  EXPECT_EQ(snapshot_text(snapshot_global(g)), "{}");
  run_script("Global['f'] = function() { return 1; }; Global['n'] = 1;", g);
  auto snap = snapshot_global(g);
  EXPECT_EQ(snap.skipped, std::vector<std::string>{"f"});
  EXPECT_TRUE(snap.document.contains("n"));
  EXPECT_FALSE(snap.document.contains("f"));
}

TEST(Snapshot, CyclesAreRejected) {
  GlobalSpace g;
  run_script("var l = [1]; push(l, l); Global['l'] = l;", g);
  EXPECT_EQ(error_code([&] { snapshot_global(g); }), "CyclicData");
  GlobalSpace h;
  run_script("Global['self'] = Global;", h);
  EXPECT_EQ(error_code([&] { snapshot_global(h); }), "CyclicData");
}

TEST(Restore, RoundTripNested) {
  GlobalSpace g;
  run_script("Global['a'] = [1, 'x', {b: null}];", g);
  GlobalSpace back = restore_global(snapshot_text(snapshot_global(g)));
  // structural oracle: compare against an independently built value
  Value expected = Value::list({1, "x", Value::map({{"b", Value{}}})});
  EXPECT_TRUE(values_equal(back.get("a"), expected));
  EXPECT_TRUE(globals_equal(back, g));
}

TEST(Restore, EmptyAndTruncated) {
  EXPECT_EQ(restore_global(std::string_view("{}")).size(), 0u);
  EXPECT_EQ(error_code([] { restore_global(std::string_view(R"({"a":[1,2)")); }),
            "MalformedSnapshot");
  EXPECT_EQ(error_code([] { restore_global(std::string_view("[]")); }), "MalformedSnapshot");
}

TEST(Restore, NaNAndDollarKeysSurvive) {
  GlobalSpace g;
  g.set("nan", std::nan(""));
  g.set("m", Value::map({{"$nan", true}, {"$map", 1}}));
  GlobalSpace back = restore_global(snapshot_text(snapshot_global(g)));
  EXPECT_TRUE(std::isnan(back.get("nan").as_number()));
  EXPECT_TRUE(values_equal(back.get("m"), g.get("m")));
}

// Property: restore(snapshot(g)) == g without functions, over generated values.
namespace {

Value random_value(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth > 2 ? 4 : 6);
  switch (pick(rng)) {
    case 0: return Value{};
    case 1: return Value(rng() % 2 == 0);
    case 2: return Value(static_cast<double>(static_cast<int>(rng() % 2001) - 1000) / 8.0);
    case 3: return Value(std::nan(""));
    case 4: {
      std::string s;
      static const char* pieces[] = {"a", "b", "$", "'", "\"", "\\", "\n", "\xc3\xa9"};
      for (unsigned i = rng() % 6; i > 0; --i) s += pieces[rng() % 8];
      return Value(s);
    }
    case 5: {
      List items;
      for (unsigned i = rng() % 4; i > 0; --i) items.push_back(random_value(rng, depth + 1));
      return Value::list(std::move(items));
    }
    default: {
      Map m;
      for (unsigned i = rng() % 4; i > 0; --i) {
        m[std::string(1, "a$bc"[rng() % 4]) + std::to_string(rng() % 3)] = random_value(rng, depth + 1);
      }
      return Value::map(std::move(m));
    }
  }
}

bool same_with_nan(const Value& a, const Value& b) {
  if (a.is_number() && b.is_number() && std::isnan(a.as_number())) {
    return std::isnan(b.as_number());
  }
  if (a.type() != b.type()) return false;
  if (a.is_list()) {
    const auto& x = *a.as_list();
    const auto& y = *b.as_list();
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!same_with_nan(x[i], y[i])) return false;
    }
    return true;
  }
  if (a.is_map()) {
    const auto& x = *a.as_map();
    const auto& y = *b.as_map();
    if (x.size() != y.size()) return false;
    for (const auto& [k, v] : x) {
      auto it = y.find(k);
      if (it == y.end() || !same_with_nan(v, it->second)) return false;
    }
    return true;
  }
  return values_equal(a, b);
}

}  // namespace

TEST(RestoreProperty, SnapshotRoundTripOverGeneratedGlobals) {
  std::mt19937 rng(1234);
  for (int round = 0; round < 300; ++round) {
    GlobalSpace g;
    for (unsigned i = rng() % 6; i > 0; --i) g.set("k" + std::to_string(rng() % 10), random_value(rng, 0));
    g.set("fn", make_host("noop", 0, 0, [](const HostCall&) { return Value{}; }));
    auto snap = snapshot_global(g);
    GlobalSpace back = restore_global(snapshot_text(snap));
    EXPECT_EQ(snap.skipped, std::vector<std::string>{"fn"});
    g.erase("fn");
    ASSERT_TRUE(same_with_nan(Value(g.handle()), Value(back.handle()))) << snapshot_text(snap);
  }
}

// Property: parse(print(parse(src))) == parse(src) over generated programs.
namespace {

class ProgramGen {
public:
  explicit ProgramGen(unsigned seed) : rng_(seed) {}

  std::string program() {
    std::string out;
    for (int i = static_cast<int>(rng_() % 5) + 1; i > 0; --i) out += stmt(0);
    return out;
  }

private:
  int pick(int n) { return static_cast<int>(rng_() % static_cast<unsigned>(n)); }

  std::string ident() { return std::string(1, "abxyz"[pick(5)]); }

  std::string expr(int d) {
    if (d > 3) return atom();
    switch (pick(9)) {
      case 0: return atom();
      case 1: {
        static const char* ops[] = {"+", "-", "*", "/", "%", "<", "<=", ">", ">=", "==", "!=", "&&", "||"};
        return expr(d + 1) + " " + ops[pick(13)] + " " + expr(d + 1);
      }
      case 2: return (pick(2) ? "!" : "-") + std::string("(") + expr(d + 1) + ")";
      case 3: return "(" + expr(d + 1) + ")";
      case 4: return ident() + "(" + expr(d + 1) + ", " + expr(d + 1) + ")";
      case 5: return ident() + "[" + expr(d + 1) + "]." + ident();
      case 6: return "[" + expr(d + 1) + ", " + atom() + "]";
      case 7: return "{" + ident() + ": " + expr(d + 1) + ", 'k y': " + atom() + "}";
      default: return "function(p, q) { return " + expr(d + 1) + "; }";
    }
  }

  std::string atom() {
    switch (pick(7)) {
      case 0: return "null";
      case 1: return pick(2) ? "true" : "false";
      case 2: return std::to_string(pick(1000));
      case 3: return std::to_string(pick(100)) + "." + std::to_string(pick(100));
      case 4: return "'s\\n\\'" + ident() + "'";
      case 5: return "Global['" + ident() + "']";
      default: return ident();
    }
  }

  std::string stmt(int d) {
    switch (d > 2 ? pick(3) : pick(7)) {
      case 0: return "var " + ident() + " = " + expr(0) + ";\n";
      case 1: return ident() + " = " + expr(0) + ";\n";
      case 2: return "Global['" + ident() + "'] = " + expr(0) + ";\n";
      case 3: return "if (" + expr(0) + ") " + stmt(d + 1) + (pick(2) ? " else " + stmt(d + 1) : "");
      case 4: return "while (" + expr(0) + ") { " + stmt(d + 1) + "}\n";
      case 5: return "{ " + stmt(d + 1) + stmt(d + 1) + "}\n";
      default: return "return " + expr(0) + ";\n";
    }
  }

  std::mt19937 rng_;
};

}  // namespace

TEST(ParseProperty, PrintThenReparseIsFixpoint) {
  ProgramGen gen(99);
  for (int i = 0; i < 400; ++i) {
    std::string src = gen.program();
    ast::Program first = parse_program(src);
    std::string printed = print_program(first);
    ast::Program second = parse_program(printed);
    ASSERT_EQ(first, second) << "source:\n" << src << "\nprinted:\n" << printed;
    ASSERT_EQ(print_program(second), printed);
  }
}
