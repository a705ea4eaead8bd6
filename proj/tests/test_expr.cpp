#include "doctest.h"

#include "arrad/errors.hpp"
#include "arrad/eval.hpp"
#include "arrad/expr.hpp"
#include "arrad/gradcheck.hpp"
#include "support.hpp"

using namespace arrad;
using namespace arrad::testing;

namespace {

Ctx two_arrays() { return Ctx::of({Kind::ar(Shape::leaf(3)), Kind::ar(Shape::of({2, 3}))}); }

}  // namespace

TEST_CASE("contexts: de Bruijn lookup, remove and swap") {
  Ctx c = Ctx::of({Kind::ar(Shape::leaf(1)), Kind::ix(Shape::leaf(2)), Kind::ar(Shape::leaf(3))});
  CHECK(c.size() == 3);
  CHECK(c.at(0) == Kind::ar(Shape::leaf(3)));
  CHECK(c.at(2) == Kind::ar(Shape::leaf(1)));
  CHECK(c.remove(1) == Ctx::of({Kind::ar(Shape::leaf(1)), Kind::ar(Shape::leaf(3))}));
  CHECK(c.swap_at(1).at(0) == Kind::ix(Shape::leaf(2)));
  CHECK(c.swap_at(1).at(1) == Kind::ar(Shape::leaf(3)));
  CHECK_THROWS_AS(c.at(3), KindMismatch);
}

TEST_CASE("smart constructors reject ill-formed terms") {
  Ctx c = two_arrays();
  Expr a = var(c, 1), m = var(c, 0);
  CHECK_THROWS_AS(plus(a, m), KindMismatch);
  CHECK_THROWS_AS(sel(a, a), KindMismatch);
  CHECK_THROWS_AS(sel_s(m, m), KindMismatch);
  CHECK_THROWS_AS(scaledown(0, a), KindMismatch);
  CHECK_THROWS_AS(var(c, 2), KindMismatch);
  Ctx ci = c.extend(Kind::ix(Shape::leaf(2)));
  CHECK_THROWS_AS(sel_s(var(ci, 2), var(ci, 0)), KindMismatch);  // index shape 2 into an array of 3
  CHECK_THROWS_AS(imap_s(var(ci, 1)), KindMismatch);               // body is not a scalar
  CHECK_THROWS_AS(sum(var(ci, 0)), KindMismatch);                  // body is an index
  CHECK_THROWS_AS(plus(a, var(ci, 2)), KindMismatch);              // contexts differ
  CHECK_NOTHROW(sel(var(ci, 1), var(ci, 0)));
}

TEST_CASE("kinds of the array forms") {
  Ctx c = two_arrays();
  Expr m = var(c, 0);
  Expr rows = Imap(c, Shape::leaf(2), [&](const Expr& i) { return sel(lift_to(m, i.ctx()), i); });
  CHECK(rows.shape() == Shape::of({2, 3}));
  TimesFact t = TimesFact::infer(Shape::leaf(3), Shape::leaf(2));
  Expr blocked = imapb(t, one(c.extend(Kind::ix(Shape::leaf(3))), Shape::leaf(2)));
  CHECK(blocked.shape() == Shape::leaf(6));
  Expr d = ix_div(t, var(c.extend(Kind::ix(Shape::leaf(6))), 0));
  CHECK(d.kind() == Kind::ix(Shape::leaf(3)));
}

TEST_CASE("weaken, substitute and swap act on variables only") {
  Ctx c = two_arrays();
  Expr e = plus(var(c, 1), minus(var(c, 1)));
  Ctx wide = Ctx::of({Kind::ar(Shape::leaf(3)), Kind::ar(Shape::leaf(5)), Kind::ar(Shape::of({2, 3}))});
  Expr w = weaken(wide, 1, e);
  CHECK(to_sexpr(w) == "(bin plus (var 2) (minus (var 2)))");
  CHECK(mentions(w, 2));
  CHECK_FALSE(mentions(w, 1));
  Expr s = substitute(1, w, zero(wide.remove(1), Shape::leaf(5)));
  CHECK(s == e);
  Expr r = substitute(1, e, one(c.remove(1), Shape::leaf(3)));
  CHECK(to_sexpr(r) == "(bin plus (one 3) (minus (one 3)))");
  Expr sw = ctx_swap(1, e);
  CHECK(to_sexpr(sw) == "(bin plus (var 0) (minus (var 0)))");
  CHECK(ctx_swap(1, sw) == e);
  CHECK(var_eq(2, 2).same);
  CHECK(var_eq(2, 5).reindexed == 4);
  CHECK(var_eq(2, 1).reindexed == 1);
}

TEST_CASE("mentions sees through binders") {
  Ctx c = two_arrays();
  Expr e = Sum(c, Shape::leaf(3), [&](const Expr& i) { return sel_s(var(i.ctx(), 2), i); });
  CHECK(mentions(e, 1));
  CHECK_FALSE(mentions(e, 0));
}

TEST_CASE("s-expressions round-trip over random terms") {
  TermGen gen(11);
  for (int n = 0; n < 100; ++n) {
    Expr e = gen.term();
    std::string text = expr_file_text(e);
    Expr back = parse_expr_file(text);
    REQUIRE(back == e);
    CHECK(expr_file_text(back) == text);
  }
}

TEST_CASE("golden terms round-trip too") {
  for (const Golden& g : golden_exprs()) {
    INFO(g.name);
    CHECK(parse_expr_file(expr_file_text(g.expr)) == g.expr);
  }
}

TEST_CASE("parse errors carry positions") {
  Ctx c = two_arrays();
  CHECK_THROWS_AS(parse_sexpr(c, "(bin plus (var 1)"), ParseError);
  CHECK_THROWS_AS(parse_sexpr(c, "(frobnicate 3)"), ParseError);
  CHECK_THROWS_AS(parse_sexpr(c, "(var 7)"), Error);
  try {
    parse_sexpr(c, "(bin plus (var 1) (var x))");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("infix rendering uses slot names and fresh binder names") {
  Ctx c = two_arrays();
  Expr e = Sum(c, Shape::leaf(3), [&](const Expr& i) { return mul(sel_s(var(i.ctx(), 2), i), sel_s(var(i.ctx(), 2), i)); });
  CHECK(to_infix(e, {"a", "m"}) == "sum[x1 < [3]] ((sels(a, x1)) * (sels(a, x1)))");
}

TEST_CASE("generated terms are well-formed and mention every input") {
  TermGen gen(3);
  for (int n = 0; n < 200; ++n) {
    Expr e = gen.term();
    CHECK(TermGen::in_universe(e.shape()));
    for (std::size_t v = 0; v < e.ctx().size(); ++v) CHECK(mentions(e, v));
    ValueEnv env = gen.inputs(e.ctx());
    CHECK_NOTHROW(evaluate_array(e, env));
  }
  CHECK(gen.coverage().size() == 22);
}
