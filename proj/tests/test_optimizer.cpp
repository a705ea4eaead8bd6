#include "doctest.h"

#include "arrad/eval.hpp"
#include "arrad/optimizer.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace arrad;
using namespace arrad::testing;

TEST_CASE("selection of a build reduces to the body") {
  Ctx c = Ctx::of({Kind::ar(Shape::leaf(4)), Kind::ix(Shape::leaf(4))});
  Expr e = sel_s(Imap_s(c, Shape::leaf(4), [&](const Expr& i) { return logistic(sel_s(var(i.ctx(), 2), i)); }), var(c, 0));
  CHECK(to_sexpr(optimize(e, 2)) == "(logistic (sels (var 1) (var 0)))");
}

TEST_CASE("arithmetic with zero and one folds") {
  Ctx c = Ctx::of({Kind::ar(Shape::leaf(3))});
  Expr a = var(c, 0);
  CHECK(optimize(plus(a, zero(c, Shape::leaf(3))), 1) == a);
  CHECK(optimize(mul(one(c, Shape::leaf(3)), a), 1) == a);
  CHECK(optimize(minus(minus(a)), 2) == a);
}

TEST_CASE("optimization preserves kinds and meaning of random terms and their adjoints") {
  CheckResult r = check_optimizer_soundness(13, 60, 1e-10);
  INFO(r.first_failure);
  CHECK(r.checks >= 120);
  CHECK(r.ok());
}

TEST_CASE("optimization is idempotent on the golden terms") {
  for (const Golden& g : golden_exprs()) {
    INFO(g.name);
    Expr once = optimize(g.expr, 10);
    CHECK(optimize(once, 10) == once);
    ValueEnv env = random_inputs(g.expr.ctx(), 9);
    CHECK(max_rel_diff(evaluate_array(once, env), evaluate_array(g.expr, env), 1.0) <= 1e-12);
  }
}
