#include "doctest.h"

#include "arrad/errors.hpp"
#include "arrad/eval.hpp"
#include "arrad/gradcheck.hpp"
#include "support.hpp"

using namespace arrad;
using namespace arrad::testing;

TEST_CASE("environments check kinds and look up newest first") {
  Ctx c = Ctx::of({Kind::ar(Shape::leaf(2)), Kind::ar(Shape::leaf(3))});
  ValueEnv env = random_inputs(c, 5);
  CHECK(std::get<Tensor>(env.lookup(0)).shape() == Shape::leaf(3));
  CHECK(std::get<Tensor>(env.lookup(1)).shape() == Shape::leaf(2));
  ValueEnv bad(c);
  CHECK_THROWS_AS(bad.set_slot(0, Tensor::konst(Shape::leaf(3), 0.0)), KindMismatch);
  CHECK_THROWS(evaluate(var(c, 0), bad));
}

TEST_CASE("strict evaluation of the library terms") {
  Ctx c = Ctx::of({Kind::ar(Shape::leaf(3)), Kind::ar(Shape::leaf(3))});
  ValueEnv env(c, {Tensor(Shape::leaf(3), {1, 2, 3}), Tensor(Shape::leaf(3), {4, 5, 6})});
  CHECK(evaluate_array(e_dotp(var(c, 1), var(c, 0)), env)[0] == 32.0);
  CHECK(evaluate_array(scaledown(2, plus(var(c, 1), var(c, 0))), env).data() == std::vector<double>{2.5, 3.5, 4.5});
}

TEST_CASE("the kernel matches the strict evaluator bit for bit") {
  TermGen gen(21);
  for (int n = 0; n < 150; ++n) {
    Expr e = gen.term();
    ValueEnv env = gen.inputs(e.ctx());
    Tensor strict = evaluate_array(e, env);
    Kernel k(e);
    Tensor serial = k.run(env, false);
    Tensor parallel = k.run(env, true);
    INFO(to_sexpr(e));
    REQUIRE(strict.shape() == serial.shape());
    CHECK(strict.data() == serial.data());
    CHECK(serial.data() == parallel.data());
  }
}

TEST_CASE("the kernel agrees on the golden terms") {
  for (const Golden& g : golden_exprs()) {
    INFO(g.name);
    ValueEnv env = random_inputs(g.expr.ctx(), 3);
    CHECK(evaluate_array(g.expr, env).data() == evaluate_fast(g.expr, env).data());
  }
}
