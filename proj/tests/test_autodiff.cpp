#include "doctest.h"

#include <cmath>

#include "arrad/autodiff.hpp"
#include "arrad/eval.hpp"
#include "arrad/gradcheck.hpp"
#include "arrad/optimizer.hpp"

using namespace arrad;

namespace {

bool contains_op(const Expr& e, Op op) {
  if (e.op() == op) return true;
  for (std::size_t k = 0; k < e.arity(); ++k)
    if (contains_op(e.child(k), op)) return true;
  return false;
}

struct DotpSetup {
  Ctx c;
  GradEnv g;
};

DotpSetup dotp_grad() {
  Ctx c = Ctx::of({Kind::ar(Shape::leaf(5)), Kind::ar(Shape::leaf(5)), Kind::ar(Shape::unit())});
  Expr e = e_dotp(var(c, 2), var(c, 1));
  return {c, grad(e, var(c, 0), GradEnv::zero(c, c))};
}

}  // namespace

TEST_CASE("logistic derivative matches central differences") {
  Ctx c = Ctx::of({Kind::ar(Shape::unit()), Kind::ar(Shape::unit())});
  Expr e = logistic(var(c, 1));
  GradEnv g = grad(e, var(c, 0), GradEnv::zero(c, c));
  const double h = 1e-5;
  for (double x : {-2.0, 0.0, 3.0}) {
    ValueEnv env(c, {Tensor::konst(Shape::unit(), x), Tensor::konst(Shape::unit(), 1.0)});
    double ad = evaluate_array(*g.slot(0), env)[0];
    double fd = (1 / (1 + std::exp(-(x + h))) - 1 / (1 + std::exp(-(x - h)))) / (2 * h);
    double s = 1 / (1 + std::exp(-x));
    CHECK(std::abs(ad - s * (1 - s)) <= 1e-12);
    CHECK(std::abs(ad - fd) <= 1e-6 * std::abs(fd));
  }
}

TEST_CASE("dot product adjoint: unoptimized and optimized forms") {
  DotpSetup d = dotp_grad();
  CHECK(to_sexpr(*d.g.slot(0)) ==
        "(bin plus (sum 5 (bin plus (zero 5) (imaps 5 (zero-but (var 0) (var 1) (bin mul (var 2) (sels (var 3) "
        "(var 1))))))) (zero 5))");
  Expr opt = optimize(*d.g.slot(0), 3);
  CHECK(to_sexpr(opt) == "(imaps 5 (bin mul (var 1) (sels (var 2) (var 0))))");
  CHECK_FALSE(contains_op(opt, Op::Sum));
  CHECK_FALSE(contains_op(opt, Op::ZeroBut));
}

TEST_CASE("dot product adjoint values") {
  DotpSetup d = dotp_grad();
  ValueEnv env(d.c, {Tensor(Shape::leaf(5), {1, 2, 3, 4, 5}), Tensor(Shape::leaf(5), {5, 4, 3, 2, 1}),
                     Tensor::konst(Shape::unit(), 2.0)});
  CHECK(evaluate_array(*d.g.slot(0), env).data() == std::vector<double>{10, 8, 6, 4, 2});
  CHECK(evaluate_array(*d.g.slot(1), env).data() == std::vector<double>{2, 4, 6, 8, 10});
}

TEST_CASE("random terms pass the gradient check") {
  GradcheckReport r = gradcheck_random(5, 40);
  for (const auto& c : r.cases)
    if (!c.pass) MESSAGE("failing term: " << c.term);
  CHECK(r.failures == 0);
  CHECK(r.cases.size() == 40);
}

TEST_CASE("optimized adjoints pass the gradient check too") {
  TermGen gen(8);
  std::size_t failures = 0;
  for (int n = 0; n < 25; ++n) {
    Expr e = gen.term();
    GradcheckCase c = gradcheck_term(e, gen, 1e-4, 1e-5, 1e-8, true);
    if (!c.pass) ++failures;
  }
  CHECK(failures == 0);
}
