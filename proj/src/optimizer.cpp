#include "arrad/optimizer.hpp"

#include "arrad/errors.hpp"

namespace arrad {

namespace {

bool is(const Expr& e, Op op) { return e.op() == op; }

Expr v0(const Expr& body_like) { return var(body_like.ctx(), 0); }

Expr opt(const Expr& e);

Expr opt_sel_s(const Expr& e) {
  Expr a = opt(e.child(0));
  Expr i = opt(e.child(1));
  const Ctx& c = e.ctx();
  switch (a.op()) {
    case Op::Imapb: {
      const TimesFact& m = a.times_fact();
      return sel_s(substitute(0, a.body(), ix_div(m, i)), ix_mod(m, i));
    }
    case Op::Slide:
      return sel_s(a.child(1), ix_plus(a.child(0), i, a.suc_fact(), a.plus_fact()));
    case Op::Zero:
      return zero(c, Shape::unit());
    case Op::One:
      return one(c, Shape::unit());
    case Op::ImapS:
      return substitute(0, a.body(), i);
    case Op::Bin:
      return bin(a.bin_op(), sel_s(a.child(0), i), sel_s(a.child(1), i));
    case Op::Sum:
      return sum(sel_s(a.body(), lift(i, a.body().ctx().last())));
    case Op::ZeroBut:
      return zero_but(a.child(0), a.child(1), sel_s(a.child(2), i));
    default:
      return sel_s(a, i);
  }
}

Expr opt_sel(const Expr& e) {
  Expr a = opt(e.child(0));
  Expr i = opt(e.child(1));
  const Ctx& c = e.ctx();
  switch (a.op()) {
    case Op::Zero:
      return zero(c, e.shape());
    case Op::One:
      return one(c, e.shape());
    case Op::Imap:
      return substitute(0, a.body(), i);
    case Op::Bin:
      return bin(a.bin_op(), sel(a.child(0), i), sel(a.child(1), i));
    case Op::Sum:
      return sum(sel(a.body(), lift(i, a.body().ctx().last())));
    case Op::ZeroBut:
      return zero_but(a.child(0), a.child(1), sel(a.child(2), i));
    default:
      return sel(a, i);
  }
}

Expr opt_selb(const Expr& e) {
  const TimesFact& m = e.times_fact();
  Expr a = opt(e.child(0));
  Expr k = opt(e.child(1));
  const Ctx& c = e.ctx();
  switch (a.op()) {
    case Op::Zero:
      return zero(c, e.shape());
    case Op::One:
      return one(c, e.shape());
    case Op::Sum:
      return sum(selb(m, a.body(), lift(k, a.body().ctx().last())));
    case Op::ZeroBut:
      return zero_but(a.child(0), a.child(1), selb(m, a.child(2), k));
    case Op::Bin:
      return bin(a.bin_op(), selb(m, a.child(0), k), selb(m, a.child(1), k));
    default:
      return selb(m, a, k);
  }
}

Expr opt_sum(const Expr& e) {
  Expr a = opt(e.body());
  const Ctx& c = e.ctx();
  switch (a.op()) {
    case Op::Zero:
      return zero(c, e.shape());
    case Op::Imap:
      return imap(sum(ctx_swap(1, a.body())));
    case Op::ImapS:
      return imap_s(sum(ctx_swap(1, a.body())));
    case Op::Imapb:
      return imapb(a.times_fact(), sum(ctx_swap(1, a.body())));
    case Op::ZeroBut: {
      const Expr& i = a.child(0);
      const Expr& j = a.child(1);
      const Expr& x = a.child(2);
      if (is(i, Op::Var) && is(j, Op::Var)) {
        VarEq ei = var_eq(0, i.var());
        VarEq ej = var_eq(0, j.var());
        if (ei.same && ej.same) return sum(x);
        if (!ei.same && ej.same) return substitute(0, x, var(c, ei.reindexed));
        if (ei.same && !ej.same) return substitute(0, x, var(c, ej.reindexed));
        return zero_but(var(c, ei.reindexed), var(c, ej.reindexed), sum(x));
      }
      if (is(i, Op::Var) && is(j, Op::IxPlus) && is(j.child(0), Op::Var) && is(j.child(1), Op::Var)) {
        VarEq ei = var_eq(0, i.var());
        VarEq ej = var_eq(0, j.child(0).var());
        VarEq ek = var_eq(0, j.child(1).var());
        if (!ei.same && !ej.same && ek.same)
          return ix_minus(var(c, ei.reindexed), var(c, ej.reindexed), j.plus_fact(), j.suc_fact(), x);
        if (!ei.same && ej.same && !ek.same)
          return ix_minus_r(var(c, ei.reindexed), var(c, ek.reindexed), j.plus_fact(), j.suc_fact(), x);
      }
      return sum(a);
    }
    default:
      return sum(a);
  }
}

Expr opt_zero_but(const Expr& e) {
  Expr i = opt(e.child(0));
  Expr j = opt(e.child(1));
  Expr a = opt(e.child(2));
  if (is(i, Op::Var) && is(j, Op::Var) && var_eq(i.var(), j.var()).same) return a;
  return zero_but(i, j, a);
}

// Absorbs the non-comprehension operand into an imaps/imap/imapb operand.
Expr absorb(BinOp op, const Expr& a, const Expr& b) {
  auto lifted_sel = [](const Expr& comp, const Expr& other) {
    const Expr& body = comp.body();
    Expr o = lift(other, body.ctx().last());
    switch (comp.op()) {
      case Op::ImapS: return sel_s(o, v0(body));
      case Op::Imap: return sel(o, v0(body));
      default: return selb(comp.times_fact(), o, v0(body));
    }
  };
  auto wrap = [](const Expr& comp, const Expr& body) {
    switch (comp.op()) {
      case Op::ImapS: return imap_s(body);
      case Op::Imap: return imap(body);
      default: return imapb(comp.times_fact(), body);
    }
  };
  for (Op kind : {Op::ImapS, Op::Imap, Op::Imapb}) {
    if (a.op() == kind) return wrap(a, bin(op, a.body(), lifted_sel(a, b)));
    if (b.op() == kind) return wrap(b, bin(op, lifted_sel(b, a), b.body()));
  }
  return bin(op, a, b);
}

Expr opt_bin(const Expr& e) {
  Expr a = opt(e.child(0));
  Expr b = opt(e.child(1));
  const Ctx& c = e.ctx();
  if (e.bin_op() == BinOp::Plus) {
    if (is(a, Op::Zero)) return b;
    if (is(b, Op::Zero)) return a;
    // Guards are not hoisted over +: (i = j ? x : 0) + y differs from
    // (i = j ? x + y : 0) whenever i ≠ j and y ≠ 0.
    return absorb(BinOp::Plus, a, b);
  }
  if (is(a, Op::Zero) || is(b, Op::Zero)) return zero(c, e.shape());
  if (is(a, Op::One)) return b;
  if (is(b, Op::One)) return a;
  if (is(a, Op::ZeroBut)) return zero_but(a.child(0), a.child(1), mul(a.child(2), b));
  if (is(b, Op::ZeroBut)) return zero_but(b.child(0), b.child(1), mul(a, b.child(2)));
  return absorb(BinOp::Mul, a, b);
}

Expr opt_scaledown(const Expr& e) {
  Expr a = opt(e.child(0));
  std::size_t x = e.nat();
  if (is(a, Op::Sum)) return sum(scaledown(x, a.body()));
  if (is(a, Op::Scaledown)) return scaledown(x * a.nat(), a.child(0));
  return scaledown(x, a);
}

Expr opt_minus(const Expr& e) {
  Expr a = opt(e.child(0));
  switch (a.op()) {
    case Op::Minus:
      return a.child(0);
    case Op::ImapS:
      return imap_s(minus(a.body()));
    case Op::Imap:
      return imap(minus(a.body()));
    case Op::Imapb:
      return imapb(a.times_fact(), minus(a.body()));
    case Op::Sum:
      return sum(minus(a.body()));
    case Op::Bin:
      if (a.bin_op() == BinOp::Plus) return plus(minus(a.child(0)), minus(a.child(1)));
      // -(x * y) = (-x) * y
      return mul(minus(a.child(0)), a.child(1));
    default:
      return minus(a);
  }
}

Expr opt_logistic(const Expr& e) {
  Expr a = opt(e.child(0));
  if (is(a, Op::ImapS)) return imap_s(logistic(a.body()));
  if (is(a, Op::Imap)) return imap(logistic(a.body()));
  return logistic(a);
}

Expr opt_slide_like(const Expr& e) {
  Expr a = opt(e.child(1));
  if (is(a, Op::Zero)) return zero(e.ctx(), e.shape());
  if (e.op() == Op::Slide) return slide(e.child(0), e.plus_fact(), a, e.suc_fact());
  return backslide(e.child(0), a, e.suc_fact(), e.plus_fact());
}

Expr opt_children(const Expr& e) {
  std::array<Expr, 3> kids;
  bool changed = false;
  for (std::size_t k = 0; k < e.arity(); ++k) {
    kids[k] = opt(e.child(k));
    changed = changed || kids[k].node() != e.child(k).node();
  }
  return changed ? rebuild(e, e.ctx(), kids) : e;
}

Expr opt(const Expr& e) {
  switch (e.op()) {
    case Op::Var:
    case Op::Zero:
    case Op::One:
      return e;
    case Op::SelS:
      return opt_sel_s(e);
    case Op::Sel:
      return opt_sel(e);
    case Op::Selb:
      return opt_selb(e);
    case Op::Sum:
      return opt_sum(e);
    case Op::ZeroBut:
      return opt_zero_but(e);
    case Op::Bin:
      return opt_bin(e);
    case Op::Scaledown:
      return opt_scaledown(e);
    case Op::Minus:
      return opt_minus(e);
    case Op::Logistic:
      return opt_logistic(e);
    case Op::Slide:
    case Op::Backslide:
      return opt_slide_like(e);
    default:
      return opt_children(e);
  }
}

}  // namespace

Expr optimize_once(const Expr& e) { return opt(e); }

Expr optimize(const Expr& e, std::size_t passes) {
  Expr r = e;
  for (std::size_t k = 0; k < passes; ++k) r = opt(r);
  return r;
}

}  // namespace arrad
