#include "arrad/autodiff.hpp"

#include "arrad/errors.hpp"

namespace arrad {

GradEnv::GradEnv(Ctx gamma, Ctx delta, std::vector<std::optional<Expr>> oldest_first)
    : gamma_(std::move(gamma)), delta_(std::move(delta)), entries_(std::move(oldest_first)) {
  if (entries_.size() != gamma_.size()) throw KindMismatch("adjoint environment has wrong length");
  auto kinds = gamma_.kinds();
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (kinds[k].is_ix != !entries_[k].has_value())
      throw KindMismatch("adjoint environment: entry presence does not match slot kind");
    if (entries_[k]) {
      if (!(entries_[k]->ctx() == delta_)) throw KindMismatch("adjoint entry lives in the wrong context");
      if (!(entries_[k]->kind() == kinds[k])) throw KindMismatch("adjoint entry has kind " + entries_[k]->kind().str());
    }
  }
}

GradEnv GradEnv::zero(const Ctx& gamma, const Ctx& delta) {
  std::vector<std::optional<Expr>> es;
  for (const auto& k : gamma.kinds()) {
    if (k.is_ix)
      es.emplace_back(std::nullopt);
    else
      es.emplace_back(arrad::zero(delta, k.shape));
  }
  return GradEnv(gamma, delta, std::move(es));
}

void GradEnv::set_slot(std::size_t k, const Expr& e) {
  auto& slot = entries_.at(k);
  if (!slot) throw KindMismatch("adjoint update of an index slot");
  if (!(e.ctx() == delta_) || !(e.kind() == slot->kind())) throw KindMismatch("adjoint update has the wrong kind");
  slot = e;
}

void GradEnv::update(std::size_t v, const std::function<Expr(const Expr&)>& f) {
  std::size_t k = size() - 1 - v;
  const auto& cur = entries_.at(k);
  if (!cur) throw KindMismatch("adjoint update of an index slot");
  set_slot(k, f(*cur));
}

GradEnv GradEnv::map(const std::function<Expr(const Expr&)>& f) const {
  std::vector<std::optional<Expr>> es;
  es.reserve(entries_.size());
  Ctx d;
  bool first = true;
  for (const auto& e : entries_) {
    if (!e) {
      es.emplace_back(std::nullopt);
      continue;
    }
    Expr r = f(*e);
    if (first) {
      d = r.ctx();
      first = false;
    }
    es.emplace_back(std::move(r));
  }
  return GradEnv(gamma_, first ? delta_ : d, std::move(es));
}

GradEnv map_sum(const Expr& body, const Expr& seed, GradEnv delta) {
  const Ctx& ext = body.ctx();
  GradEnv inner = grad(body, seed, GradEnv::zero(ext, ext));
  // Every array slot of Δ receives sum(inner) ⊞ δ; the binder slot has none.
  for (std::size_t k = 0; k < delta.size(); ++k) {
    if (!delta.slot(k)) continue;
    delta.set_slot(k, plus(sum(*inner.slot(k)), *delta.slot(k)));
  }
  return delta;
}

namespace {

// Like map_sum, but folds the body adjoints back under an index-minus guard.
GradEnv map_ix_minus(const Expr& e, const Expr& seed, GradEnv delta) {
  const Expr& body = e.body();
  const Ctx& ext = body.ctx();
  GradEnv inner = grad(body, lift(seed, ext.last()), GradEnv::zero(ext, ext));
  for (std::size_t k = 0; k < delta.size(); ++k) {
    if (!delta.slot(k)) continue;
    const Expr& b = *inner.slot(k);
    Expr wrapped = e.op() == Op::IxMinus ? ix_minus(e.child(0), e.child(1), e.plus_fact(), e.suc_fact(), b)
                                         : ix_minus_r(e.child(0), e.child(1), e.plus_fact(), e.suc_fact(), b);
    delta.set_slot(k, plus(wrapped, *delta.slot(k)));
  }
  return delta;
}

}  // namespace

GradEnv grad(const Expr& e, const Expr& s, GradEnv delta) {
  if (!(e.ctx() == s.ctx()) || !(e.ctx() == delta.delta()) || !(e.ctx() == delta.gamma()))
    throw KindMismatch("grad: term, seed and adjoint environment must share one context");
  if (!(e.kind() == s.kind())) throw KindMismatch("grad: seed kind " + s.kind().str() + " does not match " + e.kind().str());
  if (e.is_ix()) return delta;
  auto up = [](const Expr& x, const Expr& body) { return lift(x, body.ctx().last()); };
  switch (e.op()) {
    case Op::Zero:
    case Op::One:
      return delta;
    case Op::Var:
      delta.update(e.var(), [&](const Expr& d) { return plus(d, s); });
      return delta;
    case Op::ImapS: {
      const Expr& b = e.body();
      return map_sum(b, sel_s(up(s, b), var(b.ctx(), 0)), std::move(delta));
    }
    case Op::Imap: {
      const Expr& b = e.body();
      return map_sum(b, sel(up(s, b), var(b.ctx(), 0)), std::move(delta));
    }
    case Op::Imapb: {
      const Expr& b = e.body();
      return map_sum(b, selb(e.times_fact(), up(s, b), var(b.ctx(), 0)), std::move(delta));
    }
    case Op::SelS: {
      const Expr& a = e.child(0);
      const Expr& i = e.child(1);
      Expr seed = Imap_s(e.ctx(), a.shape(), [&](const Expr& j) { return zero_but(j, lift_to(i, j.ctx()), lift_to(s, j.ctx())); });
      return grad(a, seed, std::move(delta));
    }
    case Op::Sel: {
      const Expr& a = e.child(0);
      const Expr& i = e.child(1);
      Expr seed = Imap(e.ctx(), a.shape().left(), [&](const Expr& j) { return zero_but(j, lift_to(i, j.ctx()), lift_to(s, j.ctx())); });
      return grad(a, seed, std::move(delta));
    }
    case Op::Selb: {
      const Expr& a = e.child(0);
      const Expr& i = e.child(1);
      const TimesFact& m = e.times_fact();
      Expr seed = imapb(m, zero_but(var(e.ctx().extend(Kind::ix(m.s)), 0), lift(i, Kind::ix(m.s)), lift(s, Kind::ix(m.s))));
      return grad(a, seed, std::move(delta));
    }
    case Op::Sum:
      return map_sum(e.body(), up(s, e.body()), std::move(delta));
    case Op::ZeroBut:
      return grad(e.child(2), zero_but(e.child(0), e.child(1), s), std::move(delta));
    case Op::Slide:
      return grad(e.child(1), backslide(e.child(0), s, e.suc_fact(), e.plus_fact()), std::move(delta));
    case Op::Backslide:
      return grad(e.child(1), slide(e.child(0), e.plus_fact(), s, e.suc_fact()), std::move(delta));
    case Op::Logistic: {
      const Expr& a = e.child(0);
      Expr l = logistic(a);
      Expr seed = mul(mul(s, l), plus(one(e.ctx(), e.shape()), minus(l)));
      return grad(a, seed, std::move(delta));
    }
    case Op::Bin: {
      const Expr& a = e.child(0);
      const Expr& b = e.child(1);
      if (e.bin_op() == BinOp::Plus) return grad(a, s, grad(b, s, std::move(delta)));
      return grad(a, mul(s, b), grad(b, mul(s, a), std::move(delta)));
    }
    case Op::Scaledown:
      return grad(e.child(0), scaledown(e.nat(), s), std::move(delta));
    case Op::Minus:
#ifdef ARRAD_INJECT_WRONG_SIGN
      return grad(e.child(0), s, std::move(delta));
#else
      return grad(e.child(0), minus(s), std::move(delta));
#endif
    case Op::IxMinus:
    case Op::IxMinusR:
      return map_ix_minus(e, s, std::move(delta));
    case Op::Div:
    case Op::Mod:
    case Op::IxPlus:
      return delta;
  }
  throw KindMismatch("grad: unknown operator");
}

}  // namespace arrad
