#include "arrad/expr.hpp"

#include <algorithm>

#include "arrad/errors.hpp"

namespace arrad {

std::string Kind::str() const { return std::string(is_ix ? "ix " : "ar ") + shape.str(); }

// ---------------------------------------------------------------- contexts

Ctx Ctx::of(const std::vector<Kind>& oldest_first) {
  Ctx c;
  for (const auto& k : oldest_first) c = c.extend(k);
  return c;
}

Ctx Ctx::extend(Kind k) const { return Ctx(std::make_shared<const Node>(Node{std::move(k), n_, size() + 1})); }

const Kind& Ctx::at(std::size_t v) const {
  if (v >= size()) throw KindMismatch("variable " + std::to_string(v) + " not in context of size " + std::to_string(size()));
  const Node* n = n_.get();
  for (std::size_t k = 0; k < v; ++k) n = n->parent.get();
  return n->kind;
}

Ctx Ctx::parent() const {
  if (!n_) throw KindMismatch("parent of empty context");
  return Ctx(n_->parent);
}

Ctx Ctx::drop(std::size_t n) const {
  if (n > size()) throw KindMismatch("cannot drop " + std::to_string(n) + " entries");
  const std::shared_ptr<const Node>* p = &n_;
  for (std::size_t k = 0; k < n; ++k) p = &(*p)->parent;
  return Ctx(*p);
}

Ctx Ctx::remove(std::size_t v) const {
  if (v >= size()) throw KindMismatch("cannot remove variable " + std::to_string(v));
  std::vector<Kind> newer;
  for (std::size_t k = 0; k < v; ++k) newer.push_back(at(k));
  Ctx c = drop(v + 1);
  for (std::size_t k = newer.size(); k-- > 0;) c = c.extend(newer[k]);
  return c;
}

Ctx Ctx::swap_at(std::size_t v) const {
  if (v == 0) return *this;
  if (v >= size()) throw KindMismatch("cannot swap variable " + std::to_string(v));
  std::vector<Kind> newer;
  for (std::size_t k = 0; k <= v; ++k) newer.push_back(at(k));
  std::swap(newer[v], newer[v - 1]);
  Ctx c = drop(v + 1);
  for (std::size_t k = newer.size(); k-- > 0;) c = c.extend(newer[k]);
  return c;
}

std::vector<Kind> Ctx::kinds() const {
  std::vector<Kind> out;
  for (const Node* n = n_.get(); n; n = n->parent.get()) out.push_back(n->kind);
  std::reverse(out.begin(), out.end());
  return out;
}

bool operator==(const Ctx& a, const Ctx& b) {
  const Ctx::Node* x = a.n_.get();
  const Ctx::Node* y = b.n_.get();
  if (a.size() != b.size()) return false;
  while (x && y) {
    if (x == y) return true;
    if (!(x->kind == y->kind)) return false;
    x = x->parent.get();
    y = y->parent.get();
  }
  return x == y;
}

std::string Ctx::str() const {
  std::string out = "ε";
  for (const auto& k : kinds()) out += " ▹ " + k.str();
  return out;
}

// -------------------------------------------------------------------- nodes

const char* op_name(Op op) {
  switch (op) {
    case Op::Var: return "var";
    case Op::Zero: return "zero";
    case Op::One: return "one";
    case Op::ImapS: return "imaps";
    case Op::SelS: return "sels";
    case Op::Imap: return "imap";
    case Op::Sel: return "sel";
    case Op::Imapb: return "imapb";
    case Op::Selb: return "selb";
    case Op::Sum: return "sum";
    case Op::ZeroBut: return "zero-but";
    case Op::Slide: return "slide";
    case Op::Backslide: return "backslide";
    case Op::Logistic: return "logistic";
    case Op::Bin: return "bin";
    case Op::Scaledown: return "scaledown";
    case Op::Minus: return "minus";
    case Op::Div: return "div";
    case Op::Mod: return "mod";
    case Op::IxPlus: return "ix-plus";
    case Op::IxMinus: return "ix-minus";
    case Op::IxMinusR: return "ix-minus-r";
  }
  return "?";
}

Expr make_node(ExprNode&& n) {
  Expr e;
  e.n_ = std::make_shared<const ExprNode>(std::move(n));
  return e;
}

namespace {

const ExprNode& node_of(const Expr& e) {
  if (!e.valid()) throw KindMismatch("use of an empty expression");
  return *e.node();
}

}  // namespace

Op Expr::op() const { return node_of(*this).op; }
const Ctx& Expr::ctx() const { return node_of(*this).ctx; }
const Kind& Expr::kind() const { return node_of(*this).kind; }
std::size_t Expr::arity() const { return node_of(*this).arity; }

const Expr& Expr::child(std::size_t k) const {
  const auto& n = node_of(*this);
  if (k >= n.arity) throw KindMismatch(std::string(op_name(n.op)) + " has no child " + std::to_string(k));
  return n.kids[k];
}

std::size_t Expr::var() const {
  if (op() != Op::Var) throw KindMismatch("var() on " + std::string(op_name(op())));
  return n_->num;
}

std::size_t Expr::nat() const {
  if (op() != Op::Scaledown) throw KindMismatch("nat() on " + std::string(op_name(op())));
  return n_->num;
}

BinOp Expr::bin_op() const {
  if (op() != Op::Bin) throw KindMismatch("bin_op() on " + std::string(op_name(op())));
  return n_->bop;
}

const PlusFact& Expr::plus_fact() const {
  if (!node_of(*this).plus) throw KindMismatch("no plus fact on " + std::string(op_name(op())));
  return *n_->plus;
}

const SucFact& Expr::suc_fact() const {
  if (!node_of(*this).suc) throw KindMismatch("no suc fact on " + std::string(op_name(op())));
  return *n_->suc;
}

const TimesFact& Expr::times_fact() const {
  if (!node_of(*this).times) throw KindMismatch("no times fact on " + std::string(op_name(op())));
  return *n_->times;
}

bool Expr::binds() const {
  switch (op()) {
    case Op::ImapS:
    case Op::Imap:
    case Op::Imapb:
    case Op::Sum:
    case Op::IxMinus:
    case Op::IxMinusR:
      return true;
    default:
      return false;
  }
}

std::size_t Expr::body_slot() const {
  switch (op()) {
    case Op::ImapS:
    case Op::Imap:
    case Op::Imapb:
    case Op::Sum:
      return 0;
    case Op::IxMinus:
    case Op::IxMinusR:
      return 2;
    default:
      throw KindMismatch(std::string(op_name(op())) + " binds no variable");
  }
}

std::size_t Expr::depth() const {
  std::size_t d = 0;
  for (std::size_t k = 0; k < arity(); ++k) d = std::max(d, child(k).depth());
  return d + 1;
}

std::size_t Expr::node_count() const {
  std::size_t c = 1;
  for (std::size_t k = 0; k < arity(); ++k) c += child(k).node_count();
  return c;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.n_ == b.n_) return true;
  if (!a.valid() || !b.valid()) return false;
  const ExprNode& x = *a.n_;
  const ExprNode& y = *b.n_;
  if (x.op != y.op || x.arity != y.arity || x.num != y.num || x.bop != y.bop) return false;
  if (!(x.kind == y.kind) || !(x.ctx == y.ctx)) return false;
  if (x.plus != y.plus || x.suc != y.suc || x.times != y.times) return false;
  for (std::size_t k = 0; k < x.arity; ++k)
    if (!(x.kids[k] == y.kids[k])) return false;
  return true;
}

// ------------------------------------------------------------- constructors

namespace {

[[noreturn]] void mismatch(const std::string& what) { throw KindMismatch(what); }

void need_ar(const Expr& e, const char* who) {
  if (e.is_ix()) mismatch(std::string(who) + ": expected an array, got " + e.kind().str());
}

void need_ix(const Expr& e, const char* who) {
  if (!e.is_ix()) mismatch(std::string(who) + ": expected an index, got " + e.kind().str());
}

void need_ix_of(const Expr& e, const Shape& s, const char* who) {
  need_ix(e, who);
  if (!(e.shape() == s)) mismatch(std::string(who) + ": index shape " + e.shape().str() + " where " + s.str() + " expected");
}

void need_ar_of(const Expr& e, const Shape& s, const char* who) {
  need_ar(e, who);
  if (!(e.shape() == s)) mismatch(std::string(who) + ": array shape " + e.shape().str() + " where " + s.str() + " expected");
}

void same_ctx(const Expr& a, const Expr& b, const char* who) {
  if (!(a.ctx() == b.ctx())) mismatch(std::string(who) + ": operands live in different contexts");
}

// Checks that body binds an index and returns (outer ctx, binder shape).
std::pair<Ctx, Shape> binder_of(const Expr& body, const char* who) {
  if (body.ctx().empty()) mismatch(std::string(who) + ": body has no binder");
  const Kind& k = body.ctx().last();
  if (!k.is_ix) mismatch(std::string(who) + ": binder must be an index, got " + k.str());
  return {body.ctx().parent(), k.shape};
}

Expr node(Op op, Ctx ctx, Kind kind, std::initializer_list<Expr> kids) {
  ExprNode n{op, std::move(ctx), std::move(kind), {}, 0, 0, BinOp::Plus, std::nullopt, std::nullopt, std::nullopt};
  for (const auto& k : kids) n.kids[n.arity++] = k;
  return make_node(std::move(n));
}

Expr with(Expr e, std::size_t num, BinOp bop, std::optional<PlusFact> pf, std::optional<SucFact> sf,
          std::optional<TimesFact> tf) {
  ExprNode n = *e.node();
  n.num = num;
  n.bop = bop;
  n.plus = std::move(pf);
  n.suc = std::move(sf);
  n.times = std::move(tf);
  return make_node(std::move(n));
}

void check_slide_facts(const PlusFact& sp, const SucFact& su, const char* who) {
  if (!(sp.p == su.p)) mismatch(std::string(who) + ": plus and suc facts disagree on p");
  PlusFact::make(sp.s, sp.p, sp.r);
  SucFact::make(su.p, su.u);
}

}  // namespace

Expr var(const Ctx& ctx, std::size_t v) {
  Kind k = ctx.at(v);
  ExprNode n{Op::Var, ctx, std::move(k), {}, 0, v, BinOp::Plus, std::nullopt, std::nullopt, std::nullopt};
  return make_node(std::move(n));
}

Expr zero(const Ctx& ctx, const Shape& s) { return node(Op::Zero, ctx, Kind::ar(s), {}); }
Expr one(const Ctx& ctx, const Shape& s) { return node(Op::One, ctx, Kind::ar(s), {}); }

Expr imap_s(const Expr& body) {
  auto [ctx, s] = binder_of(body, "imaps");
  need_ar_of(body, Shape::unit(), "imaps");
  return node(Op::ImapS, ctx, Kind::ar(s), {body});
}

Expr sel_s(const Expr& a, const Expr& i) {
  need_ar(a, "sels");
  need_ix_of(i, a.shape(), "sels");
  same_ctx(a, i, "sels");
  return node(Op::SelS, a.ctx(), Kind::ar(Shape::unit()), {a, i});
}

Expr imap(const Expr& body) {
  auto [ctx, s] = binder_of(body, "imap");
  need_ar(body, "imap");
  return node(Op::Imap, ctx, Kind::ar(Shape::prod(s, body.shape())), {body});
}

Expr sel(const Expr& a, const Expr& i) {
  need_ar(a, "sel");
  if (a.shape().is_leaf()) mismatch("sel: array shape " + a.shape().str() + " is not a product");
  need_ix_of(i, a.shape().left(), "sel");
  same_ctx(a, i, "sel");
  return node(Op::Sel, a.ctx(), Kind::ar(a.shape().right()), {a, i});
}

Expr imapb(const TimesFact& m, const Expr& body) {
  auto [ctx, s] = binder_of(body, "imapb");
  TimesFact::make(m.s, m.p, m.q);
  if (!(s == m.s)) mismatch("imapb: binder shape " + s.str() + " does not match fact " + m.s.str());
  need_ar_of(body, m.p, "imapb");
  return with(node(Op::Imapb, ctx, Kind::ar(m.q), {body}), 0, BinOp::Plus, std::nullopt, std::nullopt, m);
}

Expr selb(const TimesFact& m, const Expr& a, const Expr& i) {
  TimesFact::make(m.s, m.p, m.q);
  need_ar_of(a, m.q, "selb");
  need_ix_of(i, m.s, "selb");
  same_ctx(a, i, "selb");
  return with(node(Op::Selb, a.ctx(), Kind::ar(m.p), {a, i}), 0, BinOp::Plus, std::nullopt, std::nullopt, m);
}

Expr sum(const Expr& body) {
  auto [ctx, s] = binder_of(body, "sum");
  need_ar(body, "sum");
  return node(Op::Sum, ctx, body.kind(), {body});
}

Expr zero_but(const Expr& i, const Expr& j, const Expr& e) {
  need_ix(i, "zero-but");
  need_ix_of(j, i.shape(), "zero-but");
  need_ar(e, "zero-but");
  same_ctx(i, j, "zero-but");
  same_ctx(i, e, "zero-but");
  return node(Op::ZeroBut, e.ctx(), e.kind(), {i, j, e});
}

Expr slide(const Expr& i, const PlusFact& sp, const Expr& e, const SucFact& su) {
  check_slide_facts(sp, su, "slide");
  need_ix_of(i, sp.s, "slide");
  need_ar_of(e, sp.r, "slide");
  same_ctx(i, e, "slide");
  return with(node(Op::Slide, e.ctx(), Kind::ar(su.u), {i, e}), 0, BinOp::Plus, sp, su, std::nullopt);
}

Expr backslide(const Expr& i, const Expr& e, const SucFact& su, const PlusFact& sp) {
  check_slide_facts(sp, su, "backslide");
  need_ix_of(i, sp.s, "backslide");
  need_ar_of(e, su.u, "backslide");
  same_ctx(i, e, "backslide");
  return with(node(Op::Backslide, e.ctx(), Kind::ar(sp.r), {i, e}), 0, BinOp::Plus, sp, su, std::nullopt);
}

Expr logistic(const Expr& e) {
  need_ar(e, "logistic");
  return node(Op::Logistic, e.ctx(), e.kind(), {e});
}

Expr bin(BinOp op, const Expr& a, const Expr& b) {
  need_ar(a, "bin");
  need_ar_of(b, a.shape(), "bin");
  same_ctx(a, b, "bin");
  return with(node(Op::Bin, a.ctx(), a.kind(), {a, b}), 0, op, std::nullopt, std::nullopt, std::nullopt);
}

Expr plus(const Expr& a, const Expr& b) { return bin(BinOp::Plus, a, b); }
Expr mul(const Expr& a, const Expr& b) { return bin(BinOp::Mul, a, b); }

Expr scaledown(std::size_t n, const Expr& e) {
  if (n == 0) throw KindMismatch("scaledown by zero");
  need_ar(e, "scaledown");
  return with(node(Op::Scaledown, e.ctx(), e.kind(), {e}), n, BinOp::Plus, std::nullopt, std::nullopt, std::nullopt);
}

Expr minus(const Expr& e) {
  need_ar(e, "minus");
  return node(Op::Minus, e.ctx(), e.kind(), {e});
}

Expr ix_div(const TimesFact& m, const Expr& i) {
  TimesFact::make(m.s, m.p, m.q);
  need_ix_of(i, m.q, "div");
  return with(node(Op::Div, i.ctx(), Kind::ix(m.s), {i}), 0, BinOp::Plus, std::nullopt, std::nullopt, m);
}

Expr ix_mod(const TimesFact& m, const Expr& i) {
  TimesFact::make(m.s, m.p, m.q);
  need_ix_of(i, m.q, "mod");
  return with(node(Op::Mod, i.ctx(), Kind::ix(m.p), {i}), 0, BinOp::Plus, std::nullopt, std::nullopt, m);
}

Expr ix_plus(const Expr& i, const Expr& j, const SucFact& su, const PlusFact& sp) {
  check_slide_facts(sp, su, "ix-plus");
  need_ix_of(i, sp.s, "ix-plus");
  need_ix_of(j, su.u, "ix-plus");
  same_ctx(i, j, "ix-plus");
  return with(node(Op::IxPlus, i.ctx(), Kind::ix(sp.r), {i, j}), 0, BinOp::Plus, sp, su, std::nullopt);
}

Expr ix_minus(const Expr& i, const Expr& j, const PlusFact& sp, const SucFact& su, const Expr& body) {
  check_slide_facts(sp, su, "ix-minus");
  auto [ctx, u] = binder_of(body, "ix-minus");
  need_ix_of(i, sp.r, "ix-minus");
  need_ix_of(j, sp.s, "ix-minus");
  same_ctx(i, j, "ix-minus");
  if (!(ctx == i.ctx())) mismatch("ix-minus: body context does not extend the index context");
  if (!(u == su.u)) mismatch("ix-minus: binder shape " + u.str() + " is not " + su.u.str());
  need_ar(body, "ix-minus");
  return with(node(Op::IxMinus, ctx, body.kind(), {i, j, body}), 0, BinOp::Plus, sp, su, std::nullopt);
}

Expr ix_minus_r(const Expr& i, const Expr& j, const PlusFact& sp, const SucFact& su, const Expr& body) {
  check_slide_facts(sp, su, "ix-minus-r");
  auto [ctx, s] = binder_of(body, "ix-minus-r");
  need_ix_of(i, sp.r, "ix-minus-r");
  need_ix_of(j, su.u, "ix-minus-r");
  same_ctx(i, j, "ix-minus-r");
  if (!(ctx == i.ctx())) mismatch("ix-minus-r: body context does not extend the index context");
  if (!(s == sp.s)) mismatch("ix-minus-r: binder shape " + s.str() + " is not " + sp.s.str());
  need_ar(body, "ix-minus-r");
  return with(node(Op::IxMinusR, ctx, body.kind(), {i, j, body}), 0, BinOp::Plus, sp, su, std::nullopt);
}

Expr rebuild(const Expr& e, const Ctx& ctx, const std::array<Expr, 3>& k) {
  switch (e.op()) {
    case Op::Var: return var(ctx, e.var());
    case Op::Zero: return zero(ctx, e.shape());
    case Op::One: return one(ctx, e.shape());
    case Op::ImapS: return imap_s(k[0]);
    case Op::SelS: return sel_s(k[0], k[1]);
    case Op::Imap: return imap(k[0]);
    case Op::Sel: return sel(k[0], k[1]);
    case Op::Imapb: return imapb(e.times_fact(), k[0]);
    case Op::Selb: return selb(e.times_fact(), k[0], k[1]);
    case Op::Sum: return sum(k[0]);
    case Op::ZeroBut: return zero_but(k[0], k[1], k[2]);
    case Op::Slide: return slide(k[0], e.plus_fact(), k[1], e.suc_fact());
    case Op::Backslide: return backslide(k[0], k[1], e.suc_fact(), e.plus_fact());
    case Op::Logistic: return logistic(k[0]);
    case Op::Bin: return bin(e.bin_op(), k[0], k[1]);
    case Op::Scaledown: return scaledown(e.nat(), k[0]);
    case Op::Minus: return minus(k[0]);
    case Op::Div: return ix_div(e.times_fact(), k[0]);
    case Op::Mod: return ix_mod(e.times_fact(), k[0]);
    case Op::IxPlus: return ix_plus(k[0], k[1], e.suc_fact(), e.plus_fact());
    case Op::IxMinus: return ix_minus(k[0], k[1], e.plus_fact(), e.suc_fact(), k[2]);
    case Op::IxMinusR: return ix_minus_r(k[0], k[1], e.plus_fact(), e.suc_fact(), k[2]);
  }
  throw KindMismatch("unknown operator");
}

// --------------------------------------------------------- scope operations

namespace {

using VarFn = std::function<Expr(std::size_t)>;

// Rebuilds e with context `tgt`; free variables (index >= depth) are mapped
// through fn, whose results live in the depth-0 target and are lifted here.
Expr traverse(const Expr& e, const Ctx& tgt, std::size_t depth, const VarFn& fn) {
  if (e.op() == Op::Var) {
    std::size_t v = e.var();
    if (v < depth) return var(tgt, v);
    Expr r = fn(v - depth);
    if (depth == 0) return r;
    if (r.op() == Op::Var) return var(tgt, r.var() + depth);
    return lift_to(r, tgt);
  }
  std::array<Expr, 3> kids;
  std::size_t body = e.binds() ? e.body_slot() : 3;
  for (std::size_t k = 0; k < e.arity(); ++k) {
    const Expr& c = e.child(k);
    kids[k] = (k == body) ? traverse(c, tgt.extend(c.ctx().last()), depth + 1, fn) : traverse(c, tgt, depth, fn);
  }
  return rebuild(e, tgt, kids);
}

}  // namespace

Expr weaken(const Ctx& gamma, std::size_t v, const Expr& e) {
  if (!(e.ctx() == gamma.remove(v))) throw KindMismatch("weaken: term context is not Γ / v");
  return traverse(e, gamma, 0, [&](std::size_t x) { return var(gamma, x >= v ? x + 1 : x); });
}

Expr lift(const Expr& e, const Kind& k) { return lift_to(e, e.ctx().extend(k)); }

Expr lift_to(const Expr& e, const Ctx& target) {
  if (target.size() < e.ctx().size()) throw KindMismatch("lift_to: target context is smaller");
  std::size_t n = target.size() - e.ctx().size();
  if (n == 0) {
    if (!(e.ctx() == target)) throw KindMismatch("lift_to: contexts differ");
    return e;
  }
  if (!(target.drop(n) == e.ctx())) throw KindMismatch("lift_to: target does not extend the term context");
  if (e.op() == Op::Var) return var(target, e.var() + n);
  return traverse(e, target, 0, [&](std::size_t x) { return var(target, x + n); });
}

Expr substitute(std::size_t v, const Expr& e, const Expr& r) {
  Ctx tgt = e.ctx().remove(v);
  if (!(r.ctx() == tgt)) throw KindMismatch("substitute: replacement lives in the wrong context");
  if (!(r.kind() == e.ctx().at(v))) throw KindMismatch("substitute: replacement has kind " + r.kind().str());
  return traverse(e, tgt, 0, [&](std::size_t x) {
    if (x == v) return r;
    return var(tgt, x > v ? x - 1 : x);
  });
}

Expr ctx_swap(std::size_t v, const Expr& e) {
  if (v == 0) return e;
  Ctx tgt = e.ctx().swap_at(v);
  return traverse(e, tgt, 0, [&](std::size_t x) {
    if (x == v) return var(tgt, v - 1);
    if (x == v - 1) return var(tgt, v);
    return var(tgt, x);
  });
}

VarEq var_eq(std::size_t x, std::size_t y) {
  if (x == y) return {true, 0};
  return {false, y > x ? y - 1 : y};
}

bool mentions(const Expr& e, std::size_t v) {
  if (e.op() == Op::Var) return e.var() == v;
  std::size_t body = e.binds() ? e.body_slot() : 3;
  for (std::size_t k = 0; k < e.arity(); ++k)
    if (mentions(e.child(k), k == body ? v + 1 : v)) return true;
  return false;
}

// ----------------------------------------------------------------- builders

Expr Imap_s(const Ctx& ctx, const Shape& s, const BodyFn& f) { return imap_s(f(var(ctx.extend(Kind::ix(s)), 0))); }
Expr Imap(const Ctx& ctx, const Shape& s, const BodyFn& f) { return imap(f(var(ctx.extend(Kind::ix(s)), 0))); }
Expr Sum(const Ctx& ctx, const Shape& s, const BodyFn& f) { return sum(f(var(ctx.extend(Kind::ix(s)), 0))); }

Expr e_conv(const Expr& f, const PlusFact& sp, const Expr& g, const SucFact& su) {
  return Sum(f.ctx(), sp.s, [&](const Expr& i) {
    Expr sl = slide(i, sp, lift_to(f, i.ctx()), su);
    Expr k = Imap_s(i.ctx(), su.u, [&](const Expr& j) { return sel_s(lift_to(g, j.ctx()), lift_to(i, j.ctx())); });
    return mul(sl, k);
  });
}

Expr e_mconv(const PlusFact& sp, const Expr& inp, const Expr& w, const Expr& b, const SucFact& su) {
  return Imap(inp.ctx(), b.shape(), [&](const Expr& i) {
    Expr c = e_conv(lift_to(inp, i.ctx()), sp, sel(lift_to(w, i.ctx()), i), su);
    Expr k = Imap_s(i.ctx(), su.u, [&](const Expr& j) { return sel_s(lift_to(b, j.ctx()), lift_to(i, j.ctx())); });
    return plus(c, k);
  });
}

Expr e_avgp2(std::size_t m, std::size_t n, const Expr& a) {
  TimesFact tf = TimesFact::prod(TimesFact::leaf(m, 2), TimesFact::leaf(n, 2));
  return Imap_s(a.ctx(), tf.s, [&](const Expr& i) {
    return scaledown(4, Sum(i.ctx(), tf.p, [&](const Expr& j) {
                       return sel_s(selb(tf, lift_to(a, j.ctx()), lift_to(i, j.ctx())), j);
                     }));
  });
}

Expr e_dotp(const Expr& a, const Expr& b) {
  return Sum(a.ctx(), a.shape(), [&](const Expr& i) {
    return mul(sel_s(lift_to(a, i.ctx()), i), sel_s(lift_to(b, i.ctx()), i));
  });
}

}  // namespace arrad
