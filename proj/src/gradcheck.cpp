#include "arrad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "arrad/autodiff.hpp"
#include "arrad/chain.hpp"
#include "arrad/cnn.hpp"
#include "arrad/errors.hpp"
#include "arrad/optimizer.hpp"

namespace arrad {

namespace {

constexpr std::size_t kMaxExtent = 3;
constexpr std::size_t kMaxLeaves = 3;
constexpr std::size_t kMaxBinderSize = 9;
// Bound on the product of bound-index extents, which is what evaluation
// cost grows with; past it no further sums are introduced.
constexpr std::size_t kMaxIndexVolume = 48;

Shape with_leaves(const Shape& s, const std::vector<std::size_t>& ext) {
  std::size_t k = 0;
  std::function<Shape(const Shape&)> go = [&](const Shape& t) {
    if (t.is_leaf()) return Shape::leaf(ext.at(k++));
    Shape l = go(t.left());
    return Shape::prod(l, go(t.right()));
  };
  return go(s);
}

std::vector<std::size_t> ix_slots(const Ctx& c) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < c.size(); ++v)
    if (c.at(v).is_ix) out.push_back(v);
  return out;
}

std::size_t ix_volume(const Ctx& c) {
  std::size_t v = 1;
  for (std::size_t k : ix_slots(c)) v *= c.at(k).shape.size();
  return v;
}

}  // namespace

bool TermGen::in_universe(const Shape& s) {
  if (s.leaf_count() > kMaxLeaves) return false;
  for (std::size_t n : s.leaves())
    if (n < 1 || n > kMaxExtent) return false;
  return true;
}

const std::vector<Shape>& TermGen::universe() {
  static const std::vector<Shape> u = [] {
    std::vector<Shape> out, leaves;
    for (std::size_t n = 1; n <= kMaxExtent; ++n) leaves.push_back(Shape::leaf(n));
    out = leaves;
    for (auto& a : leaves)
      for (auto& b : leaves) out.push_back(Shape::prod(a, b));
    for (auto& a : leaves)
      for (auto& b : leaves)
        for (auto& c : leaves) {
          out.push_back(Shape::prod(a, Shape::prod(b, c)));
          out.push_back(Shape::prod(Shape::prod(a, b), c));
        }
    return out;
  }();
  return u;
}

TermGen::TermGen(std::uint64_t seed, int max_depth) : rng_(seed), max_depth_(max_depth) {}

std::size_t TermGen::pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

bool TermGen::coin(double p) { return std::bernoulli_distribution(p)(rng_); }

Shape TermGen::pick_shape(std::size_t max_size) {
  std::vector<Shape> ok;
  for (const Shape& s : universe())
    if (s.size() <= max_size) ok.push_back(s);
  return ok[pick(ok.size())];
}

Tensor TermGen::tensor(const Shape& s) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t = Tensor::konst(s, 0.0);
  for (double& x : t.data()) x = u(rng_);
  return t;
}

ValueEnv TermGen::inputs(const Ctx& ctx) {
  std::vector<Value> vals;
  for (const Kind& k : ctx.kinds()) {
    if (k.is_ix) throw KindMismatch("inputs: context has an index slot");
    vals.emplace_back(tensor(k.shape));
  }
  return ValueEnv(ctx, std::move(vals));
}

void TermGen::count(const Expr& e) {
  ++coverage_[e.op()];
  for (std::size_t k = 0; k < e.arity(); ++k) count(e.child(k));
}

Expr TermGen::leaf(const Ctx& c, const Shape& s) {
  std::vector<std::size_t> vs;
  for (std::size_t v = 0; v < c.size(); ++v)
    if (c.at(v) == Kind::ar(s)) vs.push_back(v);
  std::size_t r = pick(10);
  if (vs.empty() || r == 0) return zero(c, s);
  if (r == 1) return one(c, s);
  return var(c, vs[pick(vs.size())]);
}

// An index of shape t, from an index variable already in scope, possibly
// through div, mod or ix-plus. Returns an invalid Expr if none applies.
Expr TermGen::index_of_shape(const Ctx& c, const Shape& t) {
  std::vector<Expr> cands;
  auto ixs = ix_slots(c);
  for (std::size_t v : ixs) {
    const Shape& q = c.at(v).shape;
    Expr i = var(c, v);
    if (q == t) cands.push_back(i);
    if (!q.same_structure(t)) continue;
    bool div_ok = true, mod_ok = true;
    std::vector<std::size_t> p_div, s_mod;
    for (std::size_t k = 0; k < t.leaf_count(); ++k) {
      std::size_t qn = q.leaves()[k], tn = t.leaves()[k];
      div_ok = div_ok && qn % tn == 0;
      mod_ok = mod_ok && qn % tn == 0;
      if (qn % tn == 0) {
        p_div.push_back(qn / tn);
        s_mod.push_back(qn / tn);
      }
    }
    if (div_ok) cands.push_back(ix_div(TimesFact::make(t, with_leaves(t, p_div), q), i));
    if (mod_ok) cands.push_back(ix_mod(TimesFact::make(with_leaves(t, s_mod), t, q), i));
    // i ⊕ j with i : s, j : u and s + (u - 1) = t
    for (std::size_t w : ixs) {
      const Shape& u = c.at(w).shape;
      if (!u.same_structure(t)) continue;
      bool ok = true;
      std::vector<std::size_t> pl;
      for (std::size_t k = 0; k < t.leaf_count(); ++k) {
        ok = ok && q.leaves()[k] + u.leaves()[k] - 1 == t.leaves()[k];
        pl.push_back(u.leaves()[k] - 1);
      }
      if (!ok) continue;
      Shape p = with_leaves(t, pl);
      cands.push_back(ix_plus(i, var(c, w), SucFact::make(p, u), PlusFact::make(q, p, t)));
    }
  }
  if (cands.empty()) return {};
  return cands[pick(cands.size())];
}

namespace {

// Builds f(ctx', i) with i : ix t. Uses an index already in scope when
// possible; otherwise binds fresh indices with sums so that div, mod and
// ix-plus still get exercised.
using IxBody = std::function<Expr(const Ctx&, const Expr&)>;

}  // namespace

Expr TermGen::array(const Ctx& c, const Shape& s, int d) {
  if (d <= 0) return leaf(c, s);

  // Returns an invalid Expr if no index is in scope and binding is over budget.
  auto with_index = [&](const Ctx& c0, const Shape& t, const IxBody& f) -> Expr {
    bool may_bind = ix_volume(c0) * t.size() <= kMaxIndexVolume;
    if (!may_bind || coin(0.5)) {
      Expr i = index_of_shape(c0, t);
      if (i.valid()) return f(c0, i);
      if (!may_bind) return {};
    }
    auto bind = [](const Ctx& c1, const Shape& q, const std::function<Expr(const Ctx&, const Expr&)>& g) -> Expr {
      Ctx cj = c1.extend(Kind::ix(q));
      Expr body = g(cj, var(cj, 0));
      return body.valid() ? sum(body) : Expr{};
    };
    switch (pick(4)) {
      case 0: {  // div: bind q = t * p
        std::vector<std::size_t> pl;
        for (std::size_t n : t.leaves()) pl.push_back(1 + pick(kMaxExtent / n));
        TimesFact m = TimesFact::infer(t, with_leaves(t, pl));
        return bind(c0, m.q, [&](const Ctx& cj, const Expr& j) { return f(cj, ix_div(m, j)); });
      }
      case 1: {  // mod: bind q = s * t
        std::vector<std::size_t> sl;
        for (std::size_t n : t.leaves()) sl.push_back(1 + pick(kMaxExtent / n));
        TimesFact m = TimesFact::infer(with_leaves(t, sl), t);
        return bind(c0, m.q, [&](const Ctx& cj, const Expr& j) { return f(cj, ix_mod(m, j)); });
      }
      case 2: {  // ix-plus: bind a : s and b : u with s + (u - 1) = t
        std::vector<std::size_t> pl;
        for (std::size_t n : t.leaves()) pl.push_back(pick(n));
        Shape p = with_leaves(t, pl);
        std::vector<std::size_t> sl;
        for (std::size_t k = 0; k < pl.size(); ++k) sl.push_back(t.leaves()[k] - pl[k]);
        PlusFact sp = PlusFact::make(with_leaves(t, sl), p, t);
        SucFact su = SucFact::infer(p);
        return bind(c0, sp.s, [&](const Ctx& ca, const Expr& a) {
          return bind(ca, su.u, [&](const Ctx& cb, const Expr& b2) { return f(cb, ix_plus(lift_to(a, cb), b2, su, sp)); });
        });
      }
      default:
        return bind(c0, t, f);
    }
  };

  enum P { PLeaf, PBin, PUnary, PSum, PImapS, PImap, PImapb, PSelS, PSel, PSelb, PZeroBut, PSlide, PBackslide, PIxMinus, PIxMinusR };
  std::vector<P> ps = {PLeaf, PBin, PBin, PUnary, PUnary, PSum, PImapS, PZeroBut, PIxMinus, PIxMinusR};
  if (!s.is_leaf()) ps.push_back(PImap), ps.push_back(PImap);
  ps.push_back(PImapb);
  if (s == Shape::unit()) ps.push_back(PSelS), ps.push_back(PSelS);
  if (s.leaf_count() < kMaxLeaves) ps.push_back(PSel), ps.push_back(PSel);
  ps.push_back(PSelb);
  bool all_ge2 = std::all_of(s.leaves().begin(), s.leaves().end(), [](std::size_t n) { return n >= 2; });
  if (all_ge2) ps.push_back(PSlide), ps.push_back(PSlide), ps.push_back(PBackslide), ps.push_back(PBackslide);

  if (ix_volume(c) * 4 > kMaxIndexVolume) ps.erase(std::remove(ps.begin(), ps.end(), PSum), ps.end());
  P chosen = ps[pick(ps.size())];
  Expr out = [&]() -> Expr {
  switch (chosen) {
    case PLeaf:
      return leaf(c, s);
    case PBin: {
      Expr a = array(c, s, d - 1);
      return bin(coin(0.5) ? BinOp::Plus : BinOp::Mul, a, array(c, s, d - 1));
    }
    case PUnary: {
      Expr a = array(c, s, d - 1);
      switch (pick(3)) {
        case 0: return minus(a);
        case 1: return logistic(a);
        default: return scaledown(1 + pick(3), a);
      }
    }
    case PSum: {
      Shape t = pick_shape(4);
      return Sum(c, t, [&](const Expr& i) { return array(i.ctx(), s, d - 1); });
    }
    case PImapS:
      return Imap_s(c, s, [&](const Expr& i) { return array(i.ctx(), Shape::unit(), d - 1); });
    case PImap:
      return Imap(c, s.left(), [&](const Expr& i) { return array(i.ctx(), s.right(), d - 1); });
    case PImapb: {
      std::vector<std::size_t> bl, pl;
      for (std::size_t n : s.leaves()) {
        std::vector<std::size_t> divs;
        for (std::size_t k = 1; k <= n; ++k)
          if (n % k == 0) divs.push_back(k);
        std::size_t b = divs[pick(divs.size())];
        bl.push_back(b);
        pl.push_back(n / b);
      }
      TimesFact m = TimesFact::make(with_leaves(s, bl), with_leaves(s, pl), s);
      return imapb(m, array(c.extend(Kind::ix(m.s)), m.p, d - 1));
    }
    case PSelS: {
      Shape t = pick_shape(kMaxBinderSize);
      return with_index(c, t, [&](const Ctx& c1, const Expr& i) { return sel_s(array(c1, t, d - 1), i); });
    }
    case PSel: {
      Shape t = pick_shape(kMaxBinderSize);
      while (t.leaf_count() + s.leaf_count() > kMaxLeaves) t = pick_shape(kMaxBinderSize);
      return with_index(c, t, [&](const Ctx& c1, const Expr& i) { return sel(array(c1, Shape::prod(t, s), d - 1), i); });
    }
    case PSelb: {
      std::vector<std::size_t> bl;
      for (std::size_t n : s.leaves()) bl.push_back(1 + pick(kMaxExtent / n));
      TimesFact m = TimesFact::infer(with_leaves(s, bl), s);
      return with_index(c, m.s, [&](const Ctx& c1, const Expr& i) { return selb(m, array(c1, m.q, d - 1), i); });
    }
    case PZeroBut: {
      Shape t = pick_shape(kMaxBinderSize);
      return with_index(c, t, [&](const Ctx& c1, const Expr& i) {
        return with_index(c1, t, [&](const Ctx& c2, const Expr& j) {
          return zero_but(lift_to(i, c2), j, array(c2, s, d - 1));
        });
      });
    }
    case PSlide: {
      // result u = s, p = u - 1, slide offset shape sh with sh + p ≤ 3
      std::vector<std::size_t> pl, sl;
      for (std::size_t n : s.leaves()) {
        pl.push_back(n - 1);
        sl.push_back(1 + pick(kMaxExtent - (n - 1)));
      }
      Shape p = with_leaves(s, pl);
      PlusFact sp = PlusFact::infer(with_leaves(s, sl), p);
      SucFact su = SucFact::make(p, s);
      return with_index(c, sp.s, [&](const Ctx& c1, const Expr& i) { return slide(i, sp, array(c1, sp.r, d - 1), su); });
    }
    case PBackslide: {
      // result r = s = sh + p with sh, p ≥ 1; argument u = p + 1
      std::vector<std::size_t> pl, sl;
      for (std::size_t n : s.leaves()) {
        std::size_t pk = 1 + pick(n - 1);
        pl.push_back(pk);
        sl.push_back(n - pk);
      }
      PlusFact sp = PlusFact::make(with_leaves(s, sl), with_leaves(s, pl), s);
      SucFact su = SucFact::infer(sp.p);
      return with_index(c, sp.s, [&](const Ctx& c1, const Expr& i) { return backslide(i, array(c1, su.u, d - 1), su, sp); });
    }
    case PIxMinus:
    case PIxMinusR: {
      bool right = chosen == PIxMinusR;
      // Pick a small leaf or pair skeleton for r = sh + p, u = p + 1.
      Shape skel = pick_shape(kMaxBinderSize);
      std::vector<std::size_t> pl, sl, rl;
      for (std::size_t k = 0; k < skel.leaf_count(); ++k) {
        std::size_t pk = 1 + pick(2);
        std::size_t sk = 1 + pick(kMaxExtent - pk);
        pl.push_back(pk);
        sl.push_back(sk);
        rl.push_back(pk + sk);
      }
      PlusFact sp = PlusFact::make(with_leaves(skel, sl), with_leaves(skel, pl), with_leaves(skel, rl));
      SucFact su = SucFact::infer(sp.p);
      const Shape& jshape = right ? su.u : sp.s;
      const Shape& bshape = right ? sp.s : su.u;
      return with_index(c, sp.r, [&](const Ctx& c1, const Expr& i) {
        return with_index(c1, jshape, [&](const Ctx& c2, const Expr& j) {
          Expr body = array(c2.extend(Kind::ix(bshape)), s, d - 1);
          Expr il = lift_to(i, c2);
          return right ? ix_minus_r(il, j, sp, su, body) : ix_minus(il, j, sp, su, body);
        });
      });
    }
    default:
      break;
  }
  return {};
  }();
  return out.valid() ? out : leaf(c, s);
}

Expr prune_context(const Expr& e) {
  Expr out = e;
  for (std::size_t v = out.ctx().size(); v-- > 0;) {
    if (mentions(out, v)) continue;
    Ctx tgt = out.ctx().remove(v);
    const Kind& k = out.ctx().at(v);
    Expr r = k.is_ix ? Expr{} : zero(tgt, k.shape);
    if (!r.valid()) continue;
    out = substitute(v, out, r);
  }
  return out;
}

Expr TermGen::term(const Shape& s) {
  std::vector<Kind> ks;
  for (const Shape& u : universe()) ks.push_back(Kind::ar(u));
  Ctx base = Ctx::of(ks);
  Expr e;
  // Terms that mention no input carry no gradient information; retry.
  for (int attempt = 0; attempt < 64; ++attempt) {
    e = prune_context(array(base, s, max_depth_));
    if (e.ctx().size() > 0) break;
  }
  count(e);
  return e;
}

Expr TermGen::term() {
  return term(pick_shape(kMaxBinderSize));
}

GradcheckCase gradcheck_term(const Expr& e, TermGen& gen, double h, double rel_tol, double abs_floor, bool optimized) {
  GradcheckCase out;
  out.term = expr_file_text(e);
  const Ctx& g = e.ctx();
  Kind wk = Kind::ar(e.shape());
  Ctx gw = g.extend(wk);
  Expr el = lift(e, wk);
  GradEnv adj = grad(el, var(gw, 0), GradEnv::zero(gw, gw));
  if (optimized) adj = adj.map([](const Expr& t) { return optimize(t, 10); });

  ValueEnv base = gen.inputs(g);
  std::vector<Value> vals;
  for (std::size_t k = 0; k < g.size(); ++k) vals.push_back(base.slot(k));
  vals.emplace_back(Tensor::konst(e.shape(), 0.0));

  // Adjoints for every one-hot seed: ad[k][o][x] = ∂ e_o / ∂ input_k[x].
  std::size_t nout = e.shape().size();
  std::vector<std::vector<Tensor>> ad(g.size(), std::vector<Tensor>(nout));
#pragma omp parallel for schedule(dynamic)
  for (std::size_t o = 0; o < nout; ++o) {
    std::vector<Value> vs = vals;
    Tensor w = Tensor::konst(e.shape(), 0.0);
    w[o] = 1.0;
    vs.back() = w;
    ValueEnv env(gw, vs);
    for (std::size_t k = 0; k < g.size(); ++k) ad[k][o] = evaluate_array(*adj.slot(k), env);
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < g.size(); ++k)
    for (std::size_t x = 0; x < std::get<Tensor>(base.slot(k)).size(); ++x) coords.emplace_back(k, x);
  std::vector<std::pair<Tensor, Tensor>> fd(coords.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t n = 0; n < coords.size(); ++n) {
    auto [k, x] = coords[n];
    auto eval_at = [&](double delta) {
      std::vector<Value> vs(vals.begin(), vals.end() - 1);
      Tensor xt = std::get<Tensor>(base.slot(k));
      xt[x] += delta;
      vs[k] = xt;
      ValueEnv env(g, vs);
      return evaluate_array(e, env);
    };
    fd[n] = {eval_at(h), eval_at(-h)};
  }

  for (std::size_t n = 0; n < coords.size(); ++n) {
    auto [k, x] = coords[n];
    const auto& [fp, fm] = fd[n];
    for (std::size_t o = 0; o < nout; ++o) {
      double f = (fp[o] - fm[o]) / (2 * h);
      double a = ad[k][o][x];
      double err = std::fabs(a - f);
      double scale = std::max(std::fabs(a), std::fabs(f));
      double rel = scale > 0 ? err / scale : 0.0;
      if (err > std::max(rel_tol * scale, abs_floor)) out.pass = false;
      if (err > abs_floor) out.worst_rel = std::max(out.worst_rel, rel);
      out.worst_abs = std::max(out.worst_abs, err);
    }
  }
  return out;
}

GradcheckReport gradcheck_random(std::uint64_t seed, std::size_t cases, double h, double rel_tol, double abs_floor) {
  GradcheckReport rep;
  TermGen gen(seed);
  for (std::size_t n = 0; n < cases; ++n) {
    Expr e = gen.term();
    GradcheckCase c = gradcheck_term(e, gen, h, rel_tol, abs_floor, n % 2 == 1);
    rep.worst_rel = std::max(rep.worst_rel, c.worst_rel);
    if (!c.pass) ++rep.failures;
    rep.cases.push_back(std::move(c));
  }
  rep.coverage = gen.coverage();
  return rep;
}

std::vector<CnnCoordinate> gradcheck_cnn(std::uint64_t seed, std::size_t coords, double h, double rel_tol) {
  Dataset d = synth_digits(1, seed);
  CnnWeights w = init_weights(seed);
  Tensor target = one_hot(d.labels[0]);
  CnnModel model;
  auto res = model.run(target, d.images[0], w, true);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  struct Pick {
    const char* name;
    Tensor CnnWeights::*field;
    std::size_t grad_index;
  };
  const Pick picks[] = {{"k1", &CnnWeights::k1, 0}, {"b1", &CnnWeights::b1, 1}, {"fc", &CnnWeights::fc, 4}};
  std::vector<CnnCoordinate> out;
  for (std::size_t n = 0; n < coords; ++n) {
    const Pick& p = picks[n % 3];
    std::size_t size = (w.*(p.field)).size();
    std::size_t off;
    bool dup;
    do {
      off = std::uniform_int_distribution<std::size_t>(0, size - 1)(rng);
      dup = std::any_of(out.begin(), out.end(), [&](const CnnCoordinate& c) { return c.weight == p.name && c.offset == off; });
    } while (dup);
    auto loss_at = [&](double delta) {
      CnnWeights wp = w;
      (wp.*(p.field))[off] += delta;
      return model.run(target, d.images[0], wp, false).loss;
    };
    CnnCoordinate c;
    c.weight = p.name;
    c.offset = off;
    c.fd = (loss_at(h) - loss_at(-h)) / (2 * h);
    c.ad = res.grads.at(p.grad_index)[off];
    double scale = std::max(std::fabs(c.ad), std::fabs(c.fd));
    c.rel = scale > 0 ? std::fabs(c.ad - c.fd) / scale : 0.0;
    c.pass = c.rel <= rel_tol;
    out.push_back(c);
  }
  return out;
}

}  // namespace arrad
