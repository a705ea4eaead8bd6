#include "properties.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "arrad/autodiff.hpp"
#include "arrad/chain.hpp"
#include "arrad/cnn.hpp"
#include "arrad/eval.hpp"
#include "arrad/gradcheck.hpp"
#include "arrad/optimizer.hpp"
#include "arrad/tensor.hpp"

namespace arrad::testing {

std::vector<Shape> shape_structures(std::size_t leaves) {
  if (leaves == 1) return {Shape::leaf(1)};
  std::vector<Shape> out;
  for (std::size_t a = 1; a < leaves; ++a)
    for (const Shape& l : shape_structures(a))
      for (const Shape& r : shape_structures(leaves - a)) out.push_back(Shape::prod(l, r));
  return out;
}

Shape with_extents(const Shape& structure, const std::vector<std::size_t>& ext) {
  std::size_t k = 0;
  std::function<Shape(const Shape&)> go = [&](const Shape& t) {
    if (t.is_leaf()) return Shape::leaf(ext.at(k++));
    Shape l = go(t.left());
    return Shape::prod(l, go(t.right()));
  };
  return go(structure);
}

namespace {

// Calls f(ext) for every extent vector of length n with entries in [lo, hi].
void each_extents(std::size_t n, std::size_t lo, std::size_t hi, const std::function<void(const std::vector<std::size_t>&)>& f) {
  std::vector<std::size_t> ext(n, lo);
  while (true) {
    f(ext);
    std::size_t k = 0;
    while (k < n && ext[k] == hi) ext[k++] = lo;
    if (k == n) return;
    ++ext[k];
  }
}

}  // namespace

std::vector<Shape> all_shapes(std::size_t max_leaves, std::size_t max_extent) {
  std::vector<Shape> out;
  for (std::size_t l = 1; l <= max_leaves; ++l)
    for (const Shape& st : shape_structures(l))
      each_extents(l, 1, max_extent, [&](const std::vector<std::size_t>& e) { out.push_back(with_extents(st, e)); });
  return out;
}

CheckResult check_pos_algebra(std::size_t max_leaves, std::size_t max_extent, bool right) {
  CheckResult res;
  for (std::size_t l = 1; l <= max_leaves; ++l) {
    for (const Shape& st : shape_structures(l)) {
      // Each leaf independently takes (s, p) with s ≥ 1 and s + p ≤ max_extent.
      std::vector<std::pair<std::size_t, std::size_t>> leaf_facts;
      for (std::size_t s = 1; s <= max_extent; ++s)
        for (std::size_t p = 0; s + p <= max_extent; ++p) leaf_facts.emplace_back(s, p);
      each_extents(l, 0, leaf_facts.size() - 1, [&](const std::vector<std::size_t>& choice) {
        std::vector<std::size_t> sv, pv;
        for (std::size_t c : choice) {
          sv.push_back(leaf_facts[c].first);
          pv.push_back(leaf_facts[c].second);
        }
        PlusFact sp = PlusFact::infer(with_extents(st, sv), with_extents(st, pv));
        SucFact su = SucFact::infer(sp.p);
        auto ps = all_positions(sp.s), pu = all_positions(su.u), pr = all_positions(sp.r);
        // j ⊕ k is defined everywhere and j ⊝ (j ⊕ k) recovers k.
        for (const Pos& j : ps)
          for (const Pos& k : pu) {
            ++res.checks;
            Pos i = pos_add(j, k, su, sp);
            auto back = pos_sub(i, j, sp, su);
            if (!back || !(*back == k)) res.fail("pos_sub(pos_add(j,k), j) != k at " + sp.r.str());
            if (right) {
              auto kr = pos_sub_right(i, k, sp, su);
              if (!kr || !(*kr == j)) res.fail("pos_sub_right(pos_add(j,k), k) != j at " + sp.r.str());
            }
          }
        // Wherever i ⊝ j is defined it is a genuine preimage.
        for (const Pos& i : pr) {
          for (const Pos& j : ps) {
            ++res.checks;
            auto k = pos_sub(i, j, sp, su);
            if (k && !(pos_add(j, *k, su, sp) == i)) res.fail("pos_add(j, pos_sub(i,j)) != i at " + sp.r.str());
          }
          if (right)
            for (const Pos& k : pu) {
              ++res.checks;
              auto j = pos_sub_right(i, k, sp, su);
              if (j && !(pos_add(*j, k, su, sp) == i)) res.fail("pos_add(pos_sub_right(i,k), k) != i at " + sp.r.str());
            }
        }
      });
    }
  }
  return res;
}

namespace {

void check_one_reshape(const Reshape& r, CheckResult& res) {
  ++res.checks;
  Reshape rv = r.rev();
  if (!(rv.rev() == r)) res.fail("rev(rev r) != r for " + r.str());
  if (!(rv.source() == r.target()) || !(rv.target() == r.source())) res.fail("rev does not swap endpoints for " + r.str());
  for (const Pos& i : all_positions(r.target())) {
    ++res.checks;
    if (!(rv.apply(r.apply(i)) == i)) res.fail("rev does not invert apply for " + r.str() + " at " + i.str());
  }
  for (const Pos& j : all_positions(r.source())) {
    ++res.checks;
    if (!(r.apply(rv.apply(j)) == j)) res.fail("apply does not invert rev for " + r.str() + " at " + j.str());
  }
}

}  // namespace

CheckResult check_reshapes(std::size_t max_leaves, std::size_t max_extent) {
  CheckResult res;
  auto shapes = all_shapes(max_leaves, max_extent);
  std::vector<std::vector<Shape>> by_leaves(max_leaves + 1);
  for (const Shape& s : shapes) by_leaves[s.leaf_count()].push_back(s);

  for (const Shape& s : shapes) check_one_reshape(Reshape::eq(s), res);
  for (std::size_t m = 1; m <= max_extent; ++m)
    for (std::size_t n = 1; n <= max_extent; ++n) {
      check_one_reshape(Reshape::split(m, n), res);
      check_one_reshape(Reshape::flat(m, n), res);
      check_one_reshape(Reshape::compose(Reshape::flat(m, n), Reshape::split(m, n)), res);
    }
  for (std::size_t a = 1; a < max_leaves; ++a)
    for (std::size_t b = 1; a + b <= max_leaves; ++b)
      for (const Shape& s : by_leaves[a])
        for (const Shape& p : by_leaves[b]) {
          check_one_reshape(Reshape::swap(s, p), res);
          check_one_reshape(Reshape::pair(Reshape::eq(s), Reshape::eq(p)), res);
          // swap ∙ swap is the identity on positions
          Reshape ss = Reshape::compose(Reshape::swap(p, s), Reshape::swap(s, p));
          check_one_reshape(ss, res);
          for (const Pos& i : all_positions(ss.target())) {
            ++res.checks;
            if (!(ss.apply(i) == i)) res.fail("swap ∙ swap is not the identity at " + i.str());
          }
        }
  for (std::size_t a = 1; a + 2 <= max_leaves; ++a)
    for (std::size_t b = 1; a + b + 1 <= max_leaves; ++b)
      for (std::size_t c = 1; a + b + c <= max_leaves; ++c)
        for (const Shape& s : by_leaves[a])
          for (const Shape& p : by_leaves[b])
            for (const Shape& q : by_leaves[c]) {
              check_one_reshape(Reshape::assocl(s, p, q), res);
              check_one_reshape(Reshape::assocr(s, p, q), res);
              check_one_reshape(Reshape::compose(Reshape::assocr(s, p, q), Reshape::assocl(s, p, q)), res);
            }

  // rblock over four leaf shapes.
  if (max_leaves >= 4)
    each_extents(4, 1, max_extent, [&](const std::vector<std::size_t>& e) {
      Shape s = Shape::leaf(e[0]), p = Shape::leaf(e[1]), q = Shape::leaf(e[2]), r = Shape::leaf(e[3]);
      Reshape b = rblock(s, p, q, r), b2 = rblock(s, q, p, r);
      check_one_reshape(b, res);
      if (!(b2.source() == b.target()) || !(b2.target() == b.source())) {
        res.fail("rblock endpoints do not match their exchange");
        return;
      }
      Reshape brev = b.rev();
      for (const Pos& i : all_positions(b.target())) {
        ++res.checks;
        if (!(b2.apply(b.apply(i)) == i)) res.fail("rblock is not self-inverse at " + i.str());
        Pos ii = i.left().left(), jj = i.left().right(), kk = i.right().left(), ll = i.right().right();
        Pos expect = Pos::prod(Pos::prod(ii, kk), Pos::prod(jj, ll));
        if (!(b.apply(i) == expect)) res.fail("rblock does not exchange the middle indices at " + i.str());
      }
      for (const Pos& j : all_positions(b.source())) {
        ++res.checks;
        if (!(brev.apply(j) == b2.apply(j))) res.fail("rev(rblock) differs from the exchanged rblock at " + j.str());
      }
    });
  return res;
}

CheckResult check_slide_adjoint(std::size_t max_extent, std::uint64_t seed) {
  CheckResult res;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rand_tensor = [&](const Shape& s) {
    Tensor t = Tensor::konst(s, 0.0);
    for (double& x : t.data()) x = u(rng);
    return t;
  };
  auto dot = [](const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
  };
  auto check = [&](const PlusFact& sp) {
    SucFact su = SucFact::infer(sp.p);
    Tensor x = rand_tensor(sp.r), y = rand_tensor(su.u);
    for (const Pos& i : all_positions(sp.s)) {
      ++res.checks;
      double lhs = dot(slide(i, sp, x, su), y);
      double rhs = dot(x, backslide(i, y, su, 0.0, sp));
      double gap = std::fabs(lhs - rhs);
      res.worst = std::max(res.worst, gap);
      if (gap > 1e-12) res.fail("adjointness gap " + std::to_string(gap) + " at r = " + sp.r.str());
    }
  };
  for (std::size_t m = 1; m <= max_extent; ++m)
    for (std::size_t n = 0; n <= max_extent; ++n) check(PlusFact::leaf(m, n));
  check(PlusFact::infer(Shape::of({2, 3}), Shape::of({3, 2})));
  return res;
}

CheckResult check_optimizer_soundness(std::uint64_t seed, std::size_t terms, double rel_tol) {
  CheckResult res;
  TermGen gen(seed);
  auto compare = [&](const Expr& e, const ValueEnv& env, const char* what) {
    ++res.checks;
    Expr o = optimize(e, 10);
    if (!(o.ctx() == e.ctx()) || !(o.kind() == e.kind())) {
      res.fail(std::string(what) + ": optimizer changed the context or kind of " + to_sexpr(e));
      return;
    }
    ValueEnv a = env, b = env;
    Tensor va = evaluate_array(e, a), vb = evaluate_array(o, b);
    for (std::size_t k = 0; k < va.size(); ++k) {
      double gap = std::fabs(va[k] - vb[k]) / std::max({1.0, std::fabs(va[k]), std::fabs(vb[k])});
      res.worst = std::max(res.worst, gap);
      if (gap > rel_tol) {
        res.fail(std::string(what) + ": optimized value differs for " + to_sexpr(e));
        return;
      }
    }
  };
  for (std::size_t n = 0; n < terms; ++n) {
    Expr e = gen.term();
    ValueEnv env = gen.inputs(e.ctx());
    compare(e, env, "term");
    // The adjoint of the first input under a random seed.
    Kind wk = Kind::ar(e.shape());
    Ctx gw = e.ctx().extend(wk);
    GradEnv g = grad(lift(e, wk), var(gw, 0), GradEnv::zero(gw, gw));
    std::vector<Value> vals;
    for (std::size_t k = 0; k < env.size(); ++k) vals.push_back(env.slot(k));
    vals.emplace_back(gen.tensor(e.shape()));
    compare(*g.slot(0), ValueEnv(gw, vals), "adjoint");
  }
  return res;
}

CheckResult check_cnn_shapes() {
  CheckResult res;
  const std::vector<std::pair<std::string, Shape>> declared = {
      {"c₁₁", Shape::of({6, 24, 24})},     {"c₁", Shape::of({6, 24, 24})},
      {"s₁", Shape::of({6, 12, 12})},      {"c₂₁", Shape::of({12, 1, 8, 8})},
      {"c₂", Shape::of({12, 1, 8, 8})},    {"s₂", Shape::of({12, 1, 4, 4})},
      {"r₁", Shape::of({10, 1, 1, 1, 1})}, {"r", Shape::of({10, 1, 1, 1, 1})},
  };
  const std::vector<std::pair<std::string, Shape>> base = {
      {"target", Shape::of({10, 1, 1, 1, 1})}, {"inp", Shape::of({28, 28})},
      {"k₁", Shape::of({6, 5, 5})},             {"b₁", Shape::of({6})},
      {"k₂", Shape::of({12, 6, 5, 5})},         {"b₂", Shape::of({12})},
      {"fc", Shape::of({10, 12, 1, 4, 4})},     {"b", Shape::of({10})},
  };
  Chain c = build_cnn_chain();
  if (c.base().size() != base.size() || c.size() != declared.size()) {
    res.fail("unexpected slot counts");
    return res;
  }
  for (std::size_t k = 0; k < base.size(); ++k) {
    ++res.checks;
    if (c.base()[k].first != base[k].first || !(c.base()[k].second == base[k].second))
      res.fail("base slot " + c.base()[k].first + " has shape " + c.base()[k].second.str());
  }
  for (std::size_t k = 0; k < declared.size(); ++k) {
    ++res.checks;
    const Binding& b = c.bindings()[k];
    if (b.name != declared[k].first || !(b.body.shape() == declared[k].second))
      res.fail("binding " + b.name + " has shape " + b.body.shape().str());
  }
  // The evaluated values carry the same shapes.
  CnnWeights w = init_weights(1);
  Dataset d = synth_digits(1, 1);
  ValueEnv in(c.base_ctx(), {one_hot(d.labels[0]), d.images[0], w.k1, w.b1, w.k2, w.b2, w.fc, w.b});
  ValueEnv env = chain_eval_forward(c, in);
  for (std::size_t k = 0; k < declared.size(); ++k) {
    ++res.checks;
    const Tensor& t = std::get<Tensor>(env.slot(c.value_slot(k)));
    if (!(t.shape() == declared[k].second)) res.fail("evaluated " + declared[k].first + " has shape " + t.shape().str());
  }
  return res;
}

}  // namespace arrad::testing
