#include "arrad/eval.hpp"

#include <cmath>
#include <functional>

#include "arrad/errors.hpp"

namespace arrad {

// ------------------------------------------------------------------ ValueEnv

ValueEnv::ValueEnv(const Ctx& ctx) : ctx_(ctx), vals_(ctx.size(), Tensor()), set_(ctx.size(), false) {}

ValueEnv::ValueEnv(const Ctx& ctx, std::vector<Value> oldest_first) : ctx_(ctx), vals_(std::move(oldest_first)) {
  if (vals_.size() != ctx.size()) throw KindMismatch("environment has wrong number of values");
  auto kinds = ctx.kinds();
  for (std::size_t k = 0; k < vals_.size(); ++k) check(kinds[k], vals_[k]);
  set_.assign(vals_.size(), true);
}

void ValueEnv::check(const Kind& k, const Value& v) const {
  if (k.is_ix) {
    const Pos* p = std::get_if<Pos>(&v);
    if (!p || !(p->shape() == k.shape)) throw KindMismatch("environment value does not have kind " + k.str());
  } else {
    const Tensor* t = std::get_if<Tensor>(&v);
    if (!t || !(t->shape() == k.shape)) throw KindMismatch("environment value does not have kind " + k.str());
  }
}

const Value& ValueEnv::lookup(std::size_t v) const {
  if (v >= vals_.size()) throw KindMismatch("unbound variable " + std::to_string(v));
  std::size_t k = vals_.size() - 1 - v;
  if (!set_[k]) throw KindMismatch("variable " + std::to_string(v) + " has no value");
  return vals_[k];
}

void ValueEnv::set_slot(std::size_t k, Value v) {
  auto kinds = ctx_.kinds();
  check(kinds.at(k), v);
  vals_[k] = std::move(v);
  set_[k] = true;
}

void ValueEnv::push(const Kind& k, Value v) {
  check(k, v);
  ctx_ = ctx_.extend(k);
  vals_.push_back(std::move(v));
  set_.push_back(true);
}

void ValueEnv::pop() {
  ctx_ = ctx_.parent();
  vals_.pop_back();
  set_.pop_back();
}

// -------------------------------------------------------- strict reference

namespace {

struct Scope {
  ValueEnv& env;
  Scope(ValueEnv& e, const Kind& k, Value v) : env(e) { env.push(k, std::move(v)); }
  ~Scope() { env.pop(); }
};

Tensor add(const Tensor& a, const Tensor& b) { return zip_with(a, b, [](double x, double y) { return x + y; }); }

// Nested right fold of array values over the positions of s.
Tensor fold_arrays(const Shape& s, const Shape& out, const std::function<Tensor(const Pos&)>& f) {
  const auto& ext = s.leaves();
  std::vector<std::size_t> idx(ext.size());
  std::function<Tensor(std::size_t)> go = [&](std::size_t k) -> Tensor {
    if (k == ext.size()) return f(Pos::from_leaves(s, idx));
    Tensor acc = Tensor::konst(out, 0.0);
    for (std::size_t i = ext[k]; i-- > 0;) {
      idx[k] = i;
      acc = add(go(k + 1), acc);
    }
    return acc;
  };
  return go(0);
}

Pos leafwise(const Shape& s, const Pos& a, const std::function<std::size_t(std::size_t, std::size_t)>& f) {
  std::vector<std::size_t> out(a.leaves().size());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = f(a.leaves()[l], l);
  return Pos::from_leaves(s, std::move(out));
}

}  // namespace

Tensor select_block(const TimesFact& m, const Tensor& a, const Pos& i) {
  if (!(a.shape() == m.q) || !(i.shape() == m.s)) throw ShapeError("select_block: shapes do not match fact");
  return Tensor::generate(m.p, [&](const Pos& j) {
    std::vector<std::size_t> k(j.leaves().size());
    for (std::size_t l = 0; l < k.size(); ++l) k[l] = i.leaves()[l] * m.p.leaves()[l] + j.leaves()[l];
    return a.at(Pos::from_leaves(m.q, k));
  });
}

Value evaluate(const Expr& e, ValueEnv& env) {
  if (!(e.ctx() == env.ctx())) throw KindMismatch("evaluate: environment does not match the term context");
  auto A = [&](std::size_t k) { return evaluate_array(e.child(k), env); };
  auto I = [&](std::size_t k) { return evaluate_index(e.child(k), env); };
  auto binder = [&]() { return e.body().ctx().last(); };
  switch (e.op()) {
    case Op::Var:
      return env.lookup(e.var());
    case Op::Zero:
      return Tensor::konst(e.shape(), 0.0);
    case Op::One:
      return Tensor::konst(e.shape(), 1.0);
    case Op::ImapS: {
      Kind bk = binder();
      return Tensor::generate(e.shape(), [&](const Pos& i) {
        Scope sc(env, bk, i);
        return evaluate_array(e.body(), env)[0];
      });
    }
    case Op::SelS: {
      Tensor a = A(0);
      return Tensor::konst(Shape::unit(), a.at(I(1)));
    }
    case Op::Imap: {
      Kind bk = binder();
      return unnest(bk.shape, e.body().shape(), [&](const Pos& i) {
        Scope sc(env, bk, i);
        return evaluate_array(e.body(), env);
      });
    }
    case Op::Sel:
      return select_outer(A(0), I(1));
    case Op::Imapb: {
      Kind bk = binder();
      const TimesFact& m = e.times_fact();
      return unblock(m, unnest(m.s, m.p, [&](const Pos& i) {
                       Scope sc(env, bk, i);
                       return evaluate_array(e.body(), env);
                     }));
    }
    case Op::Selb:
      return select_block(e.times_fact(), A(0), I(1));
    case Op::Sum: {
      Kind bk = binder();
      return fold_arrays(bk.shape, e.shape(), [&](const Pos& i) {
        Scope sc(env, bk, i);
        return evaluate_array(e.body(), env);
      });
    }
    case Op::ZeroBut: {
      if (I(0) == I(1)) return A(2);
      return Tensor::konst(e.shape(), 0.0);
    }
    case Op::Slide:
      return slide(I(0), e.plus_fact(), A(1), e.suc_fact());
    case Op::Backslide:
      return backslide(I(0), A(1), e.suc_fact(), 0.0, e.plus_fact());
    case Op::Logistic:
      return logistic(A(0));
    case Op::Bin: {
      Tensor a = A(0), b = A(1);
      if (e.bin_op() == BinOp::Plus) return add(a, b);
      return zip_with(a, b, [](double x, double y) { return x * y; });
    }
    case Op::Scaledown: {
      double n = static_cast<double>(e.nat());
      return map(A(0), [n](double x) { return x / n; });
    }
    case Op::Minus:
      return map(A(0), [](double x) { return -x; });
    case Op::Div: {
      const auto& p = e.times_fact().p.leaves();
      return leafwise(e.shape(), I(0), [&](std::size_t x, std::size_t l) { return x / p[l]; });
    }
    case Op::Mod: {
      const auto& p = e.times_fact().p.leaves();
      return leafwise(e.shape(), I(0), [&](std::size_t x, std::size_t l) { return x % p[l]; });
    }
    case Op::IxPlus:
      return pos_add(I(0), I(1), e.suc_fact(), e.plus_fact());
    case Op::IxMinus:
    case Op::IxMinusR: {
      Pos i = I(0), j = I(1);
      auto k = e.op() == Op::IxMinus ? pos_sub(i, j, e.plus_fact(), e.suc_fact())
                                     : pos_sub_right(i, j, e.plus_fact(), e.suc_fact());
      if (!k) return Tensor::konst(e.shape(), 0.0);
      Scope sc(env, binder(), *k);
      return evaluate_array(e.body(), env);
    }
  }
  throw KindMismatch("evaluate: unknown operator");
}

Tensor evaluate_array(const Expr& e, ValueEnv& env) {
  Value v = evaluate(e, env);
  if (auto* t = std::get_if<Tensor>(&v)) return std::move(*t);
  throw KindMismatch("expected an array value");
}

Pos evaluate_index(const Expr& e, ValueEnv& env) {
  Value v = evaluate(e, env);
  if (auto* p = std::get_if<Pos>(&v)) return std::move(*p);
  throw KindMismatch("expected an index value");
}

// ------------------------------------------------------------- fast kernel

namespace {

constexpr std::size_t kMaxLeaves = 16;

struct KNode {
  Op op;
  BinOp bop = BinOp::Plus;
  double nat = 1.0;
  int kid[3] = {-1, -1, -1};
  std::vector<std::size_t> ext;   // result leaves
  std::vector<std::size_t> bext;  // binder leaves
  std::vector<std::size_t> aux;   // block extents / range bounds
  std::size_t level = 0;          // binder level (binder nodes) or level read (binder vars)
  bool from_binder = false;
  std::size_t slot = 0;           // environment slot, oldest first
};

}  // namespace

struct Kernel::Program {
  std::vector<KNode> nodes;
  int root = -1;
  std::size_t base = 0;    // environment size
  std::size_t levels = 0;  // max binder nesting

  int compile(const Expr& e, std::size_t depth) {
    KNode k;
    k.op = e.op();
    k.ext = e.shape().leaves();
    if (k.ext.size() > kMaxLeaves) throw ShapeError("shape has too many leaves for the kernel");
    switch (e.op()) {
      case Op::Var: {
        std::size_t v = e.var();
        if (v < depth) {
          k.from_binder = true;
          k.level = depth - 1 - v;
        } else {
          k.slot = base - 1 - (v - depth);
        }
        break;
      }
      case Op::Bin:
        k.bop = e.bin_op();
        break;
      case Op::Scaledown:
        k.nat = static_cast<double>(e.nat());
        break;
      case Op::Imapb:
      case Op::Selb:
      case Op::Div:
      case Op::Mod:
        k.aux = e.times_fact().p.leaves();
        break;
      case Op::Backslide:
        k.aux = e.suc_fact().u.leaves();
        break;
      case Op::IxMinus:
        k.aux = e.suc_fact().u.leaves();
        break;
      case Op::IxMinusR:
        k.aux = e.plus_fact().s.leaves();
        break;
      default:
        break;
    }
    std::size_t body = e.binds() ? e.body_slot() : 3;
    if (e.binds()) {
      k.level = depth;
      k.bext = e.body().ctx().last().shape.leaves();
      if (k.bext.size() > kMaxLeaves) throw ShapeError("binder has too many leaves for the kernel");
      levels = std::max(levels, depth + 1);
    }
    for (std::size_t c = 0; c < e.arity(); ++c) k.kid[c] = compile(e.child(c), c == body ? depth + 1 : depth);
    nodes.push_back(std::move(k));
    return static_cast<int>(nodes.size() - 1);
  }
};

namespace {

struct Runner {
  const std::vector<KNode>& nodes;
  const std::vector<const double*>& arrays;
  const std::vector<std::vector<std::size_t>>& indices;
  std::vector<std::size_t> binders;  // levels * kMaxLeaves

  std::size_t* binder(std::size_t level) { return binders.data() + level * kMaxLeaves; }

  void index(int n, std::size_t* out) {
    const KNode& k = nodes[static_cast<std::size_t>(n)];
    std::size_t L = k.ext.size();
    switch (k.op) {
      case Op::Var: {
        const std::size_t* src = k.from_binder ? binder(k.level) : indices[k.slot].data();
        for (std::size_t l = 0; l < L; ++l) out[l] = src[l];
        return;
      }
      case Op::Div:
      case Op::Mod: {
        std::size_t t[kMaxLeaves];
        index(k.kid[0], t);
        for (std::size_t l = 0; l < L; ++l) out[l] = k.op == Op::Div ? t[l] / k.aux[l] : t[l] % k.aux[l];
        return;
      }
      case Op::IxPlus: {
        std::size_t a[kMaxLeaves], b[kMaxLeaves];
        index(k.kid[0], a);
        index(k.kid[1], b);
        for (std::size_t l = 0; l < L; ++l) out[l] = a[l] + b[l];
        return;
      }
      default:
        throw KindMismatch("kernel: not an index term");
    }
  }

  double fold(const KNode& k, std::size_t leaf, const std::size_t* idx) {
    if (leaf == k.bext.size()) return at(k.kid[0], idx);
    std::size_t* b = binder(k.level);
    double acc = 0.0;
    for (std::size_t i = k.bext[leaf]; i-- > 0;) {
      b[leaf] = i;
      acc = fold(k, leaf + 1, idx) + acc;
    }
    return acc;
  }

  double at(int n, const std::size_t* idx) {
    const KNode& k = nodes[static_cast<std::size_t>(n)];
    switch (k.op) {
      case Op::Var: {
        const double* d = arrays[k.slot];
        return d[row_major_offset(k.ext, idx)];
      }
      case Op::Zero:
        return 0.0;
      case Op::One:
        return 1.0;
      case Op::ImapS: {
        std::size_t* b = binder(k.level);
        for (std::size_t l = 0; l < k.bext.size(); ++l) b[l] = idx[l];
        std::size_t z = 0;
        return at(k.kid[0], &z);
      }
      case Op::SelS: {
        std::size_t t[kMaxLeaves];
        index(k.kid[1], t);
        return at(k.kid[0], t);
      }
      case Op::Imap: {
        std::size_t* b = binder(k.level);
        std::size_t nb = k.bext.size();
        for (std::size_t l = 0; l < nb; ++l) b[l] = idx[l];
        return at(k.kid[0], idx + nb);
      }
      case Op::Sel: {
        std::size_t t[kMaxLeaves];
        index(k.kid[1], t);
        std::size_t ni = nodes[static_cast<std::size_t>(k.kid[1])].ext.size();
        for (std::size_t l = 0; l < k.ext.size(); ++l) t[ni + l] = idx[l];
        return at(k.kid[0], t);
      }
      case Op::Imapb: {
        std::size_t* b = binder(k.level);
        std::size_t t[kMaxLeaves];
        for (std::size_t l = 0; l < k.ext.size(); ++l) {
          b[l] = idx[l] / k.aux[l];
          t[l] = idx[l] % k.aux[l];
        }
        return at(k.kid[0], t);
      }
      case Op::Selb: {
        std::size_t t[kMaxLeaves];
        index(k.kid[1], t);
        for (std::size_t l = 0; l < k.ext.size(); ++l) t[l] = t[l] * k.aux[l] + idx[l];
        return at(k.kid[0], t);
      }
      case Op::Sum:
        return fold(k, 0, idx);
      case Op::ZeroBut: {
        std::size_t a[kMaxLeaves], b[kMaxLeaves];
        index(k.kid[0], a);
        index(k.kid[1], b);
        std::size_t L = nodes[static_cast<std::size_t>(k.kid[0])].ext.size();
        for (std::size_t l = 0; l < L; ++l)
          if (a[l] != b[l]) return 0.0;
        return at(k.kid[2], idx);
      }
      case Op::Slide: {
        std::size_t t[kMaxLeaves];
        index(k.kid[0], t);
        for (std::size_t l = 0; l < k.ext.size(); ++l) t[l] += idx[l];
        return at(k.kid[1], t);
      }
      case Op::Backslide: {
        std::size_t t[kMaxLeaves];
        index(k.kid[0], t);
        for (std::size_t l = 0; l < k.ext.size(); ++l) {
          if (idx[l] < t[l] || idx[l] - t[l] >= k.aux[l]) return 0.0;
          t[l] = idx[l] - t[l];
        }
        return at(k.kid[1], t);
      }
      case Op::Logistic:
        return 1.0 / (1.0 + std::exp(-at(k.kid[0], idx)));
      case Op::Bin: {
        double a = at(k.kid[0], idx);
        double b = at(k.kid[1], idx);
        return k.bop == BinOp::Plus ? a + b : a * b;
      }
      case Op::Scaledown:
        return at(k.kid[0], idx) / k.nat;
      case Op::Minus:
        return -at(k.kid[0], idx);
      case Op::IxMinus:
      case Op::IxMinusR: {
        std::size_t a[kMaxLeaves], b[kMaxLeaves];
        index(k.kid[0], a);
        index(k.kid[1], b);
        std::size_t* bind = binder(k.level);
        for (std::size_t l = 0; l < k.bext.size(); ++l) {
          if (a[l] < b[l] || a[l] - b[l] >= k.aux[l]) return 0.0;
          bind[l] = a[l] - b[l];
        }
        return at(k.kid[2], idx);
      }
      default:
        throw KindMismatch("kernel: index term in array position");
    }
  }
};

}  // namespace

Kernel::Kernel(const Expr& e) : expr_(e), prog_(std::make_unique<Program>()) {
  if (e.is_ix()) throw KindMismatch("Kernel needs an array term");
  prog_->base = e.ctx().size();
  prog_->root = prog_->compile(e, 0);
}

Kernel::~Kernel() = default;
Kernel::Kernel(Kernel&&) noexcept = default;
Kernel& Kernel::operator=(Kernel&&) noexcept = default;

Tensor Kernel::run(const ValueEnv& env, bool parallel) const {
  if (!(env.ctx() == expr_.ctx())) throw KindMismatch("Kernel::run: environment does not match the term context");
  std::vector<const double*> arrays(env.size(), nullptr);
  std::vector<std::vector<std::size_t>> indices(env.size());
  // Only slots the term reads need values.
  for (const auto& k : prog_->nodes) {
    if (k.op != Op::Var || k.from_binder) continue;
    if (!env.has(k.slot)) throw KindMismatch("Kernel::run: slot " + std::to_string(k.slot) + " has no value");
    const Value& v = env.slot(k.slot);
    if (const Tensor* t = std::get_if<Tensor>(&v))
      arrays[k.slot] = t->data().data();
    else
      indices[k.slot] = std::get<Pos>(v).leaves();
  }
  const Shape& s = expr_.shape();
  const auto& ext = s.leaves();
  std::vector<double> out(s.size());
  const std::size_t total = out.size();
  const std::size_t levels = prog_->levels;
  const auto& nodes = prog_->nodes;
  const int root = prog_->root;
  auto body = [&](Runner& r, std::size_t off) {
    std::size_t idx[kMaxLeaves];
    std::size_t rest = off;
    for (std::size_t l = ext.size(); l-- > 0;) {
      idx[l] = rest % ext[l];
      rest /= ext[l];
    }
    out[off] = r.at(root, idx);
  };
  if (parallel) {
#pragma omp parallel
    {
      Runner r{nodes, arrays, indices, std::vector<std::size_t>(std::max<std::size_t>(levels, 1) * kMaxLeaves)};
#pragma omp for schedule(static)
      for (std::size_t off = 0; off < total; ++off) body(r, off);
    }
  } else {
    Runner r{nodes, arrays, indices, std::vector<std::size_t>(std::max<std::size_t>(levels, 1) * kMaxLeaves)};
    for (std::size_t off = 0; off < total; ++off) body(r, off);
  }
  return Tensor(s, std::move(out));
}

Tensor evaluate_fast(const Expr& e, const ValueEnv& env, bool parallel) { return Kernel(e).run(env, parallel); }

}  // namespace arrad
