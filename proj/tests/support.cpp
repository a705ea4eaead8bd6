#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unistd.h>

#include "arrad/codegen_c.hpp"
#include "arrad/errors.hpp"
#include "arrad/optimizer.hpp"

namespace arrad::testing {

namespace {

Ctx ctx_of(const std::vector<Shape>& shapes) {
  std::vector<Kind> ks;
  for (const Shape& s : shapes) ks.push_back(Kind::ar(s));
  return Ctx::of(ks);
}

// Adjoint of `e` for slot `slot` (oldest-first index) under a fresh seed
// variable appended to the context. Like chain_grad, the primal is
// optimized before differentiation and the adjoint after.
Expr adjoint(const Expr& e, std::size_t slot) {
  Kind sk = Kind::ar(e.shape());
  Ctx c = e.ctx().extend(sk);
  GradEnv g = grad(lift(optimize(e, 10), sk), var(c, 0), GradEnv::zero(c, c));
  return optimize(*g.slot(slot), 10);
}

}  // namespace

std::vector<Golden> golden_exprs() {
  std::vector<Golden> out;
  const Shape n5 = Shape::leaf(5);

  {
    Ctx c = ctx_of({n5, n5});
    out.push_back({"dotp", e_dotp(var(c, 1), var(c, 0)), {"a", "b"}});
    out.push_back({"dotp_adjoint", adjoint(out.back().expr, 0), {"a", "b", "seed"}});
  }
  {
    PlusFact sp = PlusFact::infer(Shape::of({3, 3}), Shape::of({2, 2}));
    SucFact su = SucFact::infer(sp.p);
    Ctx c = ctx_of({sp.r, sp.s});
    Expr conv = e_conv(var(c, 1), sp, var(c, 0), su);
    out.push_back({"conv", optimize(conv, 10), {"x", "w"}});
    out.push_back({"conv_adjoint_input", adjoint(conv, 0), {"x", "w", "seed"}});
    out.push_back({"conv_adjoint_weights", adjoint(conv, 1), {"x", "w", "seed"}});
  }
  {
    PlusFact sp = PlusFact::infer(Shape::of({3, 3}), Shape::of({3, 3}));
    SucFact su = SucFact::infer(sp.p);
    Ctx c = ctx_of({sp.r, Shape::prod(Shape::leaf(2), sp.s), Shape::leaf(2)});
    Expr mc = e_mconv(sp, var(c, 2), var(c, 1), var(c, 0), su);
    out.push_back({"mconv", optimize(mc, 10), {"inp", "w", "bias"}});
    out.push_back({"mconv_adjoint_weights", adjoint(mc, 1), {"inp", "w", "bias", "seed"}});
  }
  {
    Ctx c = ctx_of({Shape::of({4, 6})});
    out.push_back({"avgp2", optimize(e_avgp2(2, 3, var(c, 0)), 10), {"a"}});
  }
  {
    Ctx c = ctx_of({Shape::of({2, 3}), Shape::of({2, 3})});
    Expr a = var(c, 1), b = var(c, 0);
    out.push_back({"pointwise", logistic(plus(a, minus(scaledown(3, mul(a, b))))), {"a", "b"}});
  }
  {
    TimesFact m = TimesFact::infer(Shape::leaf(2), Shape::leaf(3));
    Ctx c = ctx_of({Shape::leaf(6)});
    Ctx ci = c.extend(Kind::ix(m.s));
    out.push_back({"blocks", imapb(m, logistic(selb(m, var(ci, 1), var(ci, 0)))), {"a"}});
  }
  {
    Ctx c = ctx_of({Shape::leaf(3), Shape::leaf(4)});
    Expr e = Imap(c, Shape::leaf(3), [&](const Expr& i) {
      return Imap_s(i.ctx(), Shape::leaf(4), [&](const Expr& j) {
        return mul(sel_s(var(j.ctx(), 3), lift_to(i, j.ctx())), sel_s(var(j.ctx(), 2), j));
      });
    });
    out.push_back({"outer", e, {"a", "b"}});
  }
  {
    Ctx c = ctx_of({Shape::leaf(4)});
    Expr e = Imap_s(c, Shape::leaf(4), [&](const Expr& j) {
      return Sum(j.ctx(), Shape::leaf(4), [&](const Expr& i) {
        return zero_but(i, lift_to(j, i.ctx()), sel_s(var(i.ctx(), 2), i));
      });
    });
    out.push_back({"zero_but", e, {"a"}});
  }
  {
    TimesFact m = TimesFact::infer(Shape::leaf(2), Shape::leaf(3));
    Ctx c = ctx_of({Shape::leaf(2), Shape::leaf(3)});
    Expr e = Imap_s(c, m.q, [&](const Expr& k) {
      return mul(sel_s(var(k.ctx(), 2), ix_div(m, k)), sel_s(var(k.ctx(), 1), ix_mod(m, k)));
    });
    out.push_back({"div_mod", e, {"a", "b"}});
  }
  {
    PlusFact sp = PlusFact::infer(Shape::leaf(3), Shape::leaf(2));
    SucFact su = SucFact::infer(sp.p);
    Ctx c = ctx_of({sp.r});
    Expr e = Imap_s(c, sp.s, [&](const Expr& i) {
      return Sum(i.ctx(), su.u, [&](const Expr& j) {
        return sel_s(var(j.ctx(), 2), ix_plus(lift_to(i, j.ctx()), j, su, sp));
      });
    });
    out.push_back({"window_sum", e, {"a"}});
  }
  return out;
}

Chain xy_chain() {
  Chain c({{"a", Shape::leaf(5)}, {"b", Shape::leaf(5)}});
  Ctx c0 = c.ctx_before(0);
  c.add("x", mul(c.ref("a", c0), c.ref("b", c0)));
  Ctx c1 = c.ctx_before(1);
  c.add("y", mul(c.ref("x", c1), c.ref("x", c1)));
  return c;
}

Expr xy_seed(const Chain& c) { return one(c.full_ctx(), Shape::leaf(5)); }

ValueEnv random_inputs(const Ctx& ctx, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Value> vals;
  for (const Kind& k : ctx.kinds()) {
    Tensor t = Tensor::konst(k.shape, 0.0);
    for (double& x : t.data()) x = u(rng);
    vals.emplace_back(std::move(t));
  }
  return ValueEnv(ctx, std::move(vals));
}

std::filesystem::path scratch_dir(const std::string& tag) {
  auto d = std::filesystem::temp_directory_path() / ("arrad-test-" + std::to_string(::getpid()) + "-" + tag);
  std::filesystem::create_directories(d);
  return d;
}

std::string test_cc() {
  std::string cc = resolve_cc("");
  try {
    check_cc(cc);
  } catch (const EnvironmentError&) {
    return "";
  }
  return cc;
}

Tensor run_c_expr(const Golden& g, const ValueEnv& inputs, const std::filesystem::path& dir) {
  CToolchain tc;
  tc.cc = test_cc();
  tc.wall = true;
  auto exe = compile_c(tc, emit_expr_program(g.expr, g.names), dir, g.name);
  std::vector<Tensor> in;
  for (std::size_t k = 0; k < inputs.size(); ++k) in.push_back(std::get<Tensor>(inputs.slot(k)));
  auto in_path = dir / (g.name + ".in"), out_path = dir / (g.name + ".out");
  save_tensors(in_path.string(), in);
  std::string out;
  int rc = run_command(shell_quote(exe.string()) + " " + shell_quote(in_path.string()) + " " + shell_quote(out_path.string()), &out);
  if (rc != 0) throw Error("generated program " + g.name + " exited with " + std::to_string(rc));
  return load_tensors(out_path.string()).at(0);
}

std::vector<Tensor> run_c_chain(const Chain& c, const GradEnv& g, const ValueEnv& inputs, const std::filesystem::path& dir,
                                const std::string& stem) {
  CToolchain tc;
  tc.cc = test_cc();
  tc.wall = true;
  auto exe = compile_c(tc, emit_chain_program(c, g, 10), dir, stem);
  std::vector<Tensor> in;
  for (std::size_t k = 0; k < inputs.size(); ++k) in.push_back(std::get<Tensor>(inputs.slot(k)));
  auto in_path = dir / (stem + ".in"), out_path = dir / (stem + ".out");
  save_tensors(in_path.string(), in);
  std::string out;
  int rc = run_command(shell_quote(exe.string()) + " " + shell_quote(in_path.string()) + " " + shell_quote(out_path.string()), &out);
  if (rc != 0) throw Error("generated chain program exited with " + std::to_string(rc));
  return load_tensors(out_path.string());
}

std::vector<Tensor> interp_chain(const Chain& c, const GradEnv& g, const ValueEnv& inputs) {
  ValueEnv env = chain_eval_forward(c, inputs);
  std::vector<Tensor> grads = chain_eval_grads(c, g, env);
  std::vector<Tensor> out{std::get<Tensor>(env.lookup(0))};
  for (std::size_t b = 0; b < c.base().size(); ++b) out.push_back(grads.at(b));
  return out;
}

double scaled_diff(const Tensor& got, const Tensor& ref) {
  double scale = 0.0;
  for (double x : ref.data()) scale = std::max(scale, std::abs(x));
  return max_rel_diff(got, ref, std::max(scale, 1e-30));
}

std::string c_function_body(const std::string& src, const std::string& fn) {
  auto at = src.find("void " + fn + "(");
  if (at == std::string::npos) return "";
  auto open = src.find('{', at);
  int depth = 0;
  for (std::size_t k = open; k < src.size(); ++k) {
    if (src[k] == '{') ++depth;
    if (src[k] == '}' && --depth == 0) return src.substr(open, k - open + 1);
  }
  return "";
}

}  // namespace arrad::testing
