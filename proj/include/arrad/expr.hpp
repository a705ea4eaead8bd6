#pragma once

// Well-scoped, shape-indexed array expressions over de Bruijn contexts.
// Every node records its context and kind; the smart constructors below
// are the only way to build nodes and they reject ill-formed terms.

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arrad/shape.hpp"

namespace arrad {

struct Kind {
  bool is_ix = false;
  Shape shape = Shape::unit();

  static Kind ar(Shape s) { return {false, std::move(s)}; }
  static Kind ix(Shape s) { return {true, std::move(s)}; }
  friend bool operator==(const Kind& a, const Kind& b) { return a.is_ix == b.is_ix && a.shape == b.shape; }
  std::string str() const;
};

// Persistent snoc list of kinds. Index 0 names the most recent entry.
class Ctx {
 public:
  Ctx() = default;
  static Ctx of(const std::vector<Kind>& oldest_first);

  Ctx extend(Kind k) const;
  std::size_t size() const { return n_ ? n_->size : 0; }
  bool empty() const { return !n_; }
  const Kind& at(std::size_t v) const;
  const Kind& last() const { return at(0); }
  Ctx parent() const;
  // Drop the n most recent entries.
  Ctx drop(std::size_t n) const;
  // Γ / v
  Ctx remove(std::size_t v) const;
  // Exchange entries v and v-1 (identity for v = 0).
  Ctx swap_at(std::size_t v) const;
  std::vector<Kind> kinds() const;  // oldest first

  friend bool operator==(const Ctx& a, const Ctx& b);
  std::string str() const;

 private:
  struct Node {
    Kind kind;
    std::shared_ptr<const Node> parent;
    std::size_t size;
  };
  explicit Ctx(std::shared_ptr<const Node> n) : n_(std::move(n)) {}
  std::shared_ptr<const Node> n_;
};

enum class Op {
  Var,
  Zero,
  One,
  ImapS,
  SelS,
  Imap,
  Sel,
  Imapb,
  Selb,
  Sum,
  ZeroBut,
  Slide,
  Backslide,
  Logistic,
  Bin,
  Scaledown,
  Minus,
  Div,
  Mod,
  IxPlus,
  IxMinus,
  IxMinusR,
};

enum class BinOp { Plus, Mul };

const char* op_name(Op op);

class Expr;

struct ExprNode;

class Expr {
 public:
  Expr() = default;

  bool valid() const { return static_cast<bool>(n_); }
  Op op() const;
  const Ctx& ctx() const;
  const Kind& kind() const;
  const Shape& shape() const { return kind().shape; }
  bool is_ix() const { return kind().is_ix; }

  // Children in constructor-argument order (index terms included).
  std::size_t arity() const;
  const Expr& child(std::size_t k) const;

  std::size_t var() const;      // Var
  std::size_t nat() const;      // Scaledown divisor
  BinOp bin_op() const;         // Bin
  const PlusFact& plus_fact() const;
  const SucFact& suc_fact() const;
  const TimesFact& times_fact() const;

  // Binder-introducing nodes bind one index in the context of child `body`.
  bool binds() const;
  std::size_t body_slot() const;
  const Expr& body() const { return child(body_slot()); }

  const ExprNode* node() const { return n_.get(); }
  std::size_t depth() const;
  std::size_t node_count() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  friend Expr make_node(ExprNode&&);
  std::shared_ptr<const ExprNode> n_;
};

struct ExprNode {
  Op op;
  Ctx ctx;
  Kind kind;
  std::array<Expr, 3> kids;
  std::size_t arity = 0;
  std::size_t num = 0;  // var index or scaledown divisor
  BinOp bop = BinOp::Plus;
  std::optional<PlusFact> plus;
  std::optional<SucFact> suc;
  std::optional<TimesFact> times;
};

// ------------------------------------------------------------ constructors

Expr var(const Ctx& ctx, std::size_t v);
Expr zero(const Ctx& ctx, const Shape& s);
Expr one(const Ctx& ctx, const Shape& s);
// body : Ar unit in Γ ▹ ix s  ->  Ar s
Expr imap_s(const Expr& body);
Expr sel_s(const Expr& a, const Expr& i);
// body : Ar p in Γ ▹ ix s  ->  Ar (s⊗p)
Expr imap(const Expr& body);
Expr sel(const Expr& a, const Expr& i);
// body : Ar p in Γ ▹ ix s, m : s*p≈q  ->  Ar q
Expr imapb(const TimesFact& m, const Expr& body);
Expr selb(const TimesFact& m, const Expr& a, const Expr& i);
// body : Ar p in Γ ▹ ix s  ->  Ar p
Expr sum(const Expr& body);
Expr zero_but(const Expr& i, const Expr& j, const Expr& e);
Expr slide(const Expr& i, const PlusFact& sp, const Expr& e, const SucFact& su);
Expr backslide(const Expr& i, const Expr& e, const SucFact& su, const PlusFact& sp);
Expr logistic(const Expr& e);
Expr bin(BinOp op, const Expr& a, const Expr& b);
Expr plus(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr scaledown(std::size_t n, const Expr& e);
Expr minus(const Expr& e);
// Index forms.
Expr ix_div(const TimesFact& m, const Expr& i);
Expr ix_mod(const TimesFact& m, const Expr& i);
Expr ix_plus(const Expr& i, const Expr& j, const SucFact& su, const PlusFact& sp);
// i : ix r, j : ix s, body in Γ ▹ ix u; zero where i ⊝ j is undefined.
Expr ix_minus(const Expr& i, const Expr& j, const PlusFact& sp, const SucFact& su, const Expr& body);
// i : ix r, j : ix u, body in Γ ▹ ix s; binder k satisfies k ⊕ j = i.
Expr ix_minus_r(const Expr& i, const Expr& j, const PlusFact& sp, const SucFact& su, const Expr& body);

// Same operator and facts as `e`, new context and children. Children must
// already live in the matching (possibly extended) context.
Expr rebuild(const Expr& e, const Ctx& ctx, const std::array<Expr, 3>& kids);

// ------------------------------------------------------- scope operations

// e : Γ / v  ->  Γ
Expr weaken(const Ctx& gamma, std::size_t v, const Expr& e);
// ↑ e: weaken by one fresh newest entry of kind k.
Expr lift(const Expr& e, const Kind& k);
// Weaken e into `target`, which must extend e.ctx() by zero or more entries.
Expr lift_to(const Expr& e, const Ctx& target);
// e : Γ, r : Γ / v with kind Γ[v]  ->  e[v := r] : Γ / v
Expr substitute(std::size_t v, const Expr& e, const Expr& r);
// e : Γ  ->  SwapAt(Γ, v)
Expr ctx_swap(std::size_t v, const Expr& e);

// Variable comparison: Same, or Different with y re-indexed into Γ / x.
struct VarEq {
  bool same;
  std::size_t reindexed;
};
VarEq var_eq(std::size_t x, std::size_t y);

// Whether e mentions variable v of its context.
bool mentions(const Expr& e, std::size_t v);

// ----------------------------------------------------------------- builders
// Each builder passes the freshly bound index variable to `f`; outer terms
// used inside `f` must be lifted with lift_to(term, i.ctx()).

using BodyFn = std::function<Expr(const Expr& i)>;

Expr Imap_s(const Ctx& ctx, const Shape& s, const BodyFn& f);
Expr Imap(const Ctx& ctx, const Shape& s, const BodyFn& f);
Expr Sum(const Ctx& ctx, const Shape& s, const BodyFn& f);

// Σ_i slide i f ⊠ K(g i)
Expr e_conv(const Expr& f, const PlusFact& sp, const Expr& g, const SucFact& su);
// Imap i. conv f (sel w i) ⊞ K(b i)
Expr e_mconv(const PlusFact& sp, const Expr& inp, const Expr& w, const Expr& b, const SucFact& su);
Expr e_avgp2(std::size_t m, std::size_t n, const Expr& a);
Expr e_dotp(const Expr& a, const Expr& b);

// --------------------------------------------------------------- text forms

// Round-trippable s-expression, e.g. (sum 5 (bin mul (sels (var 2) (var 0)) ...)).
std::string to_sexpr(const Expr& e);
// Context line: (ctx (ar 5) (ix (2 3))) oldest first.
std::string ctx_to_sexpr(const Ctx& ctx);
Expr parse_sexpr(const Ctx& ctx, const std::string& text);
Ctx parse_ctx_sexpr(const std::string& text);
// A full term file: (expr (ctx ...) term)
std::string expr_file_text(const Expr& e);
Expr parse_expr_file(const std::string& text);

// Infix rendering with slot names (oldest first); binders print as x1, x2...
std::string to_infix(const Expr& e, const std::vector<std::string>& names);

std::string shape_sexpr(const Shape& s);

}  // namespace arrad
