#pragma once

// Chains of named let-bindings. Each binding contributes two context slots:
// an adjoint placeholder followed by the value. Bodies see every earlier
// slot but may not mention placeholders.
//
// Slot layout (oldest first): base inputs 0..B-1, then for binding k the
// placeholder at B+2k and the value at B+2k+1.

#include <string>
#include <utility>
#include <vector>

#include "arrad/autodiff.hpp"
#include "arrad/eval.hpp"
#include "arrad/expr.hpp"

namespace arrad {

using ChainCtx = std::vector<std::pair<std::string, Shape>>;

struct Binding {
  std::string name;
  Expr body;  // lives in Chain::ctx_before(k)
};

// C-safe transliteration: subscript digits become "_" followed by the
// digits (c₁₁ -> c_11). Throws ChainError if the result is not an identifier.
std::string mangle_name(const std::string& name);

class Chain {
 public:
  explicit Chain(ChainCtx base);

  // Appends a binding; the body must live in ctx_before(size()).
  void add(const std::string& name, const Expr& body);

  const ChainCtx& base() const { return base_; }
  const std::vector<Binding>& bindings() const { return bindings_; }
  std::size_t size() const { return bindings_.size(); }

  Ctx base_ctx() const;
  Ctx ctx_before(std::size_t k) const;  // context seen by binding k's body
  Ctx full_ctx() const { return ctx_before(size()); }

  std::size_t placeholder_slot(std::size_t k) const { return base_.size() + 2 * k; }
  std::size_t value_slot(std::size_t k) const { return base_.size() + 2 * k + 1; }
  bool is_placeholder_slot(std::size_t slot) const;

  // Per-slot identifiers of the full context, oldest first.
  std::vector<std::string> names() const;
  // Identifiers visible to binding k's body.
  std::vector<std::string> names_before(std::size_t k) const;

  // Value of binding `name` (or a base input) as a variable in `ctx`, which
  // must extend the slot's context.
  Expr ref(const std::string& name, const Ctx& ctx) const;
  std::size_t slot_of(const std::string& name) const;

  // Bindings whose value no later body mentions (the last binding excepted).
  std::vector<std::string> unused_bindings() const;

 private:
  ChainCtx base_;
  std::vector<std::string> mangled_base_;
  std::vector<Binding> bindings_;
  std::vector<std::string> taken_;
};

std::vector<std::string> chain_names(const Chain& c);

// Forward interpretation: base inputs extended with zero placeholders and the
// value of every binding.
ValueEnv chain_eval_forward(const Chain& c, const ValueEnv& inputs, bool parallel = true);

struct ChainGrad {
  GradEnv env;                              // over full_ctx, entries in full_ctx
  std::vector<std::size_t> placeholder_writes;  // per binding
};

// Backward sweep with the placeholder of each binding as its seed. Bodies are
// optimized with `body_passes` before differentiation; every resulting entry
// with `final_passes`.
ChainGrad chain_grad(const Chain& c, const Expr& seed, std::size_t body_passes = 10, std::size_t final_passes = 10);

// Each adjoint assignment mentions only placeholders of strictly newer
// bindings; base adjoints may mention any placeholder.
bool topologically_ordered(const Chain& c, const GradEnv& g);

// Interprets the adjoint assignments newest first, filling placeholders in
// `env` (a forward environment). Returns adjoints for every slot, oldest
// first; index slots are absent (the chain has none).
std::vector<Tensor> chain_eval_grads(const Chain& c, const GradEnv& g, ValueEnv env, bool parallel = true);

// Assignment listing: forward bindings in order, then adjoint assignments
// newest first, ending with the base inputs in reverse order.
std::string chain_listing(const Chain& c, const GradEnv& g, std::size_t opt_passes = 10);

// Line-oriented text form: "input NAME SHAPE" and "bind NAME TERM".
std::string chain_dump(const Chain& c);
Chain parse_chain(const std::string& text);

}  // namespace arrad
