#pragma once

// Reverse-mode differentiation on terms: ∇ e s δ accumulates, for every
// array variable of the context, the adjoint term contributed by e under
// seed s.

#include <functional>
#include <optional>
#include <vector>

#include "arrad/expr.hpp"

namespace arrad {

// Adjoint environment over context Γ with entries living in Δ. Index slots
// of Γ carry no entry.
class GradEnv {
 public:
  GradEnv(Ctx gamma, Ctx delta, std::vector<std::optional<Expr>> oldest_first);
  // env-zero: every array slot of Γ gets `zero` in Δ.
  static GradEnv zero(const Ctx& gamma, const Ctx& delta);

  const Ctx& gamma() const { return gamma_; }
  const Ctx& delta() const { return delta_; }
  std::size_t size() const { return entries_.size(); }

  const std::optional<Expr>& slot(std::size_t oldest_index) const { return entries_.at(oldest_index); }
  const std::optional<Expr>& at(std::size_t v) const { return slot(size() - 1 - v); }
  void set_slot(std::size_t oldest_index, const Expr& e);
  void update(std::size_t v, const std::function<Expr(const Expr&)>& f);
  GradEnv map(const std::function<Expr(const Expr&)>& f) const;

 private:
  Ctx gamma_, delta_;
  std::vector<std::optional<Expr>> entries_;
};

// e, s : Δ with equal kinds; δ : GradEnv(Δ, Δ).
GradEnv grad(const Expr& e, const Expr& seed, GradEnv delta);

// Differentiates a body that binds one index and folds the per-slot
// adjoints back into δ with `sum`.
GradEnv map_sum(const Expr& body, const Expr& seed, GradEnv delta);

}  // namespace arrad
