#pragma once

// Two interpreters for Expr:
//  - evaluate(): strict, clause-by-clause denotation (the serial reference);
//  - Kernel: compiles a term once and computes each output element
//    independently, optionally across OpenMP threads.
// Both fold sums in the same order, so they agree bit for bit.

#include <memory>
#include <variant>
#include <vector>

#include "arrad/expr.hpp"
#include "arrad/tensor.hpp"

namespace arrad {

using Value = std::variant<Tensor, Pos>;

// Values for every slot of a context, oldest first.
class ValueEnv {
 public:
  ValueEnv() = default;
  explicit ValueEnv(const Ctx& ctx);  // all slots unset
  ValueEnv(const Ctx& ctx, std::vector<Value> oldest_first);

  const Ctx& ctx() const { return ctx_; }
  std::size_t size() const { return vals_.size(); }
  // de Bruijn lookup (0 = newest)
  const Value& lookup(std::size_t v) const;
  const Value& slot(std::size_t oldest_index) const { return vals_.at(oldest_index); }
  bool has(std::size_t oldest_index) const { return set_.at(oldest_index); }
  void set_slot(std::size_t oldest_index, Value v);
  void push(const Kind& k, Value v);
  void pop();

 private:
  void check(const Kind& k, const Value& v) const;
  Ctx ctx_;
  std::vector<Value> vals_;
  std::vector<bool> set_;
};

Value evaluate(const Expr& e, ValueEnv& env);
Tensor evaluate_array(const Expr& e, ValueEnv& env);
Pos evaluate_index(const Expr& e, ValueEnv& env);

// Element i of block(m, a) without materializing the blocked array.
Tensor select_block(const TimesFact& m, const Tensor& a, const Pos& i);

class Kernel {
 public:
  explicit Kernel(const Expr& e);
  ~Kernel();
  Kernel(Kernel&&) noexcept;
  Kernel& operator=(Kernel&&) noexcept;

  const Expr& expr() const { return expr_; }
  // Materialize the term. `parallel` distributes output elements over
  // OpenMP threads; results are identical either way.
  Tensor run(const ValueEnv& env, bool parallel = true) const;

 private:
  struct Program;
  Expr expr_;
  std::unique_ptr<Program> prog_;
};

Tensor evaluate_fast(const Expr& e, const ValueEnv& env, bool parallel = true);

}  // namespace arrad
