#pragma once

// Random well-formed terms and the finite-difference checks built on them.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "arrad/eval.hpp"
#include "arrad/expr.hpp"

namespace arrad {

// Generates random array terms over a context of input arrays. Every shape
// involved has at most three leaves with extents in 1..3.
class TermGen {
 public:
  explicit TermGen(std::uint64_t seed, int max_depth = 5);

  // A random array term over a fresh input context; unused inputs are
  // dropped, so every context slot is mentioned.
  Expr term();
  Expr term(const Shape& s);

  // Random values for every slot of an array-only context, uniform in [-1, 1].
  ValueEnv inputs(const Ctx& ctx);
  Tensor tensor(const Shape& s);

  // Operators seen so far in generated terms (index forms included).
  const std::map<Op, std::size_t>& coverage() const { return coverage_; }
  std::mt19937_64& rng() { return rng_; }

  static bool in_universe(const Shape& s);
  static const std::vector<Shape>& universe();

 private:
  Expr array(const Ctx& c, const Shape& s, int d);
  Expr leaf(const Ctx& c, const Shape& s);
  Expr index_of_shape(const Ctx& c, const Shape& s);
  Shape pick_shape(std::size_t max_size);
  std::size_t pick(std::size_t n);
  bool coin(double p);
  void count(const Expr& e);

  std::mt19937_64 rng_;
  int max_depth_;
  std::map<Op, std::size_t> coverage_;
};

// Removes context slots that e does not mention.
Expr prune_context(const Expr& e);

struct GradcheckCase {
  std::string term;          // s-expression
  double worst_rel = 0.0;    // max |ad-fd| / max(|ad|, |fd|) over elements
  double worst_abs = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double worst_rel = 0.0;
  std::size_t failures = 0;
  std::map<Op, std::size_t> coverage;
};

// Compares reverse-mode adjoints of ⟨w, e⟩ (w a random seed array) with
// central differences of step h, for every element of every input. An
// element passes when |ad − fd| ≤ max(rel_tol · max(|ad|, |fd|), abs_floor).
// With `optimized`, adjoint terms go through the optimizer first.
GradcheckCase gradcheck_term(const Expr& e, TermGen& gen, double h = 1e-4, double rel_tol = 1e-5, double abs_floor = 1e-8,
                             bool optimized = false);
GradcheckReport gradcheck_random(std::uint64_t seed, std::size_t cases, double h = 1e-4, double rel_tol = 1e-5,
                                 double abs_floor = 1e-8);

struct CnnCoordinate {
  std::string weight;
  std::size_t offset = 0;
  double ad = 0.0, fd = 0.0, rel = 0.0;
  bool pass = true;
};

// Whole-model check on one synthetic image: `coords` sampled weight
// coordinates spread over k₁, b₁ and fc.
std::vector<CnnCoordinate> gradcheck_cnn(std::uint64_t seed, std::size_t coords = 5, double h = 1e-3, double rel_tol = 1e-4);

}  // namespace arrad
