#pragma once

// Shared fixtures: golden expressions, the two reference chains, and a
// runner that compiles generated C and reads its results back.

#include <filesystem>
#include <string>
#include <vector>

#include "arrad/autodiff.hpp"
#include "arrad/chain.hpp"
#include "arrad/eval.hpp"
#include "arrad/expr.hpp"
#include "arrad/tensor.hpp"

namespace arrad::testing {

struct Golden {
  std::string name;
  Expr expr;                       // optimized, C-extractable
  std::vector<std::string> names;  // context slot names, oldest first
};

// Hand-written terms spanning every constructor family, including the
// optimized adjoints of dot product and convolution.
std::vector<Golden> golden_exprs();

// x = a ⊠ b, y = x ⊠ x over a, b : Ar 5.
Chain xy_chain();
Expr xy_seed(const Chain& c);

// Deterministic inputs in [-1, 1] for an array-only context.
ValueEnv random_inputs(const Ctx& ctx, std::uint64_t seed);

// Fresh scratch directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

// Compiler for generated code ($CC or cc); empty if none is runnable.
std::string test_cc();

// Compile and run the expression program; returns its output.
Tensor run_c_expr(const Golden& g, const ValueEnv& inputs, const std::filesystem::path& dir);
// Compile and run the chain program; returns the final value followed by
// the adjoint of every base slot.
std::vector<Tensor> run_c_chain(const Chain& c, const GradEnv& g, const ValueEnv& inputs, const std::filesystem::path& dir,
                                const std::string& stem);

// Interpreter counterpart of run_c_chain.
std::vector<Tensor> interp_chain(const Chain& c, const GradEnv& g, const ValueEnv& inputs);

// Difference between generated (float) and interpreted (double) results,
// relative to the magnitude of the reference tensor: max|got - ref| /
// max|ref|. Elementwise relative error is meaningless at entries produced by
// cancellation, which single precision cannot resolve.
double scaled_diff(const Tensor& got, const Tensor& ref);

// Text of the body of `void <fn>(...) { ... }` in generated C.
std::string c_function_body(const std::string& src, const std::string& fn);

}  // namespace arrad::testing
