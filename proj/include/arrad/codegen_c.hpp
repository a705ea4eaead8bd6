#pragma once

// C emission: allocation-free loop nests for optimized terms, gradient step
// functions for chains, a batch-parallel training harness, and a runner that
// compiles and executes generated programs.

#include <filesystem>
#include <string>
#include <vector>

#include "arrad/autodiff.hpp"
#include "arrad/chain.hpp"
#include "arrad/expr.hpp"

namespace arrad {

enum class EmitMode { Assign, Accumulate };

// Storage for one array: a C array of the flattened leaf extents.
struct CStorage {
  std::string name;
  Shape shape;
};

// "[6][5][5]" for 6⊗(5⊗5).
std::string c_dims(const Shape& s);

// True iff e has a scalar C rendering at any index without loops.
bool selectable(const Expr& e);

// Loop nest writing `dst` (a pointer-to-array parameter) from e. `names`
// names the array slots of e.ctx(), oldest first; index slots are not
// allowed at the top level. `counter` numbers fresh loop variables
// x<counter>_<axis>. Throws ExtractionFailure.
std::string emit_stmt(const Expr& e, const std::vector<std::string>& names, const CStorage& dst, EmitMode mode,
                      unsigned& counter, int indent = 1);

struct CStepOptions {
  std::string prefix = "arrad";
  std::vector<std::size_t> grad_slots;  // base slots whose adjoint is extracted
  std::size_t opt_passes = 10;          // applied to forward bodies
};

// Parameters, in order: base slots, then (placeholder, value) per binding,
// then "dd"+name for each grad slot. Emits <prefix>_forward (forward
// assignments) and <prefix>_step (forward, then adjoint assignments newest
// first, then the extracted base adjoints).
std::string emit_chain_step(const Chain& c, const GradEnv& g, const CStepOptions& opt);

// Full training program for a chain whose base slot 0 is a one-hot target,
// slot 1 a 28x28 image and the remaining base slots are trainable; the last
// binding is the prediction. Usage of the emitted program:
//   prog TRAIN_IMG TRAIN_LBL TEST_IMG TEST_LBL WEIGHTS EPOCHS BATCH NTRAIN NTEST LR [GRAD_DUMP|-] [WEIGHTS_OUT|-]
// Prints "epoch <n> loss <f> acc <f>" per epoch and "test acc <f>".
std::string emit_training_program(const Chain& c, const GradEnv& g, std::size_t opt_passes = 10);

// Programs for the conformance runner: read every input from a tensor dump
// file (argv[1]) and write the outputs as a tensor dump (argv[2]).
std::string emit_expr_program(const Expr& e, const std::vector<std::string>& names);
// Outputs: final binding value, then the adjoint of every base slot.
std::string emit_chain_program(const Chain& c, const GradEnv& g, std::size_t opt_passes = 10);

// Flags used for every generated-code build.
extern const char* const kCFlags;

struct CToolchain {
  std::string cc = "cc";
  bool openmp = true;
  bool wall = false;
};

// Compiler resolution: explicit flag, else $CC, else "cc".
std::string resolve_cc(const std::string& flag_value);
// Throws EnvironmentError if the compiler cannot be run.
void check_cc(const std::string& cc);

// Compiles `source` into dir/stem; returns the executable path. Compiler
// diagnostics are returned through `diagnostics`.
std::filesystem::path compile_c(const CToolchain& tc, const std::string& source, const std::filesystem::path& dir,
                                const std::string& stem, std::string* diagnostics = nullptr);

// Runs a command, capturing stdout; returns the exit status.
int run_command(const std::string& cmd, std::string* out);

std::string shell_quote(const std::string& s);

}  // namespace arrad
