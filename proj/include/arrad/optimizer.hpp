#pragma once

// Semantics-preserving rewriting of Expr: selection/β rules, sum-of-guard
// elimination, index arithmetic introduction and constant folding. One pass
// rewrites bottom-up; rules fire on already-optimized children.

#include "arrad/expr.hpp"

namespace arrad {

Expr optimize_once(const Expr& e);
// optimize_once applied `passes` times.
Expr optimize(const Expr& e, std::size_t passes);

}  // namespace arrad
