#pragma once

// Property sweeps shared by the unit tests (small bounds) and the
// acceptance runner (full bounds).

#include <cstdint>
#include <string>
#include <vector>

#include "arrad/shape.hpp"

namespace arrad::testing {

struct CheckResult {
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::string first_failure;
  double worst = 0.0;  // largest error seen, where meaningful

  void fail(const std::string& what) {
    if (failures++ == 0) first_failure = what;
  }
  bool ok() const { return failures == 0; }
};

// Every tree shape with exactly `leaves` leaves, all extents set to 1.
std::vector<Shape> shape_structures(std::size_t leaves);
// Every shape with 1..max_leaves leaves and extents in [1, max_extent].
std::vector<Shape> all_shapes(std::size_t max_leaves, std::size_t max_extent);
Shape with_extents(const Shape& structure, const std::vector<std::size_t>& ext);

// pos_add / pos_sub are partial inverses, exhaustively over every plus
// fact s + p ≈ r whose s, u = p + 1 and r have extents ≤ max_extent, and
// every pair of positions. With `right`, pos_sub_right is swept too.
CheckResult check_pos_algebra(std::size_t max_leaves, std::size_t max_extent, bool right);

// rev is an involution and inverts apply, for eq/swap/assoc/split/flat,
// pairs and compositions over the shape universe; rblock is self-inverse
// up to exchanging its middle shapes, and its rev acts as that exchange.
CheckResult check_reshapes(std::size_t max_leaves, std::size_t max_extent);

// ⟨slide i x, y⟩ = ⟨x, backslide i y 0⟩ for 1-d m, n ≤ max_extent at every
// offset, plus one rank-2 case. `worst` is the largest absolute gap.
CheckResult check_slide_adjoint(std::size_t max_extent, std::uint64_t seed);

// ⟦optimize(e, 10)⟧ = ⟦e⟧ within rel_tol·max(1, |value|) for `terms`
// random terms and the adjoints of each. `worst` is the largest scaled gap.
CheckResult check_optimizer_soundness(std::uint64_t seed, std::size_t terms, double rel_tol);

// Declared versus actual shapes of every CNN binding, both statically and
// after a forward evaluation.
CheckResult check_cnn_shapes();

}  // namespace arrad::testing
