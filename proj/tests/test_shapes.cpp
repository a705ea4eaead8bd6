#include "doctest.h"

#include "arrad/errors.hpp"
#include "arrad/shape.hpp"
#include "properties.hpp"

using namespace arrad;
using namespace arrad::testing;

TEST_CASE("shapes parse from every accepted notation") {
  Shape s = Shape::of({6, 5, 5});
  CHECK(parse_shape("[6,5,5]") == s);
  CHECK(parse_shape("((6)⊗((5)⊗(5)))") == s);
  CHECK(parse_shape("((6)*((5)*(5)))") == s);
  CHECK(parse_shape(s.str()) == s);
  CHECK(parse_shape("7") == Shape::leaf(7));
  CHECK(s.size() == 150);
  CHECK(s.leaf_count() == 3);
  CHECK(s.leaves_str() == "[6,5,5]");
  CHECK_THROWS_AS(parse_shape("(6⊗"), ParseError);
  CHECK_THROWS_AS(parse_shape("[]"), ParseError);
}

TEST_CASE("structure matters for equality, not just extents") {
  Shape a = Shape::prod(Shape::leaf(2), Shape::prod(Shape::leaf(3), Shape::leaf(4)));
  Shape b = Shape::prod(Shape::prod(Shape::leaf(2), Shape::leaf(3)), Shape::leaf(4));
  CHECK_FALSE(a == b);
  CHECK(a.leaves() == b.leaves());
  CHECK_FALSE(a.same_structure(b));
}

TEST_CASE("positions: offsets are row-major with the left subtree major") {
  Shape s = Shape::prod(Shape::prod(Shape::leaf(2), Shape::leaf(3)), Shape::leaf(4));
  auto ps = all_positions(s);
  REQUIRE(ps.size() == 24);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    CHECK(ps[k].offset() == k);
    CHECK(Pos::from_offset(s, k) == ps[k]);
  }
  Pos p = Pos::from_leaves(s, {1, 2, 3});
  CHECK(p.offset() == 23);
  CHECK(p.left() == Pos::from_leaves(Shape::of({2, 3}), {1, 2}));
  CHECK(p.right() == Pos::leaf(3, 4));
  CHECK_THROWS_AS(Pos::leaf(4, 4), BoundsError);
  CHECK_THROWS_AS(Pos::from_leaves(s, {0, 3, 0}), BoundsError);
}

TEST_CASE("facts are checked leafwise") {
  CHECK_NOTHROW(PlusFact::make(Shape::of({3, 4}), Shape::of({2, 1}), Shape::of({5, 5})));
  CHECK_THROWS_AS(PlusFact::make(Shape::of({3, 4}), Shape::of({2, 1}), Shape::of({5, 6})), ShapeError);
  CHECK_THROWS_AS(PlusFact::make(Shape::of({3, 4}), Shape::leaf(2), Shape::of({5, 5})), ShapeError);
  CHECK_NOTHROW(SucFact::make(Shape::of({4, 0}), Shape::of({5, 1})));
  CHECK_THROWS_AS(SucFact::make(Shape::leaf(4), Shape::leaf(4)), ShapeError);
  CHECK(TimesFact::infer(Shape::of({2, 12}), Shape::of({2, 2})).q == Shape::of({4, 24}));
  CHECK_THROWS_AS(TimesFact::make(Shape::leaf(2), Shape::leaf(3), Shape::leaf(5)), ShapeError);
}

TEST_CASE("scalar index arithmetic") {
  CHECK(fin_add(2, 3, 1, 2) == 3);
  CHECK_THROWS_AS(fin_add(3, 3, 0, 2), BoundsError);
  CHECK(fin_sub(3, 3, 2, 1) == std::optional<std::size_t>(2));
  CHECK_FALSE(fin_sub(0, 3, 2, 1).has_value());
  CHECK_FALSE(fin_sub(4, 3, 2, 0).has_value());  // 4 - 0 is past the window
}

TEST_CASE("pos_add, pos_sub and pos_sub_right are partial inverses (≤ 3 leaves, extents ≤ 3)") {
  CheckResult r = check_pos_algebra(3, 3, true);
  INFO(r.first_failure);
  CHECK(r.checks > 10000);
  CHECK(r.ok());
}

TEST_CASE("pos_sub rejects mismatched operands") {
  PlusFact sp = PlusFact::leaf(3, 2);
  SucFact su = SucFact::infer(sp.p);
  CHECK_THROWS_AS(pos_sub(Pos::leaf(0, 3), Pos::leaf(0, 3), sp, su), ShapeError);
  CHECK_THROWS_AS(pos_add(Pos::leaf(0, 3), Pos::leaf(0, 5), su, sp), ShapeError);
}

TEST_CASE("reshapes: rev is an involution and inverts apply; rblock (≤ 4 leaves, extents ≤ 2)") {
  CheckResult r = check_reshapes(4, 2);
  INFO(r.first_failure);
  CHECK(r.checks > 1000);
  CHECK(r.ok());
}

TEST_CASE("split and flat relabel row-major") {
  Reshape sp = Reshape::split(2, 3);
  CHECK(sp.source() == Shape::leaf(6));
  CHECK(sp.target() == Shape::of({2, 3}));
  CHECK(sp.apply(Pos::from_leaves(Shape::of({2, 3}), {1, 2})) == Pos::leaf(5, 6));
  CHECK_THROWS_AS(Reshape::compose(Reshape::split(2, 3), Reshape::split(2, 3)), ShapeError);
  CHECK_THROWS_AS(sp.apply(Pos::leaf(0, 6)), ShapeError);
}
