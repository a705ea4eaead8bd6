#pragma once

// Binary-tree shapes, positions inside them, and the evidence objects
// (plus/suc/times facts, reshapes) that relate shapes leafwise.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace arrad {

class Shape {
 public:
  static Shape leaf(std::size_t n);
  static Shape prod(const Shape& l, const Shape& r);
  static Shape unit() { return leaf(1); }
  // Right-nested product of the given extents; a single extent is a leaf.
  static Shape of(const std::vector<std::size_t>& extents);

  bool is_leaf() const { return rep_->leaf; }
  std::size_t extent() const;
  const Shape& left() const;
  const Shape& right() const;

  // Number of positions (product of all leaf extents).
  std::size_t size() const { return rep_->size; }
  std::size_t leaf_count() const { return rep_->leaves.size(); }
  // Leaf extents in left-to-right order.
  const std::vector<std::size_t>& leaves() const { return rep_->leaves; }

  bool same_structure(const Shape& o) const;
  friend bool operator==(const Shape& a, const Shape& b);

  // Tree form, e.g. ((6)⊗((5)⊗(5))).
  std::string str() const;
  // Flat leaf list, e.g. [6,5,5].
  std::string leaves_str() const;

 private:
  struct Rep {
    bool leaf;
    std::size_t n;
    std::shared_ptr<const Shape> l, r;
    std::size_t size;
    std::vector<std::size_t> leaves;
  };
  explicit Shape(std::shared_ptr<const Rep> rep) : rep_(std::move(rep)) {}
  std::shared_ptr<const Rep> rep_;
};

// Accepts "5", "[2,3]" (right-nested), "((6)⊗((5)⊗(5)))" and the ASCII
// variant with '*' in place of '⊗'.
Shape parse_shape(std::string_view text);

// Leafwise combination of two shapes with identical structure.
Shape zip_shapes(const Shape& a, const Shape& b, std::size_t (*f)(std::size_t, std::size_t));

class Pos {
 public:
  static Pos leaf(std::size_t i, std::size_t n);
  static Pos prod(const Pos& a, const Pos& b);
  static Pos from_leaves(const Shape& s, std::vector<std::size_t> idx);
  static Pos from_offset(const Shape& s, std::size_t offset);

  const Shape& shape() const { return shape_; }
  const std::vector<std::size_t>& leaves() const { return idx_; }
  bool is_leaf() const { return shape_.is_leaf(); }
  std::size_t index() const;
  Pos left() const;
  Pos right() const;

  // Row-major offset, left subtree major.
  std::size_t offset() const;

  friend bool operator==(const Pos& a, const Pos& b);
  std::string str() const;

 private:
  Pos(Shape s, std::vector<std::size_t> idx) : shape_(std::move(s)), idx_(std::move(idx)) {}
  Shape shape_;
  std::vector<std::size_t> idx_;
};

// Every position of s in offset order.
std::vector<Pos> all_positions(const Shape& s);

std::size_t row_major_offset(const std::vector<std::size_t>& extents, const std::size_t* idx);

// s + p ≈ r, leafwise.
struct PlusFact {
  Shape s, p, r;
  static PlusFact leaf(std::size_t m, std::size_t n);
  static PlusFact prod(const PlusFact& a, const PlusFact& b);
  static PlusFact make(const Shape& s, const Shape& p, const Shape& r);
  static PlusFact infer(const Shape& s, const Shape& p);
  friend bool operator==(const PlusFact&, const PlusFact&) = default;
};

// suc p ≈ u, i.e. u = p + 1 leafwise.
struct SucFact {
  Shape p, u;
  static SucFact leaf(std::size_t n);
  static SucFact prod(const SucFact& a, const SucFact& b);
  static SucFact make(const Shape& p, const Shape& u);
  static SucFact infer(const Shape& p);
  friend bool operator==(const SucFact&, const SucFact&) = default;
};

// s * p ≈ q, leafwise; s counts blocks, p is the block extent.
struct TimesFact {
  Shape s, p, q;
  static TimesFact leaf(std::size_t m, std::size_t n);
  static TimesFact prod(const TimesFact& a, const TimesFact& b);
  static TimesFact make(const Shape& s, const Shape& p, const Shape& q);
  static TimesFact infer(const Shape& s, const Shape& p);
  friend bool operator==(const TimesFact&, const TimesFact&) = default;
};

// Scalar index arithmetic.
// i < m, j < n1  ->  i + j < m + n1 - 1
std::size_t fin_add(std::size_t i, std::size_t m, std::size_t j, std::size_t n1);
// i < m + n, j < m  ->  k with j + k = i and k < n + 1
std::optional<std::size_t> fin_sub(std::size_t i, std::size_t m, std::size_t n, std::size_t j);

// i : P s, j : P u  ->  i ⊕ j : P r
Pos pos_add(const Pos& i, const Pos& j, const SucFact& su, const PlusFact& sp);
// i : P r, j : P s  ->  k : P u with j ⊕ k = i
std::optional<Pos> pos_sub(const Pos& i, const Pos& j, const PlusFact& sp, const SucFact& su);
// i : P r, j : P u  ->  k : P s with k ⊕ j = i
std::optional<Pos> pos_sub_right(const Pos& i, const Pos& j, const PlusFact& sp, const SucFact& su);

// Reshape s p: an invertible relabelling from positions of p to positions of s.
class Reshape {
 public:
  enum class Tag { Eq, Pair, Compose, Split, Flat, Swap, Assocl, Assocr };

  static Reshape eq(const Shape& s);
  // r : s p, r1 : q w  ->  (s⊗q) (p⊗w)
  static Reshape pair(const Reshape& r, const Reshape& r1);
  // r : p q, r1 : s p  ->  s q
  static Reshape compose(const Reshape& r, const Reshape& r1);
  // ι(m*n) -> ι m ⊗ ι n
  static Reshape split(std::size_t m, std::size_t n);
  // ι m ⊗ ι n -> ι(m*n)
  static Reshape flat(std::size_t m, std::size_t n);
  // s⊗p -> p⊗s
  static Reshape swap(const Shape& s, const Shape& p);
  // s⊗(p⊗q) -> (s⊗p)⊗q
  static Reshape assocl(const Shape& s, const Shape& p, const Shape& q);
  // (s⊗p)⊗q -> s⊗(p⊗q)
  static Reshape assocr(const Shape& s, const Shape& p, const Shape& q);

  Tag tag() const { return rep_->tag; }
  const Shape& source() const { return rep_->src; }
  const Shape& target() const { return rep_->dst; }

  // Maps a position of target() to the position of source() it reads.
  Pos apply(const Pos& i) const;
  Reshape rev() const;

  friend bool operator==(const Reshape& a, const Reshape& b);
  std::string str() const;

 private:
  struct Rep {
    Tag tag;
    Shape src, dst;
    std::shared_ptr<const Reshape> a, b;
  };
  explicit Reshape(std::shared_ptr<const Rep> rep) : rep_(std::move(rep)) {}
  std::shared_ptr<const Rep> rep_;
};

// ((s⊗p)⊗(q⊗r)) -> ((s⊗q)⊗(p⊗r)); acts as ((i⊗j)⊗(k⊗l)) ↦ ((i⊗k)⊗(j⊗l)).
Reshape rblock(const Shape& s, const Shape& p, const Shape& q, const Shape& r);

}  // namespace arrad
