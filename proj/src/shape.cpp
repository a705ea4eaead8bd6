#include "arrad/shape.hpp"

#include <cctype>

#include "arrad/errors.hpp"

namespace arrad {

Shape Shape::leaf(std::size_t n) {
  return Shape(std::make_shared<const Rep>(Rep{true, n, nullptr, nullptr, n, {n}}));
}

Shape Shape::prod(const Shape& l, const Shape& r) {
  std::vector<std::size_t> lv = l.leaves();
  lv.insert(lv.end(), r.leaves().begin(), r.leaves().end());
  return Shape(std::make_shared<const Rep>(Rep{false, 0, std::make_shared<const Shape>(l),
                                               std::make_shared<const Shape>(r), l.size() * r.size(),
                                               std::move(lv)}));
}

Shape Shape::of(const std::vector<std::size_t>& extents) {
  if (extents.empty()) throw ShapeError("shape needs at least one extent");
  Shape s = leaf(extents.back());
  for (std::size_t k = extents.size() - 1; k-- > 0;) s = prod(leaf(extents[k]), s);
  return s;
}

std::size_t Shape::extent() const {
  if (!is_leaf()) throw ShapeError("extent() on product shape " + str());
  return rep_->n;
}

const Shape& Shape::left() const {
  if (is_leaf()) throw ShapeError("left() on leaf shape " + str());
  return *rep_->l;
}

const Shape& Shape::right() const {
  if (is_leaf()) throw ShapeError("right() on leaf shape " + str());
  return *rep_->r;
}

bool Shape::same_structure(const Shape& o) const {
  if (rep_ == o.rep_) return true;
  if (is_leaf() != o.is_leaf()) return false;
  if (is_leaf()) return true;
  return left().same_structure(o.left()) && right().same_structure(o.right());
}

bool operator==(const Shape& a, const Shape& b) {
  if (a.rep_ == b.rep_) return true;
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf()) return a.rep_->n == b.rep_->n;
  return a.size() == b.size() && a.left() == b.left() && a.right() == b.right();
}

std::string Shape::str() const {
  if (is_leaf()) return "(" + std::to_string(rep_->n) + ")";
  return "(" + left().str() + "⊗" + right().str() + ")";
}

std::string Shape::leaves_str() const {
  std::string out = "[";
  for (std::size_t k = 0; k < leaves().size(); ++k) {
    if (k) out += ",";
    out += std::to_string(leaves()[k]);
  }
  return out + "]";
}

namespace {

struct ShapeParser {
  std::string_view t;
  std::size_t i = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("shape: " + what + " at offset " + std::to_string(i) + " in '" + std::string(t) + "'");
  }
  void skip() {
    while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
  }
  bool eat(std::string_view tok) {
    skip();
    if (t.substr(i, tok.size()) == tok) {
      i += tok.size();
      return true;
    }
    return false;
  }
  std::size_t number() {
    skip();
    std::size_t start = i;
    std::size_t v = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) {
      v = v * 10 + static_cast<std::size_t>(t[i] - '0');
      ++i;
    }
    if (i == start) fail("expected extent");
    return v;
  }
  Shape atom() {
    if (eat("(")) {
      Shape s = expr();
      if (!eat(")")) fail("expected ')'");
      return s;
    }
    if (eat("[")) {
      std::vector<std::size_t> ext{number()};
      while (eat(",")) ext.push_back(number());
      if (!eat("]")) fail("expected ']'");
      return Shape::of(ext);
    }
    return Shape::leaf(number());
  }
  Shape expr() {
    Shape l = atom();
    if (eat("⊗") || eat("*")) return Shape::prod(l, expr());
    return l;
  }
};

}  // namespace

Shape parse_shape(std::string_view text) {
  ShapeParser p{text};
  Shape s = p.expr();
  p.skip();
  if (p.i != text.size()) p.fail("trailing input");
  return s;
}

Shape zip_shapes(const Shape& a, const Shape& b, std::size_t (*f)(std::size_t, std::size_t)) {
  if (a.is_leaf() && b.is_leaf()) return Shape::leaf(f(a.extent(), b.extent()));
  if (a.is_leaf() || b.is_leaf()) throw ShapeError("structure mismatch: " + a.str() + " vs " + b.str());
  return Shape::prod(zip_shapes(a.left(), b.left(), f), zip_shapes(a.right(), b.right(), f));
}

// ---------------------------------------------------------------- positions

Pos Pos::leaf(std::size_t i, std::size_t n) {
  if (i >= n) throw BoundsError("index " + std::to_string(i) + " out of range " + std::to_string(n));
  return Pos(Shape::leaf(n), {i});
}

Pos Pos::prod(const Pos& a, const Pos& b) {
  std::vector<std::size_t> idx = a.idx_;
  idx.insert(idx.end(), b.idx_.begin(), b.idx_.end());
  return Pos(Shape::prod(a.shape_, b.shape_), std::move(idx));
}

Pos Pos::from_leaves(const Shape& s, std::vector<std::size_t> idx) {
  const auto& ext = s.leaves();
  if (idx.size() != ext.size()) throw ShapeError("position has wrong leaf count for " + s.str());
  for (std::size_t k = 0; k < idx.size(); ++k)
    if (idx[k] >= ext[k])
      throw BoundsError("index " + std::to_string(idx[k]) + " out of range " + std::to_string(ext[k]));
  return Pos(s, std::move(idx));
}

Pos Pos::from_offset(const Shape& s, std::size_t offset) {
  if (offset >= s.size()) throw BoundsError("offset out of range for " + s.str());
  const auto& ext = s.leaves();
  std::vector<std::size_t> idx(ext.size());
  for (std::size_t k = ext.size(); k-- > 0;) {
    idx[k] = offset % ext[k];
    offset /= ext[k];
  }
  return Pos(s, std::move(idx));
}

std::size_t Pos::index() const {
  if (!is_leaf()) throw ShapeError("index() on product position");
  return idx_[0];
}

Pos Pos::left() const {
  const Shape& l = shape_.left();
  return Pos(l, std::vector<std::size_t>(idx_.begin(), idx_.begin() + static_cast<long>(l.leaf_count())));
}

Pos Pos::right() const {
  const Shape& l = shape_.left();
  return Pos(shape_.right(), std::vector<std::size_t>(idx_.begin() + static_cast<long>(l.leaf_count()), idx_.end()));
}

std::size_t row_major_offset(const std::vector<std::size_t>& extents, const std::size_t* idx) {
  std::size_t off = 0;
  for (std::size_t k = 0; k < extents.size(); ++k) off = off * extents[k] + idx[k];
  return off;
}

std::size_t Pos::offset() const { return row_major_offset(shape_.leaves(), idx_.data()); }

bool operator==(const Pos& a, const Pos& b) { return a.idx_ == b.idx_ && a.shape_ == b.shape_; }

std::string Pos::str() const {
  if (is_leaf()) return std::to_string(idx_[0]);
  return "(" + left().str() + "⊗" + right().str() + ")";
}

std::vector<Pos> all_positions(const Shape& s) {
  std::vector<Pos> out;
  out.reserve(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out.push_back(Pos::from_offset(s, k));
  return out;
}

// -------------------------------------------------------------------- facts

namespace {

void check_same_structure(const Shape& a, const Shape& b, const char* what) {
  if (!a.same_structure(b)) throw ShapeError(std::string(what) + ": structure mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

PlusFact PlusFact::leaf(std::size_t m, std::size_t n) {
  return {Shape::leaf(m), Shape::leaf(n), Shape::leaf(m + n)};
}

PlusFact PlusFact::prod(const PlusFact& a, const PlusFact& b) {
  return {Shape::prod(a.s, b.s), Shape::prod(a.p, b.p), Shape::prod(a.r, b.r)};
}

PlusFact PlusFact::make(const Shape& s, const Shape& p, const Shape& r) {
  check_same_structure(s, p, "plus fact");
  check_same_structure(s, r, "plus fact");
  for (std::size_t k = 0; k < s.leaf_count(); ++k)
    if (s.leaves()[k] + p.leaves()[k] != r.leaves()[k])
      throw ShapeError("plus fact does not hold: " + s.str() + " + " + p.str() + " ≠ " + r.str());
  return {s, p, r};
}

PlusFact PlusFact::infer(const Shape& s, const Shape& p) {
  check_same_structure(s, p, "plus fact");
  return {s, p, zip_shapes(s, p, [](std::size_t a, std::size_t b) { return a + b; })};
}

SucFact SucFact::leaf(std::size_t n) { return {Shape::leaf(n), Shape::leaf(n + 1)}; }

SucFact SucFact::prod(const SucFact& a, const SucFact& b) {
  return {Shape::prod(a.p, b.p), Shape::prod(a.u, b.u)};
}

SucFact SucFact::make(const Shape& p, const Shape& u) {
  check_same_structure(p, u, "suc fact");
  for (std::size_t k = 0; k < p.leaf_count(); ++k)
    if (p.leaves()[k] + 1 != u.leaves()[k])
      throw ShapeError("suc fact does not hold: suc " + p.str() + " ≠ " + u.str());
  return {p, u};
}

SucFact SucFact::infer(const Shape& p) {
  return {p, zip_shapes(p, p, [](std::size_t a, std::size_t) { return a + 1; })};
}

TimesFact TimesFact::leaf(std::size_t m, std::size_t n) {
  return {Shape::leaf(m), Shape::leaf(n), Shape::leaf(m * n)};
}

TimesFact TimesFact::prod(const TimesFact& a, const TimesFact& b) {
  return {Shape::prod(a.s, b.s), Shape::prod(a.p, b.p), Shape::prod(a.q, b.q)};
}

TimesFact TimesFact::make(const Shape& s, const Shape& p, const Shape& q) {
  check_same_structure(s, p, "times fact");
  check_same_structure(s, q, "times fact");
  for (std::size_t k = 0; k < s.leaf_count(); ++k)
    if (s.leaves()[k] * p.leaves()[k] != q.leaves()[k])
      throw ShapeError("times fact does not hold: " + s.str() + " * " + p.str() + " ≠ " + q.str());
  return {s, p, q};
}

TimesFact TimesFact::infer(const Shape& s, const Shape& p) {
  check_same_structure(s, p, "times fact");
  return {s, p, zip_shapes(s, p, [](std::size_t a, std::size_t b) { return a * b; })};
}

// ---------------------------------------------------------- index arithmetic

std::size_t fin_add(std::size_t i, std::size_t m, std::size_t j, std::size_t n1) {
  if (i >= m || j >= n1) throw BoundsError("fin_add operand out of range");
  return i + j;
}

std::optional<std::size_t> fin_sub(std::size_t i, std::size_t m, std::size_t n, std::size_t j) {
  if (i >= m + n || j >= m) throw BoundsError("fin_sub operand out of range");
  if (i < j) return std::nullopt;
  std::size_t k = i - j;
  if (k >= n + 1) return std::nullopt;
  return k;
}

Pos pos_add(const Pos& i, const Pos& j, const SucFact& su, const PlusFact& sp) {
  if (!(su.p == sp.p)) throw ShapeError("pos_add: facts disagree on p");
  if (!(i.shape() == sp.s) || !(j.shape() == su.u)) throw ShapeError("pos_add: operand shapes do not match facts");
  std::vector<std::size_t> k(i.leaves().size());
  for (std::size_t l = 0; l < k.size(); ++l)
    k[l] = fin_add(i.leaves()[l], sp.s.leaves()[l], j.leaves()[l], su.u.leaves()[l]);
  return Pos::from_leaves(sp.r, std::move(k));
}

std::optional<Pos> pos_sub(const Pos& i, const Pos& j, const PlusFact& sp, const SucFact& su) {
  if (!(su.p == sp.p)) throw ShapeError("pos_sub: facts disagree on p");
  if (!(i.shape() == sp.r) || !(j.shape() == sp.s)) throw ShapeError("pos_sub: operand shapes do not match facts");
  // Decide definedness before allocating: most calls in bulk sweeps fail.
  const std::size_t n = i.leaves().size();
  for (std::size_t l = 0; l < n; ++l)
    if (!fin_sub(i.leaves()[l], sp.s.leaves()[l], sp.p.leaves()[l], j.leaves()[l])) return std::nullopt;
  std::vector<std::size_t> k(n);
  for (std::size_t l = 0; l < n; ++l) k[l] = i.leaves()[l] - j.leaves()[l];
  return Pos::from_leaves(su.u, std::move(k));
}

std::optional<Pos> pos_sub_right(const Pos& i, const Pos& j, const PlusFact& sp, const SucFact& su) {
  if (!(su.p == sp.p)) throw ShapeError("pos_sub_right: facts disagree on p");
  if (!(i.shape() == sp.r) || !(j.shape() == su.u))
    throw ShapeError("pos_sub_right: operand shapes do not match facts");
  const std::size_t n = i.leaves().size();
  for (std::size_t l = 0; l < n; ++l) {
    std::size_t a = i.leaves()[l], b = j.leaves()[l];
    if (a < b || a - b >= sp.s.leaves()[l]) return std::nullopt;
  }
  std::vector<std::size_t> k(n);
  for (std::size_t l = 0; l < n; ++l) k[l] = i.leaves()[l] - j.leaves()[l];
  return Pos::from_leaves(sp.s, std::move(k));
}

// ----------------------------------------------------------------- reshapes

Reshape Reshape::eq(const Shape& s) { return Reshape(std::make_shared<const Rep>(Rep{Tag::Eq, s, s, nullptr, nullptr})); }

Reshape Reshape::pair(const Reshape& r, const Reshape& r1) {
  return Reshape(std::make_shared<const Rep>(Rep{Tag::Pair, Shape::prod(r.source(), r1.source()),
                                                 Shape::prod(r.target(), r1.target()),
                                                 std::make_shared<const Reshape>(r),
                                                 std::make_shared<const Reshape>(r1)}));
}

Reshape Reshape::compose(const Reshape& r, const Reshape& r1) {
  if (!(r.source() == r1.target()))
    throw ShapeError("reshape composition mismatch: " + r1.target().str() + " vs " + r.source().str());
  return Reshape(std::make_shared<const Rep>(Rep{Tag::Compose, r1.source(), r.target(),
                                                 std::make_shared<const Reshape>(r),
                                                 std::make_shared<const Reshape>(r1)}));
}

Reshape Reshape::split(std::size_t m, std::size_t n) {
  return Reshape(std::make_shared<const Rep>(
      Rep{Tag::Split, Shape::leaf(m * n), Shape::prod(Shape::leaf(m), Shape::leaf(n)), nullptr, nullptr}));
}

Reshape Reshape::flat(std::size_t m, std::size_t n) {
  return Reshape(std::make_shared<const Rep>(
      Rep{Tag::Flat, Shape::prod(Shape::leaf(m), Shape::leaf(n)), Shape::leaf(m * n), nullptr, nullptr}));
}

Reshape Reshape::swap(const Shape& s, const Shape& p) {
  return Reshape(std::make_shared<const Rep>(Rep{Tag::Swap, Shape::prod(s, p), Shape::prod(p, s), nullptr, nullptr}));
}

Reshape Reshape::assocl(const Shape& s, const Shape& p, const Shape& q) {
  return Reshape(std::make_shared<const Rep>(
      Rep{Tag::Assocl, Shape::prod(s, Shape::prod(p, q)), Shape::prod(Shape::prod(s, p), q), nullptr, nullptr}));
}

Reshape Reshape::assocr(const Shape& s, const Shape& p, const Shape& q) {
  return Reshape(std::make_shared<const Rep>(
      Rep{Tag::Assocr, Shape::prod(Shape::prod(s, p), q), Shape::prod(s, Shape::prod(p, q)), nullptr, nullptr}));
}

Pos Reshape::apply(const Pos& i) const {
  if (!(i.shape() == target())) throw ShapeError("reshape applied to position of shape " + i.shape().str());
  switch (tag()) {
    case Tag::Eq:
      return i;
    case Tag::Pair:
      return Pos::prod(rep_->a->apply(i.left()), rep_->b->apply(i.right()));
    case Tag::Compose:
      return rep_->b->apply(rep_->a->apply(i));
    case Tag::Split: {
      std::size_t n = target().right().extent();
      return Pos::from_leaves(source(), {i.leaves()[0] * n + i.leaves()[1]});
    }
    case Tag::Flat: {
      std::size_t n = source().right().extent();
      std::size_t k = i.leaves()[0];
      return Pos::from_leaves(source(), {k / n, k % n});
    }
    case Tag::Swap:
      return Pos::prod(i.right(), i.left());
    case Tag::Assocl: {
      Pos ij = i.left();
      return Pos::prod(ij.left(), Pos::prod(ij.right(), i.right()));
    }
    case Tag::Assocr: {
      Pos jk = i.right();
      return Pos::prod(Pos::prod(i.left(), jk.left()), jk.right());
    }
  }
  throw ShapeError("unknown reshape");
}

Reshape Reshape::rev() const {
  switch (tag()) {
    case Tag::Eq:
      return *this;
    case Tag::Pair:
      return pair(rep_->a->rev(), rep_->b->rev());
    case Tag::Compose:
      return compose(rep_->b->rev(), rep_->a->rev());
    case Tag::Split:
      return flat(target().left().extent(), target().right().extent());
    case Tag::Flat:
      return split(source().left().extent(), source().right().extent());
    case Tag::Swap:
      return swap(target().left(), target().right());
    case Tag::Assocl: {
      const Shape& s = source().left();
      const Shape& p = source().right().left();
      const Shape& q = source().right().right();
      return assocr(s, p, q);
    }
    case Tag::Assocr: {
      const Shape& s = source().left().left();
      const Shape& p = source().left().right();
      const Shape& q = source().right();
      return assocl(s, p, q);
    }
  }
  throw ShapeError("unknown reshape");
}

bool operator==(const Reshape& a, const Reshape& b) {
  if (a.rep_ == b.rep_) return true;
  if (a.tag() != b.tag() || !(a.source() == b.source()) || !(a.target() == b.target())) return false;
  if (a.tag() == Reshape::Tag::Pair || a.tag() == Reshape::Tag::Compose)
    return *a.rep_->a == *b.rep_->a && *a.rep_->b == *b.rep_->b;
  return true;
}

std::string Reshape::str() const {
  switch (tag()) {
    case Tag::Eq:
      return "eq";
    case Tag::Pair:
      return "(" + rep_->a->str() + " , " + rep_->b->str() + ")";
    case Tag::Compose:
      return "(" + rep_->a->str() + " ∙ " + rep_->b->str() + ")";
    case Tag::Split:
      return "split";
    case Tag::Flat:
      return "flat";
    case Tag::Swap:
      return "swap";
    case Tag::Assocl:
      return "assocl";
    case Tag::Assocr:
      return "assocr";
  }
  return "?";
}

Reshape rblock(const Shape& s, const Shape& p, const Shape& q, const Shape& r) {
  // assocl ∙ ((eq , (assocr ∙ ((swap , eq) ∙ assocl))) ∙ assocr)
  Reshape inner = Reshape::compose(
      Reshape::assocr(q, p, r),
      Reshape::compose(Reshape::pair(Reshape::swap(p, q), Reshape::eq(r)), Reshape::assocl(p, q, r)));
  Reshape mid = Reshape::compose(Reshape::pair(Reshape::eq(s), inner), Reshape::assocr(s, p, Shape::prod(q, r)));
  return Reshape::compose(Reshape::assocl(s, q, Shape::prod(p, r)), mid);
}

}  // namespace arrad
