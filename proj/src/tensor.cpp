#include "arrad/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "arrad/errors.hpp"

namespace arrad {

Tensor::Tensor(Shape s, std::vector<double> data) : shape_(std::move(s)), data_(std::move(data)) {
  if (data_.size() != shape_.size())
    throw ShapeError("tensor payload has " + std::to_string(data_.size()) + " elements, shape " + shape_.str() +
                     " needs " + std::to_string(shape_.size()));
}

Tensor Tensor::konst(const Shape& s, double v) { return Tensor(s, std::vector<double>(s.size(), v)); }

Tensor Tensor::generate(const Shape& s, const std::function<double(const Pos&)>& f) {
  std::vector<double> d(s.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = f(Pos::from_offset(s, k));
  return Tensor(s, std::move(d));
}

Tensor Tensor::iota(const Shape& s) {
  std::vector<double> d(s.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<double>(k);
  return Tensor(s, std::move(d));
}

double Tensor::at(const Pos& i) const {
  if (!(i.shape() == shape_)) throw ShapeError("position of shape " + i.shape().str() + " used on " + shape_.str());
  return data_[i.offset()];
}

double& Tensor::at(const Pos& i) {
  if (!(i.shape() == shape_)) throw ShapeError("position of shape " + i.shape().str() + " used on " + shape_.str());
  return data_[i.offset()];
}

Tensor map(const Tensor& a, const std::function<double(double)>& f) {
  std::vector<double> d(a.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = f(a[k]);
  return Tensor(a.shape(), std::move(d));
}

Tensor zip_with(const Tensor& a, const Tensor& b, const std::function<double(double, double)>& f) {
  if (!(a.shape() == b.shape())) throw ShapeError("zip_with: " + a.shape().str() + " vs " + b.shape().str());
  std::vector<double> d(a.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = f(a[k], b[k]);
  return Tensor(a.shape(), std::move(d));
}

Tensor select_outer(const Tensor& a, const Pos& i) {
  const Shape& s = a.shape();
  if (s.is_leaf() || !(s.left() == i.shape())) throw ShapeError("select_outer: index shape does not match");
  const Shape& p = s.right();
  std::size_t base = i.offset() * p.size();
  return Tensor(p, std::vector<double>(a.data().begin() + static_cast<long>(base),
                                       a.data().begin() + static_cast<long>(base + p.size())));
}

Tensor unnest(const Shape& s, const Shape& p, const std::function<Tensor(const Pos&)>& f) {
  std::vector<double> d;
  d.reserve(s.size() * p.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    Tensor t = f(Pos::from_offset(s, k));
    if (!(t.shape() == p)) throw ShapeError("unnest: inner shape mismatch");
    d.insert(d.end(), t.data().begin(), t.data().end());
  }
  return Tensor(Shape::prod(s, p), std::move(d));
}

namespace {

// Nested right fold over the leaves of a shape. `idx` accumulates the leaf
// indices; `k` is the leaf being enumerated.
double fold_leaves(const std::vector<std::size_t>& ext, std::vector<std::size_t>& idx, std::size_t k,
                   const std::function<double(const std::vector<std::size_t>&)>& f) {
  if (k == ext.size()) return f(idx);
  double acc = 0.0;
  for (std::size_t i = ext[k]; i-- > 0;) {
    idx[k] = i;
    acc = fold_leaves(ext, idx, k + 1, f) + acc;
  }
  return acc;
}

}  // namespace

double fold_sum(const Shape& s, const std::function<double(const Pos&)>& f) {
  std::vector<std::size_t> idx(s.leaf_count());
  return fold_leaves(s.leaves(), idx, 0, [&](const std::vector<std::size_t>& ix) { return f(Pos::from_leaves(s, ix)); });
}

double reduce_sum(const Tensor& a) {
  const auto& ext = a.shape().leaves();
  std::vector<std::size_t> idx(ext.size());
  return fold_leaves(ext, idx, 0, [&](const std::vector<std::size_t>& ix) { return a[row_major_offset(ext, ix.data())]; });
}

Tensor reshape(const Reshape& r, const Tensor& a) {
  if (!(a.shape() == r.source())) throw ShapeError("reshape source mismatch");
  return Tensor::generate(r.target(), [&](const Pos& i) { return a.at(r.apply(i)); });
}

Tensor slide(const Pos& i, const PlusFact& sp, const Tensor& a, const SucFact& su) {
  if (!(a.shape() == sp.r)) throw ShapeError("slide: array shape does not match fact");
  return Tensor::generate(su.u, [&](const Pos& j) { return a.at(pos_add(i, j, su, sp)); });
}

Tensor backslide(const Pos& i, const Tensor& y, const SucFact& su, double def, const PlusFact& sp) {
  if (!(y.shape() == su.u)) throw ShapeError("backslide: array shape does not match fact");
  return Tensor::generate(sp.r, [&](const Pos& j) {
    auto k = pos_sub(j, i, sp, su);
    return k ? y.at(*k) : def;
  });
}

namespace {

Tensor block_rec(const TimesFact& m, const Tensor& a);

// block (l ⊗ r) = reshape rblock ∘ unnest ∘ block l ∘ map (block r) ∘ nest
Tensor block_rec(const TimesFact& m, const Tensor& a) {
  if (m.q.is_leaf()) return reshape(Reshape::split(m.s.extent(), m.p.extent()), a);
  TimesFact ml{m.s.left(), m.p.left(), m.q.left()};
  TimesFact mr{m.s.right(), m.p.right(), m.q.right()};
  const Shape& q1 = m.q.left();
  Shape inner = Shape::prod(mr.s, mr.p);
  // map (block r) over the outer q1 dimension
  Tensor mapped = unnest(q1, inner, [&](const Pos& i) { return block_rec(mr, select_outer(a, i)); });
  // block l on the outer dimension, carrying the inner arrays along
  Tensor outer;
  if (q1.is_leaf()) {
    outer = reshape(Reshape::pair(Reshape::split(ml.s.extent(), ml.p.extent()), Reshape::eq(inner)), mapped);
  } else {
    // Block the outer dimension as a whole array of arrays: each inner
    // array moves together, so block the index space and gather.
    Tensor idx = block_rec(ml, Tensor::iota(q1));
    outer = Tensor::generate(Shape::prod(Shape::prod(ml.s, ml.p), inner), [&](const Pos& ix) {
      auto src = static_cast<std::size_t>(idx.at(ix.left()));
      return mapped.at(Pos::prod(Pos::from_offset(q1, src), ix.right()));
    });
  }
  return reshape(rblock(ml.s, ml.p, mr.s, mr.p), outer);
}

}  // namespace

Tensor block(const TimesFact& m, const Tensor& a) {
  if (!(a.shape() == m.q)) throw ShapeError("block: array shape " + a.shape().str() + " is not " + m.q.str());
  return block_rec(m, a);
}

Tensor unblock(const TimesFact& m, const Tensor& a) {
  Shape sp = Shape::prod(m.s, m.p);
  if (!(a.shape() == sp)) throw ShapeError("unblock: array shape " + a.shape().str() + " is not " + sp.str());
  return Tensor::generate(m.q, [&](const Pos& k) {
    std::vector<std::size_t> i(k.leaves().size()), j(k.leaves().size());
    for (std::size_t l = 0; l < i.size(); ++l) {
      i[l] = k.leaves()[l] / m.p.leaves()[l];
      j[l] = k.leaves()[l] % m.p.leaves()[l];
    }
    return a.at(Pos::prod(Pos::from_leaves(m.s, i), Pos::from_leaves(m.p, j)));
  });
}

Tensor conv(const Tensor& a, const PlusFact& sp, const Tensor& w, const SucFact& su) {
  if (!(w.shape() == sp.s)) throw ShapeError("conv: weight shape does not match fact");
  if (!(a.shape() == sp.r)) throw ShapeError("conv: input shape does not match fact");
  std::vector<Tensor> slides;
  slides.reserve(sp.s.size());
  for (std::size_t k = 0; k < sp.s.size(); ++k) slides.push_back(slide(Pos::from_offset(sp.s, k), sp, a, su));
  return Tensor::generate(su.u, [&](const Pos& j) {
    std::size_t off = j.offset();
    return fold_sum(sp.s, [&](const Pos& i) {
      std::size_t k = i.offset();
      return w[k] * slides[k][off];
    });
  });
}

Tensor mconv(const PlusFact& sp, const Tensor& inp, const Tensor& w, const Tensor& b, const SucFact& su) {
  const Shape& v = b.shape();
  if (!(w.shape() == Shape::prod(v, sp.s))) throw ShapeError("mconv: weight shape mismatch");
  return unnest(v, su.u, [&](const Pos& i) {
    double bi = b.at(i);
    return map(conv(inp, sp, select_outer(w, i), su), [&](double x) { return bi + x; });
  });
}

Tensor avgp2(std::size_t m, std::size_t n, const Tensor& a) {
  TimesFact tf = TimesFact::prod(TimesFact::leaf(m, 2), TimesFact::leaf(n, 2));
  Tensor blk = block(tf, a);
  return Tensor::generate(tf.s, [&](const Pos& i) { return reduce_sum(select_outer(blk, i)) / 4.0; });
}

Tensor logistic(const Tensor& a) {
  return map(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor forward_reference(const Tensor& inp, const CnnWeights& w) {
  auto L = [](std::size_t n) { return Shape::leaf(n); };
  auto P = [](const Shape& a, const Shape& b) { return Shape::prod(a, b); };
  // c1 = logistic (mconv (ι⊗ι) inp k1 b1 (ι⊗ι))
  PlusFact sp1 = PlusFact::prod(PlusFact::leaf(5, 23), PlusFact::leaf(5, 23));
  SucFact su1 = SucFact::prod(SucFact::leaf(23), SucFact::leaf(23));
  Tensor c1 = logistic(mconv(sp1, inp, w.k1, w.b1, su1));
  // s1 = unnest (map (avgp2 12 12) (nest c1))
  Tensor s1 = unnest(L(6), P(L(12), L(12)), [&](const Pos& i) { return avgp2(12, 12, select_outer(c1, i)); });
  // c2 = logistic (mconv (ι⊗(ι⊗ι)) s1 k2 b2 (ι⊗(ι⊗ι)))
  PlusFact sp2 = PlusFact::prod(PlusFact::leaf(6, 0), PlusFact::prod(PlusFact::leaf(5, 7), PlusFact::leaf(5, 7)));
  SucFact su2 = SucFact::prod(SucFact::leaf(0), SucFact::prod(SucFact::leaf(7), SucFact::leaf(7)));
  Tensor c2 = logistic(mconv(sp2, s1, w.k2, w.b2, su2));
  // s2 = unnest (map (unnest ∘ map (avgp2 4 4) ∘ nest) (nest c2))
  Shape s2inner = P(L(1), P(L(4), L(4)));
  Tensor s2 = unnest(L(12), s2inner, [&](const Pos& i) {
    Tensor ci = select_outer(c2, i);
    return unnest(L(1), P(L(4), L(4)), [&](const Pos& j) { return avgp2(4, 4, select_outer(ci, j)); });
  });
  // r = logistic (mconv (ι⊗(ι⊗(ι⊗ι))) s2 fc b (ι⊗(ι⊗(ι⊗ι))))
  PlusFact sp3 = PlusFact::prod(PlusFact::leaf(12, 0),
                                PlusFact::prod(PlusFact::leaf(1, 0), PlusFact::prod(PlusFact::leaf(4, 0), PlusFact::leaf(4, 0))));
  SucFact su3 = SucFact::prod(SucFact::leaf(0), SucFact::prod(SucFact::leaf(0), SucFact::prod(SucFact::leaf(0), SucFact::leaf(0))));
  return logistic(mconv(sp3, s2, w.fc, w.b, su3));
}

// ------------------------------------------------------------ serialization

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_shape(std::ostream& os, const Shape& s) {
  if (s.is_leaf()) {
    os.put(0);
    if (s.extent() > 0xffffffffu) throw ShapeError("extent does not fit the dump format");
    put_u32(os, static_cast<std::uint32_t>(s.extent()));
  } else {
    os.put(1);
    write_shape(os, s.left());
    write_shape(os, s.right());
  }
}

void read_exact(std::istream& is, void* dst, std::size_t n) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("tensor dump truncated");
}

Shape read_shape(std::istream& is, int depth) {
  if (depth > 64) throw IoError("tensor dump shape nests too deeply");
  unsigned char tag;
  read_exact(is, &tag, 1);
  if (tag == 0) {
    unsigned char b[4];
    read_exact(is, b, 4);
    return Shape::leaf(static_cast<std::size_t>(b[0]) | static_cast<std::size_t>(b[1]) << 8 |
                       static_cast<std::size_t>(b[2]) << 16 | static_cast<std::size_t>(b[3]) << 24);
  }
  if (tag == 1) {
    Shape l = read_shape(is, depth + 1);
    Shape r = read_shape(is, depth + 1);
    return Shape::prod(l, r);
  }
  throw IoError("tensor dump has bad shape tag " + std::to_string(tag));
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  write_shape(os, t.shape());
  for (double x : t.data()) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

Tensor read_tensor(std::istream& is) {
  Shape s = read_shape(is, 0);
  std::vector<double> d(s.size());
  for (auto& x : d) {
    unsigned char b[8];
    read_exact(is, b, 8);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    x = std::bit_cast<double>(bits);
  }
  return Tensor(s, std::move(d));
}

void save_tensors(const std::string& path, const std::vector<Tensor>& ts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  for (const auto& t : ts) write_tensor(os, t);
  if (!os) throw IoError("write failed: " + path);
}

std::vector<Tensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<Tensor> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(is));
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) throw ShapeError("compare: " + a.shape().str() + " vs " + b.shape().str());
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

double max_rel_diff(const Tensor& a, const Tensor& b, double floor) {
  if (!(a.shape() == b.shape())) throw ShapeError("compare: " + a.shape().str() + " vs " + b.shape().str());
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double d = std::abs(a[k] - b[k]);
    double den = std::max({std::abs(a[k]), std::abs(b[k]), floor});
    m = std::max(m, d / den);
  }
  return m;
}

}  // namespace arrad
