#pragma once

// Dense f64 arrays over tree shapes and the array combinators the CNN is
// written in (slide, backslide, block, conv, average pooling).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "arrad/shape.hpp"

namespace arrad {

class Tensor {
 public:
  Tensor() : shape_(Shape::unit()), data_(1, 0.0) {}
  Tensor(Shape s, std::vector<double> data);

  static Tensor konst(const Shape& s, double v);
  static Tensor generate(const Shape& s, const std::function<double(const Pos&)>& f);
  static Tensor iota(const Shape& s);  // element = its offset

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  double operator[](std::size_t off) const { return data_[off]; }
  double& operator[](std::size_t off) { return data_[off]; }
  double at(const Pos& i) const;
  double& at(const Pos& i);

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor map(const Tensor& a, const std::function<double(double)>& f);
Tensor zip_with(const Tensor& a, const Tensor& b, const std::function<double(double, double)>& f);

// nest/unnest between Ar (s⊗p) and Ar s (Ar p).
Tensor select_outer(const Tensor& a, const Pos& i);
Tensor unnest(const Shape& s, const Shape& p, const std::function<Tensor(const Pos&)>& f);

// Right fold of + starting from 0, recursing over the shape tree.
double reduce_sum(const Tensor& a);
// The same fold over an arbitrary index function.
double fold_sum(const Shape& s, const std::function<double(const Pos&)>& f);

Tensor reshape(const Reshape& r, const Tensor& a);

// slide i a : Ar u, reading a at i ⊕ j.
Tensor slide(const Pos& i, const PlusFact& sp, const Tensor& a, const SucFact& su);
// backslide i y def : Ar r, y(j ⊝ i) where defined, def elsewhere.
Tensor backslide(const Pos& i, const Tensor& y, const SucFact& su, double def, const PlusFact& sp);

// block : Ar q -> Ar (s⊗p), element (i,j) = a(i*p + j) leafwise.
Tensor block(const TimesFact& m, const Tensor& a);
Tensor unblock(const TimesFact& m, const Tensor& a);

// Cross-correlation with weights w : Ar s over a : Ar r, result Ar u.
Tensor conv(const Tensor& a, const PlusFact& sp, const Tensor& w, const SucFact& su);
// Multi-filter conv: w : Ar (v⊗s), b : Ar v, result Ar (v⊗u).
Tensor mconv(const PlusFact& sp, const Tensor& inp, const Tensor& w, const Tensor& b, const SucFact& su);
// 2x2 average pooling: Ar (ι(m*2)⊗ι(n*2)) -> Ar (ι m⊗ι n).
Tensor avgp2(std::size_t m, std::size_t n, const Tensor& a);
Tensor logistic(const Tensor& a);

struct CnnWeights {
  Tensor k1, b1, k2, b2, fc, b;
};

// Plain-tensor CNN forward pass; returns r : 10⊗(1⊗(1⊗(1⊗1))).
Tensor forward_reference(const Tensor& inp, const CnnWeights& w);

// Binary dump: preorder shape tree (tag 0 + u32 extent for a leaf, tag 1 for
// a product), then the payload as little-endian f64 in offset order.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensors(const std::string& path, const std::vector<Tensor>& ts);
std::vector<Tensor> load_tensors(const std::string& path);

double max_abs_diff(const Tensor& a, const Tensor& b);
// max |a-b| / max(|a|, |b|, floor) over elements
double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-30);

}  // namespace arrad
