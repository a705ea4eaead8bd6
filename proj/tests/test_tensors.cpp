#include "doctest.h"

#include <sstream>

#include "arrad/errors.hpp"
#include "arrad/tensor.hpp"
#include "properties.hpp"

using namespace arrad;
using namespace arrad::testing;

TEST_CASE("construction and element access") {
  Shape s = Shape::of({2, 3});
  Tensor t = Tensor::iota(s);
  CHECK(t.size() == 6);
  CHECK(t.at(Pos::from_leaves(s, {1, 2})) == 5.0);
  CHECK_THROWS_AS(Tensor(s, std::vector<double>(5, 0.0)), ShapeError);
  CHECK(reduce_sum(t) == 15.0);
  Tensor row = select_outer(t, Pos::leaf(1, 2));
  CHECK(row.shape() == Shape::leaf(3));
  CHECK(row[0] == 3.0);
}

TEST_CASE("slide reads a window and backslide scatters into zeros") {
  PlusFact sp = PlusFact::leaf(3, 2);  // 3 + 2 = 5
  SucFact su = SucFact::infer(sp.p);   // window of 3
  Tensor x = Tensor::iota(Shape::leaf(5));
  Tensor w = slide(Pos::leaf(2, 3), sp, x, su);
  CHECK(w.data() == std::vector<double>{2, 3, 4});
  Tensor y = Tensor(Shape::leaf(3), {1, 2, 3});
  Tensor b = backslide(Pos::leaf(1, 3), y, su, 0.0, sp);
  CHECK(b.data() == std::vector<double>{0, 1, 2, 3, 0});
  Tensor d = backslide(Pos::leaf(0, 3), y, su, -1.0, sp);
  CHECK(d.data() == std::vector<double>{1, 2, 3, -1, -1});
}

TEST_CASE("slide and backslide are adjoint") {
  CheckResult r = check_slide_adjoint(4, 7);
  INFO(r.first_failure);
  CHECK(r.ok());
  CHECK(r.worst <= 1e-12);
}

TEST_CASE("block and unblock are inverse") {
  TimesFact m = TimesFact::infer(Shape::of({2, 3}), Shape::of({2, 2}));
  Tensor a = Tensor::iota(m.q);
  Tensor b = block(m, a);
  CHECK(b.shape() == Shape::prod(m.s, m.p));
  CHECK(unblock(m, b) == a);
  // Element ((i,j),(k,l)) of the blocked array is a(i*2+k, j*2+l).
  Pos i = Pos::prod(Pos::from_leaves(m.s, {1, 2}), Pos::from_leaves(m.p, {1, 0}));
  CHECK(b.at(i) == a.at(Pos::from_leaves(m.q, {3, 4})));
}

TEST_CASE("conv equals direct cross-correlation") {
  PlusFact sp = PlusFact::infer(Shape::of({3, 3}), Shape::of({2, 2}));
  SucFact su = SucFact::infer(sp.p);
  Tensor a = Tensor::generate(sp.r, [](const Pos& p) { return 0.1 * p.offset() - 1.0; });
  Tensor w = Tensor::generate(sp.s, [](const Pos& p) { return 0.5 - 0.2 * p.offset(); });
  Tensor c = conv(a, sp, w, su);
  REQUIRE(c.shape() == Shape::of({3, 3}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t l = 0; l < 3; ++l) acc += a[(i + k) * 5 + (j + l)] * w[k * 3 + l];
      CHECK(c[i * 3 + j] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("mconv adds the bias per filter") {
  PlusFact sp = PlusFact::infer(Shape::of({2, 2}), Shape::of({1, 1}));
  SucFact su = SucFact::infer(sp.p);
  Tensor inp = Tensor::konst(sp.r, 1.0);
  Tensor w = Tensor::konst(Shape::prod(Shape::leaf(2), sp.s), 0.5);
  Tensor b(Shape::leaf(2), {1.0, -1.0});
  Tensor r = mconv(sp, inp, w, b, su);
  REQUIRE(r.shape() == Shape::prod(Shape::leaf(2), su.u));
  CHECK(r[0] == 3.0);
  CHECK(r[4] == 1.0);
}

TEST_CASE("avgp2 averages 2x2 blocks") {
  Tensor a = Tensor::iota(Shape::of({4, 4}));
  Tensor p = avgp2(2, 2, a);
  CHECK(p.shape() == Shape::of({2, 2}));
  CHECK(p.data() == std::vector<double>{2.5, 4.5, 10.5, 12.5});
  CHECK_THROWS_AS(avgp2(2, 2, Tensor::iota(Shape::of({4, 5}))), ShapeError);
}

TEST_CASE("reshape by a relabelling moves elements") {
  Shape s = Shape::of({2, 3});
  Tensor a = Tensor::iota(s);
  Tensor t = reshape(Reshape::swap(Shape::leaf(2), Shape::leaf(3)), a);
  CHECK(t.shape() == Shape::of({3, 2}));
  CHECK(t.data() == std::vector<double>{0, 3, 1, 4, 2, 5});
}

TEST_CASE("tensor dumps round-trip and reject truncation") {
  Tensor a = Tensor::generate(Shape::prod(Shape::of({2, 3}), Shape::leaf(2)), [](const Pos& p) { return p.offset() * 0.25; });
  std::stringstream ss;
  write_tensor(ss, a);
  write_tensor(ss, Tensor::konst(Shape::unit(), -3.5));
  CHECK(read_tensor(ss) == a);
  CHECK(read_tensor(ss)[0] == -3.5);
  std::string bytes;
  {
    std::stringstream full;
    write_tensor(full, a);
    bytes = full.str();
  }
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensor(cut), IoError);
}
