#include "doctest.h"

#include <cmath>

#include "arrad/chain.hpp"
#include "arrad/errors.hpp"
#include "support.hpp"

using namespace arrad;
using namespace arrad::testing;

TEST_CASE("names are mangled into C identifiers") {
  CHECK(mangle_name("c₁₁") == "c_11");
  CHECK(mangle_name("k₂") == "k_2");
  CHECK(mangle_name("x") == "x");
  CHECK_THROWS_AS(mangle_name("1x"), ChainError);
  CHECK_THROWS_AS(mangle_name("a b"), ChainError);
}

TEST_CASE("slot layout interleaves placeholders and values") {
  Chain c = xy_chain();
  CHECK(c.full_ctx().size() == 6);
  CHECK(c.placeholder_slot(0) == 2);
  CHECK(c.value_slot(1) == 5);
  CHECK(c.is_placeholder_slot(4));
  CHECK_FALSE(c.is_placeholder_slot(5));
  CHECK(c.names() == std::vector<std::string>{"a", "b", "ddx", "x", "ddy", "y"});
  CHECK(c.slot_of("y") == 5);
  CHECK(c.unused_bindings().empty());
}

TEST_CASE("bindings are validated") {
  Chain c = xy_chain();
  Ctx cx = c.ctx_before(2);
  CHECK_THROWS_AS(c.add("x", c.ref("y", cx)), ChainError);
  CHECK_THROWS_AS(c.add("a", c.ref("y", cx)), ChainError);
  CHECK_THROWS_AS(c.add("z", var(cx, 1)), ChainError);  // mentions the placeholder ddy
  CHECK_THROWS(c.add("z", c.ref("y", c.ctx_before(1).extend(Kind::ar(Shape::leaf(5))))));
  CHECK_THROWS_AS(Chain({{"a", Shape::leaf(2)}, {"a", Shape::leaf(2)}}), ChainError);
}

TEST_CASE("unused bindings are reported") {
  Chain c({{"a", Shape::leaf(2)}});
  c.add("u", minus(c.ref("a", c.ctx_before(0))));
  c.add("v", logistic(c.ref("a", c.ctx_before(1))));
  CHECK(c.unused_bindings() == std::vector<std::string>{"u"});
}

TEST_CASE("the x/y chain emits the expected assignment listing") {
  Chain c = xy_chain();
  ChainGrad g = chain_grad(c, xy_seed(c));
  CHECK(topologically_ordered(c, g.env));
  CHECK(chain_listing(c, g.env) ==
        "x = (a) * (b);\n"
        "y = (x) * (x);\n"
        "ddy = one;\n"
        "ddx = ((ddy) * (x)) + ((ddy) * (x));\n"
        "ddb = (ddx) * (a);\n"
        "dda = (ddx) * (b);\n");
}

TEST_CASE("the x/y chain yields 2ab² and 2a²b") {
  Chain c = xy_chain();
  ChainGrad g = chain_grad(c, xy_seed(c));
  ValueEnv in = random_inputs(c.base_ctx(), 17);
  std::vector<Tensor> out = interp_chain(c, g.env, in);
  REQUIRE(out.size() == 3);
  const Tensor& a = std::get<Tensor>(in.slot(0));
  const Tensor& b = std::get<Tensor>(in.slot(1));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(out[0][i] - a[i] * a[i] * b[i] * b[i]) <= 1e-12);
    CHECK(std::abs(out[1][i] - 2 * a[i] * b[i] * b[i]) <= 1e-12);
    CHECK(std::abs(out[2][i] - 2 * a[i] * a[i] * b[i]) <= 1e-12);
  }
}

TEST_CASE("chain text round-trips") {
  Chain c = xy_chain();
  std::string text = chain_dump(c);
  Chain back = parse_chain(text);
  CHECK(chain_dump(back) == text);
  CHECK(back.size() == 2);
  CHECK(back.bindings()[1].body == c.bindings()[1].body);
  CHECK_THROWS_AS(parse_chain("input a 5\nbind x (var 3)\n"), Error);
  CHECK_THROWS_AS(parse_chain("frob a 5\n"), Error);
}
