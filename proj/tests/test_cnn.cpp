#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "arrad/cnn.hpp"
#include "arrad/errors.hpp"
#include "arrad/gradcheck.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace arrad;
using namespace arrad::testing;

TEST_CASE("every CNN binding has its declared shape") {
  CheckResult r = check_cnn_shapes();
  INFO(r.first_failure);
  CHECK(r.checks >= 16);
  CHECK(r.ok());
  Chain c = build_cnn_chain();
  CHECK(c.size() == 8);
  CHECK(c.unused_bindings().empty());
}

TEST_CASE("the chain forward pass equals the plain-tensor reference") {
  CnnModel m;
  Dataset d = synth_digits(4, 3);
  CnnWeights w = init_weights(3);
  for (std::size_t k = 0; k < d.size(); ++k) {
    auto res = m.run(one_hot(d.labels[k]), d.images[k], w, false);
    Tensor ref = forward_reference(d.images[k], w);
    CHECK(max_abs_diff(res.r, ref) <= 1e-12);
    CHECK(res.loss == doctest::Approx(cnn_loss(ref, one_hot(d.labels[k]))).epsilon(1e-12));
    CHECK(res.grads.empty());
  }
}

TEST_CASE("CNN gradients agree with finite differences") {
  auto coords = gradcheck_cnn(1, 5);
  REQUIRE(coords.size() == 5);
  for (const auto& c : coords) {
    INFO(c.weight << "[" << c.offset << "] ad " << c.ad << " fd " << c.fd);
    CHECK(c.pass);
  }
}

TEST_CASE("loss, one-hot and argmax") {
  Tensor t = one_hot(3);
  CHECK(t.shape() == cnn_target_shape());
  CHECK(argmax(t) == 3);
  CHECK(cnn_loss(t, t) == 0.0);
  CHECK(cnn_loss(Tensor::konst(cnn_target_shape(), 0.0), t) == 0.5);
  CHECK_THROWS_AS(one_hot(10), BoundsError);
}

TEST_CASE("weights initialize deterministically with zero biases") {
  CnnWeights a = init_weights(9), b = init_weights(9), c = init_weights(10);
  CHECK(a.k1 == b.k1);
  CHECK_FALSE(a.k1 == c.k1);
  CHECK(reduce_sum(a.b1) == 0.0);
  CHECK(weights_from_list(weights_list(a)).fc == a.fc);
  CHECK_THROWS(weights_from_list({a.k1}));
}

TEST_CASE("IDX files round-trip and malformed files are rejected") {
  auto dir = scratch_dir("idx");
  std::string im = (dir / "im").string(), lb = (dir / "lb").string();
  Dataset d = synth_digits(12, 5);
  write_idx(im, lb, d);
  Dataset back = load_idx(im, lb);
  REQUIRE(back.size() == 12);
  CHECK(back.labels == d.labels);
  for (std::size_t k = 0; k < 12; ++k) CHECK(back.images[k] == d.images[k]);
  CHECK_THROWS_AS(load_idx(im, (dir / "missing").string()), IoError);
  CHECK_THROWS_AS(load_idx(lb, lb), IoError);  // label file has the wrong magic for images
  {
    std::ifstream in(im, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(im, std::ios::binary | std::ios::trunc);
    out << bytes.substr(0, bytes.size() - 10);
  }
  CHECK_THROWS_AS(load_idx(im, lb), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic digits are deterministic and balanced") {
  Dataset a = synth_digits(40, 42), b = synth_digits(40, 42);
  CHECK(a.labels == b.labels);
  CHECK(a.images[7] == b.images[7]);
  std::vector<int> counts(10, 0);
  for (auto l : a.labels) ++counts[l];
  for (int c : counts) CHECK(c == 4);
}

TEST_CASE("training validates its configuration and a zero rate leaves the loss unchanged") {
  Dataset d = synth_digits(30, 11);
  CnnConfig cfg;
  cfg.train_images = 20;
  cfg.batch = 7;
  CHECK_THROWS_AS(train(cfg, d.slice(0, 20), d.slice(20, 10)), Error);
  cfg.batch = 10;
  cfg.lr = -1;
  CHECK_THROWS_AS(train(cfg, d.slice(0, 20), d.slice(20, 10)), Error);
  cfg.lr = 0;
  cfg.epochs = 2;
  TrainingReport r = train(cfg, d.slice(0, 20), d.slice(20, 10));
  REQUIRE(r.epochs.size() == 2);
  CHECK(r.epochs[0].loss == r.epochs[1].loss);
  CHECK(r.final_weights.k1 == init_weights(cfg.seed).k1);
}

TEST_CASE("the generated-C backend trains like the interpreter") {
  if (test_cc().empty()) {
    MESSAGE("no C compiler; skipping");
    return;
  }
  Dataset d = synth_digits(40, 12);
  CnnConfig cfg;
  cfg.train_images = 30;
  cfg.batch = 10;
  cfg.epochs = 2;
  cfg.lr = 0.5;
  TrainingReport ri = train(cfg, d.slice(0, 30), d.slice(30, 10));
  cfg.backend = Backend::GeneratedC;
  cfg.cc = test_cc();
  cfg.work_dir = scratch_dir("train").string();
  TrainingReport rc = train(cfg, d.slice(0, 30), d.slice(30, 10));
  REQUIRE(rc.epochs.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) CHECK(rc.epochs[e].loss == doctest::Approx(ri.epochs[e].loss).epsilon(1e-4));
  REQUIRE(rc.first_batch_grads.size() == kCnnWeightCount);
  for (std::size_t k = 0; k < kCnnWeightCount; ++k)
    CHECK(max_rel_diff(rc.first_batch_grads[k], ri.first_batch_grads[k], 1e-6) <= 1e-3);
  std::filesystem::remove_all(cfg.work_dir);
}
