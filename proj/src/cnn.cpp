#include "arrad/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "arrad/errors.hpp"
#include "arrad/optimizer.hpp"

namespace arrad {

namespace {

Shape L(std::size_t n) { return Shape::leaf(n); }
Shape P(const Shape& a, const Shape& b) { return Shape::prod(a, b); }

}  // namespace

Shape cnn_target_shape() { return P(L(10), P(L(1), P(L(1), P(L(1), L(1))))); }
Shape cnn_image_shape() { return P(L(28), L(28)); }

ChainCtx cnn_ctx() {
  return {
      {"target", cnn_target_shape()},
      {"inp", cnn_image_shape()},
      {"k₁", P(L(6), P(L(5), L(5)))},
      {"b₁", L(6)},
      {"k₂", P(L(12), P(L(6), P(L(5), L(5))))},
      {"b₂", L(12)},
      {"fc", P(L(10), P(L(12), P(L(1), P(L(4), L(4)))))},
      {"b", L(10)},
  };
}

Chain build_cnn_chain() {
  Chain c(cnn_ctx());
  auto at = [&](const std::string& n) { return c.ref(n, c.ctx_before(c.size())); };

  PlusFact sp1 = PlusFact::prod(PlusFact::leaf(5, 23), PlusFact::leaf(5, 23));
  SucFact su1 = SucFact::prod(SucFact::leaf(23), SucFact::leaf(23));
  c.add("c₁₁", e_mconv(sp1, at("inp"), at("k₁"), at("b₁"), su1));
  c.add("c₁", logistic(at("c₁₁")));
  c.add("s₁", Imap(c.ctx_before(c.size()), L(6), [&](const Expr& i) {
          return e_avgp2(12, 12, sel(c.ref("c₁", i.ctx()), i));
        }));

  PlusFact sp2 = PlusFact::prod(PlusFact::leaf(6, 0), PlusFact::prod(PlusFact::leaf(5, 7), PlusFact::leaf(5, 7)));
  SucFact su2 = SucFact::prod(SucFact::leaf(0), SucFact::prod(SucFact::leaf(7), SucFact::leaf(7)));
  c.add("c₂₁", e_mconv(sp2, at("s₁"), at("k₂"), at("b₂"), su2));
  c.add("c₂", logistic(at("c₂₁")));
  c.add("s₂", Imap(c.ctx_before(c.size()), L(12), [&](const Expr& i) {
          return Imap(i.ctx(), L(1), [&](const Expr& j) {
            return e_avgp2(4, 4, sel(sel(c.ref("c₂", j.ctx()), lift_to(i, j.ctx())), j));
          });
        }));

  PlusFact sp3 = PlusFact::prod(
      PlusFact::leaf(12, 0), PlusFact::prod(PlusFact::leaf(1, 0), PlusFact::prod(PlusFact::leaf(4, 0), PlusFact::leaf(4, 0))));
  SucFact su3 = SucFact::prod(SucFact::leaf(0), SucFact::prod(SucFact::leaf(0), SucFact::prod(SucFact::leaf(0), SucFact::leaf(0))));
  c.add("r₁", e_mconv(sp3, at("s₂"), at("fc"), at("b"), su3));
  c.add("r", logistic(at("r₁")));
  return c;
}

Expr cnn_seed(const Chain& c) {
  Ctx full = c.full_ctx();
  return plus(c.ref("r", full), minus(c.ref("target", full)));
}

double cnn_loss(const Tensor& r, const Tensor& target) {
  if (!(r.shape() == target.shape())) throw ShapeError("cnn_loss: prediction and target shapes differ");
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    double d = r[k] - target[k];
    s += d * d;
  }
  return 0.5 * s;
}

Tensor one_hot(std::size_t label) {
  if (label >= 10) throw BoundsError("label " + std::to_string(label) + " is not a digit");
  Tensor t = Tensor::konst(cnn_target_shape(), 0.0);
  t[label] = 1.0;
  return t;
}

std::size_t argmax(const Tensor& r) {
  return static_cast<std::size_t>(std::max_element(r.data().begin(), r.data().end()) - r.data().begin());
}

std::vector<Tensor> weights_list(const CnnWeights& w) { return {w.k1, w.b1, w.k2, w.b2, w.fc, w.b}; }

CnnWeights weights_from_list(const std::vector<Tensor>& ts) {
  if (ts.size() != kCnnWeightCount) throw KindMismatch("expected six weight tensors");
  auto ctx = cnn_ctx();
  for (std::size_t k = 0; k < kCnnWeightCount; ++k)
    if (!(ts[k].shape() == ctx[kCnnFirstWeightSlot + k].second))
      throw ShapeError("weight tensor " + std::to_string(k) + " has shape " + ts[k].shape().str());
  return {ts[0], ts[1], ts[2], ts[3], ts[4], ts[5]};
}

CnnWeights init_weights(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto ctx = cnn_ctx();
  auto uniform = [&](const Shape& s, double fanin) {
    double bound = 1.0 / std::sqrt(fanin);
    std::uniform_real_distribution<double> d(-bound, bound);
    std::vector<double> v(s.size());
    for (auto& x : v) x = d(rng);
    return Tensor(s, std::move(v));
  };
  CnnWeights w;
  w.k1 = uniform(ctx[2].second, 25);
  w.b1 = Tensor::konst(ctx[3].second, 0.0);
  w.k2 = uniform(ctx[4].second, 150);
  w.b2 = Tensor::konst(ctx[5].second, 0.0);
  w.fc = uniform(ctx[6].second, 192);
  w.b = Tensor::konst(ctx[7].second, 0.0);
  return w;
}

// ------------------------------------------------------------------ data

Dataset Dataset::slice(std::size_t from, std::size_t count) const {
  if (from + count > size()) throw BoundsError("dataset slice out of range");
  Dataset d;
  d.images.assign(images.begin() + static_cast<std::ptrdiff_t>(from), images.begin() + static_cast<std::ptrdiff_t>(from + count));
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(from), labels.begin() + static_cast<std::ptrdiff_t>(from + count));
  return d;
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::uint32_t be32(const std::string& b, std::size_t at, const std::string& path) {
  if (at + 4 > b.size()) throw IoError(path + ": truncated header");
  auto u = [&](std::size_t k) { return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + k])); };
  return (u(0) << 24) | (u(1) << 16) | (u(2) << 8) | u(3);
}

void put_be32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
  os.write(b, 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::string im = slurp(images_path);
  std::string lb = slurp(labels_path);
  if (be32(im, 0, images_path) != 0x00000803u) throw IoError(images_path + ": bad magic for an IDX image file");
  if (be32(lb, 0, labels_path) != 0x00000801u) throw IoError(labels_path + ": bad magic for an IDX label file");
  std::size_t n = be32(im, 4, images_path), rows = be32(im, 8, images_path), cols = be32(im, 12, images_path);
  std::size_t nl = be32(lb, 4, labels_path);
  if (rows != 28 || cols != 28) throw IoError(images_path + ": images must be 28x28");
  if (n != nl) throw IoError("image count " + std::to_string(n) + " does not match label count " + std::to_string(nl));
  if (im.size() < 16 + n * 784) throw IoError(images_path + ": truncated pixel data");
  if (lb.size() < 8 + n) throw IoError(labels_path + ": truncated label data");
  Dataset d;
  d.images.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> px(784);
    for (std::size_t p = 0; p < 784; ++p) px[p] = static_cast<unsigned char>(im[16 + k * 784 + p]) / 255.0;
    d.images.emplace_back(cnn_image_shape(), std::move(px));
    auto l = static_cast<unsigned char>(lb[8 + k]);
    if (l >= 10) throw IoError(labels_path + ": label " + std::to_string(l) + " is not a digit");
    d.labels.push_back(l);
  }
  return d;
}

void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& d) {
  if (d.images.size() != d.labels.size()) throw IoError("dataset has unequal image and label counts");
  std::ofstream im(images_path, std::ios::binary);
  std::ofstream lb(labels_path, std::ios::binary);
  if (!im || !lb) throw IoError("cannot write IDX files");
  put_be32(im, 0x00000803u);
  put_be32(im, static_cast<std::uint32_t>(d.size()));
  put_be32(im, 28);
  put_be32(im, 28);
  for (const auto& t : d.images) {
    if (!(t.shape() == cnn_image_shape())) throw ShapeError("IDX images must be 28x28");
    for (double x : t.data()) im.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0))));
  }
  put_be32(lb, 0x00000801u);
  put_be32(lb, static_cast<std::uint32_t>(d.size()));
  for (auto l : d.labels) lb.put(static_cast<char>(l));
  if (!im || !lb) throw IoError("failed writing IDX files");
}

namespace {

struct Seg {
  double x0, y0, x1, y1;
};

// Digit skeletons on the unit square (x right, y down).
const std::vector<Seg>& strokes(int d) {
  static const std::vector<Seg> table[10] = {
      {{.5, .15, .75, .3}, {.75, .3, .75, .7}, {.75, .7, .5, .85}, {.5, .85, .25, .7}, {.25, .7, .25, .3}, {.25, .3, .5, .15}},
      {{.5, .15, .5, .85}, {.38, .27, .5, .15}},
      {{.28, .28, .5, .15}, {.5, .15, .72, .28}, {.72, .28, .28, .85}, {.28, .85, .75, .85}},
      {{.28, .15, .72, .15}, {.72, .15, .45, .45}, {.45, .45, .72, .62}, {.72, .62, .5, .85}, {.5, .85, .28, .78}},
      {{.62, .85, .62, .15}, {.62, .15, .25, .6}, {.25, .6, .78, .6}},
      {{.72, .15, .3, .15}, {.3, .15, .28, .45}, {.28, .45, .7, .5}, {.7, .5, .62, .82}, {.62, .82, .28, .82}},
      {{.68, .15, .3, .55}, {.3, .55, .35, .85}, {.35, .85, .68, .8}, {.68, .8, .65, .55}, {.65, .55, .3, .55}},
      {{.25, .15, .75, .15}, {.75, .15, .42, .85}},
      {{.5, .15, .3, .3}, {.3, .3, .7, .65}, {.7, .65, .5, .85}, {.5, .85, .3, .65}, {.3, .65, .7, .3}, {.7, .3, .5, .15}},
      {{.7, .45, .35, .45}, {.35, .45, .32, .18}, {.32, .18, .68, .15}, {.68, .15, .7, .45}, {.7, .45, .65, .85}},
  };
  return table[d];
}

}  // namespace

Dataset synth_digits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  std::normal_distribution<double> noise(0.0, 0.05);
  Dataset d;
  std::vector<int> round(10);
  std::iota(round.begin(), round.end(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (k % 10 == 0) std::shuffle(round.begin(), round.end(), rng);
    int digit = round[k % 10];
    double angle = uni(-0.2, 0.2), scale = uni(0.9, 1.1), tx = uni(-0.08, 0.08), ty = uni(-0.08, 0.08);
    double width = uni(1.0, 1.5);
    double ca = std::cos(angle), sa = std::sin(angle);
    auto tr = [&](double x, double y, double& ox, double& oy) {
      x -= 0.5;
      y -= 0.5;
      ox = 28.0 * (0.5 + tx + scale * (ca * x - sa * y));
      oy = 28.0 * (0.5 + ty + scale * (sa * x + ca * y));
    };
    std::vector<double> img(784, 0.0);
    for (const Seg& s : strokes(digit)) {
      double px, py, qx, qy;
      tr(s.x0, s.y0, px, py);
      tr(s.x1, s.y1, qx, qy);
      double vx = qx - px, vy = qy - py;
      double len2 = std::max(vx * vx + vy * vy, 1e-9);
      for (std::size_t r = 0; r < 28; ++r) {
        for (std::size_t c = 0; c < 28; ++c) {
          double cx = static_cast<double>(c) + 0.5, cy = static_cast<double>(r) + 0.5;
          double t = std::clamp(((cx - px) * vx + (cy - py) * vy) / len2, 0.0, 1.0);
          double dist = std::hypot(cx - px - t * vx, cy - py - t * vy);
          double ink = std::clamp(width + 0.5 - dist, 0.0, 1.0);
          img[r * 28 + c] = std::max(img[r * 28 + c], ink);
        }
      }
    }
    for (auto& x : img) x = std::round(std::clamp(x + noise(rng), 0.0, 1.0) * 255.0) / 255.0;
    d.images.emplace_back(cnn_image_shape(), std::move(img));
    d.labels.push_back(static_cast<std::uint8_t>(digit));
  }
  return d;
}

// ------------------------------------------------------------- interpreter

struct CnnModel::Impl {
  Chain chain = build_cnn_chain();
  GradEnv grads = GradEnv::zero(Ctx(), Ctx());
  std::vector<Kernel> forward, backward, weights;
};

CnnModel::CnnModel(std::size_t opt_passes) : impl_(std::make_unique<Impl>()) {
  Chain& c = impl_->chain;
  impl_->grads = chain_grad(c, cnn_seed(c), opt_passes, opt_passes).env;
  for (const auto& b : c.bindings()) impl_->forward.emplace_back(optimize(b.body, opt_passes));
  for (std::size_t k = 0; k < c.size(); ++k) impl_->backward.emplace_back(*impl_->grads.slot(c.value_slot(k)));
  for (std::size_t k = 0; k < kCnnWeightCount; ++k) impl_->weights.emplace_back(*impl_->grads.slot(kCnnFirstWeightSlot + k));
}

CnnModel::~CnnModel() = default;
CnnModel::CnnModel(CnnModel&&) noexcept = default;

const Chain& CnnModel::chain() const { return impl_->chain; }
const GradEnv& CnnModel::grads() const { return impl_->grads; }

CnnModel::Result CnnModel::run(const Tensor& target, const Tensor& inp, const CnnWeights& w, bool with_grads) const {
  const Chain& c = impl_->chain;
  ValueEnv env(c.base_ctx(), {target, inp, w.k1, w.b1, w.k2, w.b2, w.fc, w.b});
  for (std::size_t k = 0; k < c.size(); ++k) {
    Tensor t = impl_->forward[k].run(env, false);
    Kind kd = Kind::ar(t.shape());
    env.push(kd, Tensor::konst(kd.shape, 0.0));
    env.push(kd, std::move(t));
  }
  Result res;
  res.r = std::get<Tensor>(env.lookup(0));
  res.loss = cnn_loss(res.r, target);
  if (!with_grads) return res;
  for (std::size_t k = c.size(); k-- > 0;) env.set_slot(c.placeholder_slot(k), impl_->backward[k].run(env, false));
  for (const auto& kern : impl_->weights) res.grads.push_back(kern.run(env, false));
  return res;
}

double evaluate_accuracy(const CnnModel& m, const CnnWeights& w, const Dataset& d) {
  if (d.size() == 0) return 0.0;
  std::vector<int> hit(d.size(), 0);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t k = 0; k < d.size(); ++k) {
    try {
      hit[k] = argmax(m.run(one_hot(d.labels[k]), d.images[k], w, false).r) == d.labels[k];
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / static_cast<double>(d.size());
}

std::string format_report_line(const EpochStats& e) {
  std::ostringstream os;
  os << "epoch " << e.epoch << " loss " << std::fixed << std::setprecision(6) << e.loss << " acc " << std::setprecision(4) << e.acc;
  return os.str();
}

namespace {

void check_config(const CnnConfig& cfg, const Dataset& train_set) {
  if (cfg.batch == 0 || cfg.train_images % cfg.batch != 0) throw Error("batch size must divide the number of training images");
  if (!(cfg.lr >= 0.0)) throw Error("learning rate must be non-negative");
  if (train_set.size() < cfg.train_images) throw Error("training set has fewer images than requested");
}

TrainingReport train_interpreter(const CnnConfig& cfg, const Dataset& train_set, const Dataset& test_set, std::ostream* log) {
  CnnModel model(cfg.opt_passes);
  CnnWeights w = init_weights(cfg.seed);
  TrainingReport rep;
  const std::size_t B = cfg.batch;
  for (std::size_t ep = 1; ep <= cfg.epochs; ++ep) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < cfg.train_images; start += B) {
      std::vector<CnnModel::Result> res(B);
      std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t b = 0; b < B; ++b) {
        try {
          res[b] = model.run(one_hot(train_set.labels[start + b]), train_set.images[start + b], w, true);
        } catch (...) {
#pragma omp critical
          err = std::current_exception();
        }
      }
      if (err) std::rethrow_exception(err);
      // Reduction in image order keeps the run deterministic.
      std::vector<Tensor> avg = res[0].grads;
      for (auto& g : avg) std::fill(g.data().begin(), g.data().end(), 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        loss_sum += res[b].loss;
        correct += argmax(res[b].r) == train_set.labels[start + b];
        for (std::size_t k = 0; k < avg.size(); ++k)
          for (std::size_t e = 0; e < avg[k].size(); ++e) avg[k][e] += res[b].grads[k][e];
      }
      for (auto& g : avg)
        for (auto& x : g.data()) x /= static_cast<double>(B);
      if (ep == 1 && start == 0) rep.first_batch_grads = avg;
      std::vector<Tensor> ws = weights_list(w);
      for (std::size_t k = 0; k < ws.size(); ++k)
        for (std::size_t e = 0; e < ws[k].size(); ++e) ws[k][e] -= cfg.lr * avg[k][e];
      w = weights_from_list(ws);
    }
    EpochStats st{ep, loss_sum / static_cast<double>(cfg.train_images),
                  static_cast<double>(correct) / static_cast<double>(cfg.train_images)};
    rep.epochs.push_back(st);
    if (log) *log << format_report_line(st) << std::endl;
  }
  rep.test_acc = evaluate_accuracy(model, w, test_set);
  rep.final_weights = w;
  return rep;
}

}  // namespace

TrainingReport train_generated_c(const CnnConfig& cfg, const Dataset& train_set, const Dataset& test_set, std::ostream* log);

TrainingReport train(const CnnConfig& cfg, const Dataset& train_set, const Dataset& test_set, std::ostream* log) {
  check_config(cfg, train_set);
  if (cfg.backend == Backend::Interpreter) return train_interpreter(cfg, train_set, test_set, log);
  return train_generated_c(cfg, train_set, test_set, log);
}

}  // namespace arrad
