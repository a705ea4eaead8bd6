#pragma once

// The two-layer convolutional digit classifier as a Chain, its data
// plumbing (IDX files, a synthetic digit generator) and SGD training on
// either the interpreter or generated C.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "arrad/chain.hpp"
#include "arrad/eval.hpp"
#include "arrad/tensor.hpp"

namespace arrad {

// Base slots: target, inp, k₁, b₁, k₂, b₂, fc, b.
ChainCtx cnn_ctx();
// Bindings c₁₁, c₁, s₁, c₂₁, c₂, s₂, r₁, r.
Chain build_cnn_chain();

// Trainable base slots of the chain (k₁ .. b), oldest first.
constexpr std::size_t kCnnFirstWeightSlot = 2;
constexpr std::size_t kCnnWeightCount = 6;

Shape cnn_target_shape();
Shape cnn_image_shape();

// r ⊞ minus(target) in the chain's full context: the gradient of
// ½‖r − target‖² with respect to r.
Expr cnn_seed(const Chain& c);
double cnn_loss(const Tensor& r, const Tensor& target);
Tensor one_hot(std::size_t label);
std::size_t argmax(const Tensor& r);

std::vector<Tensor> weights_list(const CnnWeights& w);
CnnWeights weights_from_list(const std::vector<Tensor>& ts);

// Uniform in ±1/√fanin per kernel, biases zero; deterministic per seed.
CnnWeights init_weights(std::uint64_t seed);

struct Dataset {
  std::vector<Tensor> images;  // 28⊗28, pixels in [0,1]
  std::vector<std::uint8_t> labels;
  std::size_t size() const { return images.size(); }
  Dataset slice(std::size_t from, std::size_t count) const;
};

Dataset load_idx(const std::string& images_path, const std::string& labels_path);
// Pixels are stored as round(255·x).
void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& d);

// Stroke-rendered digits with random rotation, scale, shift, thickness and
// pixel noise; labels cycle through shuffled rounds of 0..9. Pixels are
// quantized to multiples of 1/255 so an IDX round trip is lossless.
Dataset synth_digits(std::size_t n, std::uint64_t seed);

// Interpreter for one image: compiled kernels for every forward body and
// every adjoint assignment. Safe to share across threads.
class CnnModel {
 public:
  explicit CnnModel(std::size_t opt_passes = 10);
  ~CnnModel();
  CnnModel(CnnModel&&) noexcept;

  const Chain& chain() const;
  const GradEnv& grads() const;

  struct Result {
    Tensor r;
    double loss = 0.0;
    std::vector<Tensor> grads;  // per trainable weight; empty if not requested
  };
  Result run(const Tensor& target, const Tensor& inp, const CnnWeights& w, bool with_grads) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

enum class Backend { Interpreter, GeneratedC };

struct CnnConfig {
  std::size_t epochs = 10;
  std::size_t batch = 100;
  std::size_t train_images = 1000;
  double lr = 0.05;
  std::uint64_t seed = 42;
  Backend backend = Backend::Interpreter;
  std::string cc = "cc";         // C compiler for the generated backend
  std::string work_dir;          // scratch directory for the generated backend
  std::size_t opt_passes = 10;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean per-image loss over the epoch
  double acc = 0.0;   // training accuracy over the epoch
};

struct TrainingReport {
  std::vector<EpochStats> epochs;
  double test_acc = 0.0;
  std::vector<Tensor> first_batch_grads;  // averaged, per trainable weight
  CnnWeights final_weights;
};

std::string format_report_line(const EpochStats& e);

// Validates the config (batch divides train_images, lr ≥ 0) and trains.
// `log` receives one report line per epoch as it completes.
TrainingReport train(const CnnConfig& cfg, const Dataset& train_set, const Dataset& test_set, std::ostream* log = nullptr);

// Accuracy of the given weights on a dataset (interpreter).
double evaluate_accuracy(const CnnModel& m, const CnnWeights& w, const Dataset& d);

}  // namespace arrad
