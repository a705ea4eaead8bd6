// OpenMP kernel versus the serial paths on the CNN's first convolution
// (6 filters of 5x5 over a 28x28 image) and on its weight adjoint.

#include <benchmark/benchmark.h>

#include "arrad/chain.hpp"
#include "arrad/cnn.hpp"
#include "arrad/eval.hpp"
#include "arrad/optimizer.hpp"

using namespace arrad;

namespace {

struct Fixture {
  Chain chain = build_cnn_chain();
  ValueEnv inputs;
  ValueEnv forward;
  Expr conv;     // c₁₁, optimized
  Expr adjoint;  // adjoint of k₁, optimized

  Fixture() {
    Dataset d = synth_digits(1, 1);
    std::vector<Value> vals{one_hot(d.labels[0]), d.images[0]};
    for (const Tensor& t : weights_list(init_weights(1))) vals.emplace_back(t);
    inputs = ValueEnv(chain.base_ctx(), std::move(vals));
    conv = optimize(chain.bindings()[0].body, 10);
    ChainGrad g = chain_grad(chain, cnn_seed(chain));
    adjoint = *g.env.slot(kCnnFirstWeightSlot);
    forward = chain_eval_forward(chain, inputs);
    // Placeholders of the backward sweep, filled as the interpreter would.
    std::vector<Tensor> grads = chain_eval_grads(chain, g.env, forward);
    for (std::size_t k = 0; k < chain.size(); ++k) forward.set_slot(chain.placeholder_slot(k), grads[chain.value_slot(k)]);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_ConvKernelParallel(benchmark::State& st) {
  const Fixture& f = fixture();
  Kernel k(f.conv);
  for (auto _ : st) benchmark::DoNotOptimize(k.run(f.inputs, true));
}

void BM_ConvKernelSerial(benchmark::State& st) {
  const Fixture& f = fixture();
  Kernel k(f.conv);
  for (auto _ : st) benchmark::DoNotOptimize(k.run(f.inputs, false));
}

void BM_ConvStrict(benchmark::State& st) {
  const Fixture& f = fixture();
  ValueEnv env = f.inputs;
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_array(f.conv, env));
}

void BM_AdjointKernelParallel(benchmark::State& st) {
  const Fixture& f = fixture();
  Kernel k(f.adjoint);
  for (auto _ : st) benchmark::DoNotOptimize(k.run(f.forward, true));
}

void BM_AdjointKernelSerial(benchmark::State& st) {
  const Fixture& f = fixture();
  Kernel k(f.adjoint);
  for (auto _ : st) benchmark::DoNotOptimize(k.run(f.forward, false));
}

void BM_AdjointStrict(benchmark::State& st) {
  const Fixture& f = fixture();
  ValueEnv env = f.forward;
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_array(f.adjoint, env));
}

}  // namespace

BENCHMARK(BM_ConvKernelParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvKernelSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvStrict)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AdjointKernelParallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AdjointKernelSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AdjointStrict)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
