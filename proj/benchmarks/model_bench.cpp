#include <benchmark/benchmark.h>

#include "disp/attack.hpp"
#include "disp/encoder.hpp"
#include "disp/eval.hpp"

namespace {

using namespace disp;

EncoderConfig config(std::size_t d) {
  EncoderConfig c;
  c.vocab_size = 2000;
  c.d = d;
  c.num_heads = 4;
  c.num_layers = 1;
  c.max_seq_len = 32;
  return c;
}

std::vector<int> ids(std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(3 + (i * 37) % 1997);
  return out;
}

void BM_EncoderForward(benchmark::State& state) {
  const Encoder enc(config(static_cast<std::size_t>(state.range(0))));
  const auto x = ids(static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(x));
}
BENCHMARK(BM_EncoderForward)->Args({32, 16})->Args({32, 32})->Args({64, 32});

void BM_EncoderBackward(benchmark::State& state) {
  Encoder enc(config(static_cast<std::size_t>(state.range(0))));
  const auto x = ids(32);
  const Matrix<float> target(x.size(), enc.config().d);
  for (auto _ : state) {
    Graph<float> g(true);
    const Var h = enc.forward(g, x, {}, nullptr);
    g.backward(ops::mean_squared_error(g, h, target));
  }
}
BENCHMARK(BM_EncoderBackward)->Arg(32)->Arg(64);

void BM_PerturbDocument(benchmark::State& state) {
  SyntheticTaskSpec spec;
  spec.train_docs = 10;
  spec.test_docs = 10;
  const auto task = generate_synthetic_task(spec);
  const auto kind = static_cast<AttackKind>(state.range(0));
  const auto& doc = task.test.documents.front();
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(perturb_document(doc, kind, 1, *task.corpus, rng));
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_PerturbDocument)->DenseRange(0, 4);

}  // namespace

BENCHMARK_MAIN();
