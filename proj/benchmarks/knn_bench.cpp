#include <benchmark/benchmark.h>

#include "disp/knn_index.hpp"
#include "test_util.hpp"

namespace {

using namespace disp;

std::shared_ptr<const EmbeddingCorpus> corpus_of(std::size_t n) {
  return std::make_shared<const EmbeddingCorpus>(test::gaussian_corpus(n, 32, 7));
}

std::vector<std::vector<float>> queries(std::size_t n) {
  Rng rng(9);
  std::vector<std::vector<float>> q(n, std::vector<float>(32));
  for (auto& v : q) {
    for (auto& x : v) x = static_cast<float>(rng.normal());
  }
  return q;
}

void BM_HnswBuild(benchmark::State& state) {
  const auto corpus = corpus_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(HnswIndex::build(corpus, HnswParams{}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HnswBuild)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_HnswQuery(benchmark::State& state) {
  const auto index = HnswIndex::build(corpus_of(static_cast<std::size_t>(state.range(0))), HnswParams{});
  const auto q = queries(256);
  std::size_t i = 0;
  double evals = 0.0;
  for (auto _ : state) {
    const auto r = index.query(q[i++ % q.size()], 1, static_cast<std::size_t>(state.range(1)));
    evals += static_cast<double>(r.distance_evaluations);
    benchmark::DoNotOptimize(r);
  }
  state.counters["dist_evals"] = benchmark::Counter(evals, benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_HnswQuery)->Args({2000, 64})->Args({20000, 64})->Args({20000, 200});

void BM_BruteForce(benchmark::State& state) {
  const auto corpus = corpus_of(static_cast<std::size_t>(state.range(0)));
  const auto q = queries(256);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(brute_force_knn(*corpus, q[i++ % q.size()], 1));
}
BENCHMARK(BM_BruteForce)->Arg(2000)->Arg(20000);

}  // namespace
