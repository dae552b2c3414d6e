#include <benchmark/benchmark.h>

#include <random>

#include "deckshift/archetype.hpp"
#include "deckshift/fusion.hpp"
#include "deckshift/kmeans.hpp"
#include "fixtures.hpp"

using namespace deckshift;

namespace {

const Population& population() {
  static const Population pop = fixture::small_population(40, 2, 80, 80);
  return pop;
}

std::vector<Window> windows(std::size_t n) {
  const auto seqs = fixture::true_sequences(population());
  std::vector<Window> out;
  for (std::size_t i = 0; out.size() < n; ++i) out.push_back(make_window(seqs[i % seqs.size()], i % 60));
  return out;
}

void BM_EncoderForward(benchmark::State& s) {
  EncoderConfig c;
  c.vocab = population().catalog.size();
  const Encoder enc(init_encoder(c, 1));
  const auto ws = windows(64);
  const Eigen::VectorXd prior = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.d_z));
  std::size_t i = 0;
  for (auto _ : s) benchmark::DoNotOptimize(enc.encode(ws[i++ % ws.size()], prior));
  s.SetItemsProcessed(s.iterations());
}
BENCHMARK(BM_EncoderForward);

void BM_EncoderLossAndGradient(benchmark::State& s) {
  EncoderConfig c;
  c.vocab = population().catalog.size();
  const Encoder enc(init_encoder(c, 1));
  const auto ws = windows(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) {
    auto grad = enc.params().zeros_like();
    benchmark::DoNotOptimize(enc.loss(ws, &grad));
  }
  s.SetItemsProcessed(s.iterations() * s.range(0));
}
BENCHMARK(BM_EncoderLossAndGradient)->Arg(16)->Arg(64);

void BM_KMeans(benchmark::State& s) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  const auto n = s.range(0);
  Eigen::MatrixXd pts(n, 24);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < 24; ++j) pts(i, j) = nd(rng) + 4.0 * static_cast<double>((i % 13) == j);
  KMeansOptions o;
  o.restarts = 1;
  for (auto _ : s) benchmark::DoNotOptimize(kmeans(pts, o));
  s.SetItemsProcessed(s.iterations() * n);
}
BENCHMARK(BM_KMeans)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_Recommend(benchmark::State& s) {
  const auto f = fixture::event_fixture(60, 8);
  const auto counts = TransitionCounts::build(f.events);
  std::vector<double> qv(kNumStates, 0.05);
  for (int t = 0; t < kNumStates; ++t) qv[static_cast<std::size_t>(t)] += 0.01 * t;
  const auto q = fixture::lookup_quality(qv);
  const auto gate = fixture::constant_gate(1.0);
  const Recommender rec(gate, q, counts, std::make_shared<FrequencyScorer>(counts), {});
  std::vector<DecisionContext> ctx;
  for (int s0 = 0; s0 < kNumStates; ++s0) ctx.push_back(fixture::context(2, s0));
  std::size_t i = 0;
  for (auto _ : s) benchmark::DoNotOptimize(rec.recommend(ctx[i++ % ctx.size()]));
  s.SetItemsProcessed(s.iterations());
}
BENCHMARK(BM_Recommend);

}  // namespace

BENCHMARK_MAIN();
