#include <benchmark/benchmark.h>

#include <random>

#include "trident/baselines.hpp"
#include "trident/decoding.hpp"
#include "trident/evaluation.hpp"
#include "trident/training.hpp"

using namespace trident;
using model::Direction;

namespace {

model::ModelConfig bench_config(int d_model) {
  model::ModelConfig c;
  c.vocab_size = 100;
  c.d_model = d_model;
  c.heads = 4;
  c.d_ff = 2 * d_model;
  c.layers = 1;
  c.max_len = 32;
  return c;
}

std::vector<int> random_ids(std::mt19937& g, int n) {
  std::uniform_int_distribution<int> w(4, 99);
  std::vector<int> out(n);
  for (auto& x : out) x = w(g);
  return out;
}

std::vector<train::IdPair> random_batch(int size) {
  std::mt19937 g(1);
  std::vector<train::IdPair> b;
  for (int i = 0; i < size; ++i) b.push_back({random_ids(g, 16), random_ids(g, 5), 0, false});
  return b;
}

}  // namespace

static void BM_SequenceLogprob(benchmark::State& state) {
  const auto m = model::init_model(bench_config(static_cast<int>(state.range(0))), 1);
  std::mt19937 g(2);
  const auto src = random_ids(g, 16), tgt = random_ids(g, 3);
  for (auto _ : state) benchmark::DoNotOptimize(model::sequence_logprob(m, src, tgt));
}
BENCHMARK(BM_SequenceLogprob)->Arg(16)->Arg(32)->Arg(64);

static void BM_MleBackward(benchmark::State& state) {
  const auto bundle = model::init_bundle(bench_config(32), 1);
  const auto batch = random_batch(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    ad::Tape t;
    t.backward(train::mle_loss(t, bundle, batch, batch));
    benchmark::DoNotOptimize(t.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MleBackward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_TriLossBackward(benchmark::State& state) {
  const auto bundle = model::init_bundle(bench_config(32), 1);
  const auto batch = random_batch(4);
  const auto weights = train::direct_weights(bundle, batch);
  train::TriOptions o;
  o.estimator = state.range(0) == 0 ? train::Estimator::kExpectedEmbedding
                                    : train::Estimator::kSampling;
  state.SetLabel(train::to_string(o.estimator));
  Rng rng(3);
  for (auto _ : state) {
    ad::Tape t;
    t.backward(train::tri_loss(t, bundle, batch, weights, o, rng));
    benchmark::DoNotOptimize(t.size());
  }
}
BENCHMARK(BM_TriLossBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_Decode(benchmark::State& state) {
  const auto m = model::init_model(bench_config(32), 1);
  std::mt19937 g(4);
  const auto src = random_ids(g, 16);
  decode::DecodeOptions o;
  o.beam = static_cast<int>(state.range(1));
  o.max_len = 6;
  const bool constrained = state.range(0) == 1;
  state.SetLabel(constrained ? "constrained" : "beam");
  for (auto _ : state) {
    const auto r = constrained ? decode::constrained_beam_search(m, src, o)
                               : decode::beam_search(m, src, o);
    benchmark::DoNotOptimize(r.hypotheses.data());
  }
}
BENCHMARK(BM_Decode)->Args({0, 5})->Args({1, 5})->Args({0, 32})->Args({1, 32})->Unit(benchmark::kMillisecond);

static void BM_SelfBleu(benchmark::State& state) {
  std::mt19937 g(5);
  std::uniform_int_distribution<int> w(0, 30);
  std::vector<corpus::Tokens> cands(static_cast<std::size_t>(state.range(0)));
  for (auto& c : cands)
    for (int i = 0; i < 4; ++i) c.push_back("w" + std::to_string(w(g)));
  for (auto _ : state) benchmark::DoNotOptimize(eval::self_bleu(cands));
}
BENCHMARK(BM_SelfBleu)->Arg(5)->Arg(32);

static void BM_TfIdfMatch(benchmark::State& state) {
  std::mt19937 g(6);
  std::uniform_int_distribution<int> w(0, 200);
  std::vector<corpus::Pair> pairs(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pairs) {
    for (int i = 0; i < 16; ++i) p.source.push_back("w" + std::to_string(w(g)));
    p.target = {"b" + std::to_string(w(g))};
  }
  const auto index = baseline::build_index(pairs, baseline::Mode::kTfIdf);
  const auto query = pairs.front().source;
  for (auto _ : state) benchmark::DoNotOptimize(baseline::match(index, query, 5));
}
BENCHMARK(BM_TfIdfMatch)->Arg(1000)->Arg(4000);

BENCHMARK_MAIN();
