#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "objbias/stats.hpp"
#include "objbias/taxonomy.hpp"

using namespace objbias;

namespace {

AttributeTaxonomy bench_taxonomy(int n_attrs) {
  std::vector<AttributeSpec> attrs;
  for (int a = 0; a < n_attrs; ++a) {
    attrs.push_back({"attr" + std::to_string(a), AttributeScope::kProduct, ValueMode::kClosed,
                     {"v0", "v1", "v2", "v3", "v4"}, AttributeOrigin::kDiscovered});
  }
  return make_taxonomy("bench", "object", attrs);
}

std::vector<AttributeRecord> bench_records(const AttributeTaxonomy& tax, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AttributeRecord> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].image_id = "img" + std::to_string(i);
    for (const auto& a : tax.attributes) {
      const auto& values = a.mode == ValueMode::kClosed ? a.allowed_values : std::vector<std::string>{"red", "blue"};
      out[i].values[a.name] = values[rng() % values.size()];
    }
  }
  return out;
}

void BM_JsDivergence(benchmark::State& state) {
  std::map<std::string, double> wp, wq;
  for (int i = 0; i < state.range(0); ++i) {
    wp["v" + std::to_string(i)] = 1.0 + i;
    wq["v" + std::to_string(i)] = 1.0 + (i * 7) % 5;
  }
  const auto p = Distribution::from_weights("a", wp), q = Distribution::from_weights("a", wq);
  for (auto _ : state) benchmark::DoNotOptimize(js_divergence(p, q));
}
BENCHMARK(BM_JsDivergence)->Arg(4)->Arg(16)->Arg(64);

void BM_Bds(benchmark::State& state) {
  const auto tax = bench_taxonomy(4);
  const auto base = bench_records(tax, static_cast<int>(state.range(0)), 1);
  const auto group = bench_records(tax, static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(bds(base, group, tax).score);
}
BENCHMARK(BM_Bds)->Arg(20)->Arg(200);

void BM_PermutationTest(benchmark::State& state) {
  const auto tax = bench_taxonomy(4);
  const auto base = bench_records(tax, 20, 3);
  const auto group = bench_records(tax, 20, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(permutation_test(base, group, tax, static_cast<int>(state.range(0)), 99));
  }
}
BENCHMARK(BM_PermutationTest)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
