#include "partedit/autodiff.hpp"
#include "partedit/autoencoder.hpp"
#include "partedit/dataset.hpp"
#include "partedit/editor.hpp"
#include "partedit/jointspace.hpp"
#include "partedit/metrics.hpp"

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

using namespace partedit;

namespace {

ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, bool variable) {
  std::normal_distribution<double> d;
  std::vector<double> v(shape.size());
  for (double& x : v) x = d(rng);
  return variable ? ad::Tensor::variable(shape, std::move(v)) : ad::Tensor::constant(shape, std::move(v));
}

std::vector<ShapeParams> sample_shapes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ShapeParams> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_shape(DatasetConfig{}, rng));
  return out;
}

// Untrained but frozen models: timings do not depend on the weights.
struct EditWorld {
  std::vector<ShapeParams> shapes = sample_shapes(2000, 1);
  Autoencoder ae{32, 64, 2};
  JointSpaceModel model{JointSpaceConfig{}, 32, 3};
  NeighborIndex index;
  EditConfig cfg;

  EditWorld() : index((ae.freeze(), model.freeze(), ae.encode_all(shapes))) { cfg.delta = default_delta(shapes); }
};

EditWorld& world() {
  static EditWorld w;
  return w;
}

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const auto b = random_tensor({n, n}, rng, false);
  for (auto _ : state) {
    const auto a = random_tensor({n, n}, rng, true);
    ad::sum(ad::matmul(a, b)).backward();
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64)->Arg(128);

void BM_RegionVolume(benchmark::State& state) {
  const auto shapes = sample_shapes(256, 2);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto s = realize_shape(shapes[i++ % shapes.size()]);
    const auto region = relevant_region(s, "the legs are longer");
    benchmark::DoNotOptimize(region_volume(s, region));
  }
}
BENCHMARK(BM_RegionVolume);

void BM_PepEntry(benchmark::State& state) {
  const auto shapes = sample_shapes(256, 3);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto a = realize_shape(shapes[i % shapes.size()]);
    auto p = shapes[i++ % shapes.size()];
    const auto& range = bounds_for(p.category)[static_cast<std::size_t>(Param::leg_height)];
    p.set(Param::leg_height, std::min(range.max, p.get(Param::leg_height) * 1.05));
    benchmark::DoNotOptimize(pep_entry(a, realize_shape(p), "the legs are longer"));
  }
}
BENCHMARK(BM_PepEntry);

void BM_NeighborQuery(benchmark::State& state) {
  auto& w = world();
  const auto query = w.ae.encode(w.shapes.front());
  for (auto _ : state) benchmark::DoNotOptimize(w.index.nearest(query, 64));
}
BENCHMARK(BM_NeighborQuery);

void BM_EncodeText(benchmark::State& state) {
  auto& w = world();
  for (auto _ : state) benchmark::DoNotOptimize(w.model.encode_text("make the legs of the chair a lot longer"));
}
BENCHMARK(BM_EncodeText);

void BM_SimilarityGradient(benchmark::State& state) {
  auto& w = world();
  const std::vector<std::vector<TokenId>> seqs{tokenize("the legs are longer")};
  const auto g = w.model.encode_tokens(seqs);
  const auto s = ad::Tensor::row(w.ae.encode(w.shapes[0]));
  const auto t0 = w.ae.encode(w.shapes[1]);
  for (auto _ : state) {
    const auto t = ad::Tensor::variable({1, t0.size()}, t0);
    w.model.similarity(s, t, g).backward();
    benchmark::DoNotOptimize(t.grad().data());
  }
}
BENCHMARK(BM_SimilarityGradient);

void BM_DecodedVolumeGradient(benchmark::State& state) {
  auto& w = world();
  const auto z = w.ae.encode(w.shapes[0]);
  for (auto _ : state) benchmark::DoNotOptimize(w.ae.decoded_volume_gradient(z, w.shapes[0]));
}
BENCHMARK(BM_DecodedVolumeGradient);

// One full edit: neighbour lookup, B ascent steps with ODESSA scaling.
void BM_Edit(benchmark::State& state) {
  auto& w = world();
  EditConfig cfg = w.cfg;
  cfg.steps = static_cast<std::size_t>(state.range(0));
  const auto z = w.ae.encode(w.shapes[5]);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(edit({w.model, w.ae, w.index}, z, w.shapes[5], "the legs are longer", cfg, ++seed));
  }
}
BENCHMARK(BM_Edit)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
