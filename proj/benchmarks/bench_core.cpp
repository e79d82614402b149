#include <benchmark/benchmark.h>

#include <vector>

#include "labelforge/augment.hpp"
#include "labelforge/contrastive.hpp"
#include "labelforge/graph.hpp"
#include "labelforge/model.hpp"
#include "labelforge/rng.hpp"
#include "labelforge/tensor.hpp"

using namespace labelforge;

namespace {

Tensor random_tensor(const std::vector<int>& shape, std::uint64_t seed,
                     float lo = -1.f, float hi = 1.f) {
  Tensor t(shape);
  RngStream rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void conv_forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Tensor x = random_tensor({8, c, 16, 16}, 1);
  Tensor k = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(g.value(g.conv2d(g.input(x), g.input(k), 1, 1)));
  }
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(conv_forward)->Arg(8)->Arg(16)->Arg(32);

void conv_backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Tensor x = random_tensor({8, c, 16, 16}, 1);
  Tensor k = random_tensor({c, c, 3, 3}, 2);
  k.requires_grad = true;
  std::vector<int> targets(8, 1);
  for (auto _ : state) {
    k.grad.clear();
    Graph g;
    Var out = g.conv2d(g.input(x), g.leaf(k), 1, 1);
    Var loss = g.softmax_cross_entropy(g.avgpool_global(out), targets);
    g.backward(loss);
    benchmark::DoNotOptimize(k.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(conv_backward)->Arg(8)->Arg(16)->Arg(32);

void backbone_logits(benchmark::State& state) {
  Model model = build_backbone(preset_from_name("mini-res"), 7);
  Tensor batch = random_tensor({16, 3, 32, 32}, 3, 0.f, 1.f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.logits(batch));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(backbone_logits);

void augment_image(benchmark::State& state) {
  Tensor img = random_tensor({32, 32, 3}, 4, 0.f, 1.f);
  AugmentPolicy policy;
  RngStream rng(11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(augment_pixels(img, policy, rng.derive("v")));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(augment_image);

void cross_entropy_loss(benchmark::State& state) {
  Tensor logits = random_tensor({64, 2}, 5, -3.f, 3.f);
  logits.requires_grad = true;
  std::vector<int> targets(64);
  for (int i = 0; i < 64; ++i) targets[i] = i % 2;
  for (auto _ : state) {
    logits.grad.clear();
    Graph g;
    Var loss = g.softmax_cross_entropy(g.leaf(logits), targets);
    g.backward(loss);
    benchmark::DoNotOptimize(logits.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(cross_entropy_loss);

void contrastive_loss(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Tensor emb = random_tensor({m, 64}, 6);
  emb.requires_grad = true;
  std::vector<int> partner(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) partner[i] = i ^ 1;
  for (auto _ : state) {
    emb.grad.clear();
    Graph g;
    Var e = g.l2_normalize_rows(g.leaf(emb));
    Var loss = nt_xent(g, e, partner, 0.5f);
    g.backward(loss);
    benchmark::DoNotOptimize(emb.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(contrastive_loss)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
