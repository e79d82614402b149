#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "grad_check.hpp"
#include "labelforge/errors.hpp"
#include "labelforge/graph.hpp"
#include "labelforge/model.hpp"
#include "labelforge/rng.hpp"
#include "labelforge/tensor.hpp"

using namespace labelforge;
using gradcheck::avoid_kinks;
using gradcheck::max_grad_error;
using gradcheck::random_targets;
using gradcheck::random_tensor;

namespace {

constexpr double kTol = 1e-3;
constexpr int kSeeds = 10;

void check_grads(const std::vector<Tensor*>& params,
                 const std::function<Var(Graph&)>& build) {
  gradcheck::Result r = max_grad_error(params, build, 1e-3, kTol);
  CHECK(r.max_err < kTol);
  CHECK(r.checked > 0);
  // a kink on both sides of a coordinate must stay a rare exception
  CHECK(r.skipped * 100 <= r.checked + r.skipped);
}

}  // namespace

TEST_CASE("dense gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(100 + s);
    Tensor x = random_tensor({3, 5}, rng.derive("x"));
    Tensor w = random_tensor({5, 4}, rng.derive("w"));
    Tensor b = random_tensor({4}, rng.derive("b"));
    auto targets = random_targets(3, 4, rng.derive("t"));
    check_grads({&x, &w, &b}, [&](Graph& g) {
      Var out = g.dense(g.leaf(x), g.leaf(w), g.leaf(b));
      return g.softmax_cross_entropy(out, targets);
    });
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  struct Case {
    int stride, pad;
  };
  for (Case c : {Case{1, 1}, Case{2, 0}}) {
    for (int s = 0; s < kSeeds; ++s) {
      RngStream rng(200 + s);
      Tensor x = random_tensor({2, 3, 6, 6}, rng.derive("x"));
      Tensor k = random_tensor({4, 3, 3, 3}, rng.derive("k"));
      auto targets = random_targets(2, 4, rng.derive("t"));
      check_grads({&x, &k}, [&](Graph& g) {
        Var out = g.conv2d(g.leaf(x), g.leaf(k), c.stride, c.pad);
        return g.softmax_cross_entropy(g.avgpool_global(out), targets);
      });
    }
  }
}

TEST_CASE("channel bias gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(300 + s);
    Tensor x = random_tensor({2, 3, 4, 4}, rng.derive("x"));
    Tensor b = random_tensor({3}, rng.derive("b"));
    auto targets = random_targets(2, 3, rng.derive("t"));
    check_grads({&x, &b}, [&](Graph& g) {
      Var out = g.channel_bias(g.leaf(x), g.leaf(b));
      return g.softmax_cross_entropy(g.avgpool_global(out), targets);
    });
  }
}

TEST_CASE("relu gradients match finite differences away from the kink") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(400 + s);
    Tensor x = random_tensor({3, 6}, rng.derive("x"));
    avoid_kinks(x);
    auto targets = random_targets(3, 6, rng.derive("t"));
    check_grads({&x}, [&](Graph& g) {
      return g.softmax_cross_entropy(g.relu(g.leaf(x)), targets);
    });
  }
}

TEST_CASE("maxpool2 gradients match finite differences without ties") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(500 + s);
    Tensor x = random_tensor({2, 2, 4, 4}, rng.derive("x"));
    // distinct values so the argmax never flips inside the h-interval
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] += 0.01f * static_cast<float>(i % 7);
    auto targets = random_targets(2, 2, rng.derive("t"));
    check_grads({&x}, [&](Graph& g) {
      Var out = g.maxpool2(g.leaf(x));
      return g.softmax_cross_entropy(g.avgpool_global(out), targets);
    });
  }
}

TEST_CASE("global average pool gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(600 + s);
    Tensor x = random_tensor({2, 3, 4, 4}, rng.derive("x"));
    auto targets = random_targets(2, 3, rng.derive("t"));
    check_grads({&x}, [&](Graph& g) {
      return g.softmax_cross_entropy(g.avgpool_global(g.leaf(x)), targets);
    });
  }
}

TEST_CASE("batchnorm gradients match finite differences in training mode") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(700 + s);
    Tensor x = random_tensor({4, 3, 2, 2}, rng.derive("x"));
    Tensor gamma = random_tensor({3}, rng.derive("g"), 0.5f, 1.5f);
    Tensor beta = random_tensor({3}, rng.derive("b"));
    auto targets = random_targets(4, 3, rng.derive("t"));
    check_grads({&x, &gamma, &beta}, [&](Graph& g) {
      Var out =
          g.batchnorm(g.leaf(x), g.leaf(gamma), g.leaf(beta), nullptr, true);
      return g.softmax_cross_entropy(g.avgpool_global(out), targets);
    });
  }
}

TEST_CASE("batchnorm gradients match finite differences in eval mode") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(750 + s);
    Tensor x = random_tensor({4, 3}, rng.derive("x"));
    Tensor gamma = random_tensor({3}, rng.derive("g"), 0.5f, 1.5f);
    Tensor beta = random_tensor({3}, rng.derive("b"));
    BatchNormState state;
    state.running_mean = random_tensor({3}, rng.derive("rm"), -0.2f, 0.2f);
    state.running_var = random_tensor({3}, rng.derive("rv"), 0.5f, 1.5f);
    auto targets = random_targets(4, 3, rng.derive("t"));
    check_grads({&x, &gamma, &beta}, [&](Graph& g) {
      Var out =
          g.batchnorm(g.leaf(x), g.leaf(gamma), g.leaf(beta), &state, false);
      return g.softmax_cross_entropy(out, targets);
    });
  }
}

TEST_CASE("flatten and scale and add gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(800 + s);
    Tensor a = random_tensor({2, 2, 2, 2}, rng.derive("a"));
    Tensor b = random_tensor({2, 8}, rng.derive("b"));
    auto targets = random_targets(2, 8, rng.derive("t"));
    check_grads({&a, &b}, [&](Graph& g) {
      Var fa = g.flatten(g.leaf(a));
      Var sum = g.add(g.scale(fa, 1.7f), g.leaf(b));
      return g.softmax_cross_entropy(sum, targets);
    });
  }
}

TEST_CASE("softmax gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(900 + s);
    Tensor x = random_tensor({3, 4}, rng.derive("x"));
    auto targets = random_targets(3, 4, rng.derive("t"));
    check_grads({&x}, [&](Graph& g) {
      return g.softmax_cross_entropy(g.softmax(g.leaf(x)), targets);
    });
  }
}

TEST_CASE("cross-entropy gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(1000 + s);
    Tensor x = random_tensor({4, 5}, rng.derive("x"), -2.f, 2.f);
    auto targets = random_targets(4, 5, rng.derive("t"));
    check_grads({&x}, [&](Graph& g) {
      return g.softmax_cross_entropy(g.leaf(x), targets);
    });
  }
}

TEST_CASE("matmul_nt gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(1100 + s);
    Tensor a = random_tensor({3, 5}, rng.derive("a"));
    Tensor b = random_tensor({4, 5}, rng.derive("b"));
    auto targets = random_targets(3, 4, rng.derive("t"));
    check_grads({&a, &b}, [&](Graph& g) {
      Var sim = g.matmul_nt(g.leaf(a), g.leaf(b));
      return g.softmax_cross_entropy(sim, targets);
    });
  }
}

TEST_CASE("row normalization gradients match finite differences") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(1200 + s);
    Tensor x = random_tensor({3, 6}, rng.derive("x"));
    avoid_kinks(x, 0.1f);
    auto targets = random_targets(3, 6, rng.derive("t"));
    check_grads({&x}, [&](Graph& g) {
      return g.softmax_cross_entropy(g.l2_normalize_rows(g.leaf(x)), targets);
    });
  }
}

TEST_CASE("contrastive pipeline gradients match finite differences") {
  // l2 normalize -> self similarity -> temperature -> masked row CE, the
  // exact op chain used by the contrastive loss
  const std::vector<int> partner = {1, 0, 3, 2};
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(1300 + s);
    Tensor x = random_tensor({4, 5}, rng.derive("x"));
    avoid_kinks(x, 0.1f);
    check_grads({&x}, [&](Graph& g) {
      Var e = g.l2_normalize_rows(g.leaf(x));
      Var sim = g.scale(g.matmul_nt(e, e), 2.f);
      return g.masked_softmax_ce(sim, partner);
    });
  }
}

TEST_CASE("conv2d with identity kernel reproduces its input") {
  RngStream rng(77);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor k({2, 2, 3, 3});
  k.at(0, 0, 1, 1) = 1.f;  // channel passthrough
  k.at(1, 1, 1, 1) = 1.f;
  Graph g;
  Var out = g.conv2d(g.input(x), g.input(k), 1, 1);
  const Tensor& v = g.value(out);
  REQUIRE(v.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(v[i] == x[i]);
}

TEST_CASE("maxpool2 picks window maxima and halves the spatial dims") {
  Tensor x({1, 1, 4, 4}, {1,  5,  2,  6,   //
                          3,  7,  4,  8,   //
                          9,  13, 10, 14,  //
                          11, 15, 12, 16});
  Graph g;
  Var out = g.maxpool2(g.input(x));
  const Tensor& v = g.value(out);
  REQUIRE(v.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(v[0] == 7.f);
  CHECK(v[1] == 8.f);
  CHECK(v[2] == 15.f);
  CHECK(v[3] == 16.f);
}

TEST_CASE("global average pool averages each channel") {
  Tensor x({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  Graph g;
  const Tensor& v = g.value(g.avgpool_global(g.input(x)));
  REQUIRE(v.shape() == std::vector<int>{1, 2});
  CHECK(v[0] == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(25.0).epsilon(1e-6));
}

TEST_CASE("softmax rows are positive and sum to one") {
  RngStream rng(31);
  Tensor x = random_tensor({4, 7}, rng, -5.f, 5.f);
  Graph g;
  const Tensor& v = g.value(g.softmax(g.input(x)));
  for (int r = 0; r < 4; ++r) {
    double sum = 0;
    for (int c = 0; c < 7; ++c) {
      CHECK(v.at(r, c) > 0.f);
      sum += v.at(r, c);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("cross-entropy of uniform logits is ln(C)") {
  Tensor x = Tensor::full({3, 8}, 0.42f);
  Graph g;
  Var loss = g.softmax_cross_entropy(g.input(x), {0, 3, 7});
  CHECK(g.value(loss)[0] == doctest::Approx(std::log(8.0)).epsilon(1e-6));
}

TEST_CASE("cross-entropy is shift invariant per row") {
  RngStream rng(32);
  Tensor x = random_tensor({3, 4}, rng, -2.f, 2.f);
  Tensor shifted = x;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) shifted.at(r, c) += 3.5f * (r + 1);
  std::vector<int> targets = {1, 0, 2};
  Graph ga, gb;
  float a = ga.value(ga.softmax_cross_entropy(ga.input(x), targets))[0];
  float b = gb.value(gb.softmax_cross_entropy(gb.input(shifted), targets))[0];
  CHECK(a == doctest::Approx(b).epsilon(1e-5));
}

TEST_CASE("batchnorm normalizes channels and updates running statistics") {
  RngStream rng(33);
  Tensor x = random_tensor({8, 2, 3, 3}, rng, -2.f, 3.f);
  Tensor gamma = Tensor::full({2}, 1.f);
  Tensor beta({2});
  BatchNormState state;
  state.running_mean = Tensor({2});
  state.running_var = Tensor::full({2}, 1.f);

  // independent double-precision channel statistics
  const int m = 8 * 3 * 3;
  double mu[2], var[2];
  for (int c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 9; ++i) {
        double v = x[(static_cast<std::size_t>(n) * 2 + c) * 9 + i];
        s += v;
        s2 += v * v;
      }
    mu[c] = s / m;
    var[c] = s2 / m - mu[c] * mu[c];
  }

  Graph g;
  const Tensor& out = g.value(
      g.batchnorm(g.input(x), g.input(gamma), g.input(beta), &state, true));
  for (int c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 9; ++i) {
        double v = out[(static_cast<std::size_t>(n) * 2 + c) * 9 + i];
        s += v;
        s2 += v * v;
      }
    CHECK(s / m == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(s2 / m - (s / m) * (s / m) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(state.running_mean[c] == doctest::Approx(0.1 * mu[c]).epsilon(1e-4));
    CHECK(state.running_var[c] ==
          doctest::Approx(0.9 + 0.1 * var[c]).epsilon(1e-4));
  }
}

TEST_CASE("row normalization produces unit rows") {
  RngStream rng(34);
  Tensor x = random_tensor({5, 6}, rng);
  avoid_kinks(x, 0.1f);
  Graph g;
  const Tensor& v = g.value(g.l2_normalize_rows(g.input(x)));
  for (int r = 0; r < 5; ++r) {
    double n = 0;
    for (int c = 0; c < 6; ++c)
      n += static_cast<double>(v.at(r, c)) * v.at(r, c);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("leaf registration is idempotent per tensor") {
  Tensor w = Tensor::full({2, 2}, 1.f);
  Graph g;
  Var a = g.leaf(w);
  Var b = g.leaf(w);
  CHECK(a.node == b.node);
}

TEST_CASE("unreachable parameters receive a zero gradient buffer") {
  Tensor used = Tensor::full({2, 2}, 0.5f);
  Tensor unused = Tensor::full({3}, 0.5f);
  used.requires_grad = unused.requires_grad = true;
  used.grad.clear();
  unused.grad.clear();
  Graph g;
  Var w = g.leaf(used);
  g.leaf(unused);
  Var loss = g.softmax_cross_entropy(w, {0, 1});
  g.backward(loss);
  REQUIRE(unused.grad.size() == unused.size());
  for (float v : unused.grad) CHECK(v == 0.f);
  bool any = false;
  for (float v : used.grad) any = any || v != 0.f;
  CHECK(any);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x = Tensor::full({2, 3}, 1.f);
  Graph g;
  Var v = g.input(x);
  CHECK_THROWS_AS(g.backward(v), UsageError);
}

TEST_CASE("shape and target validation") {
  Graph g;
  Tensor x4 = Tensor::full({1, 2, 3, 3}, 0.f);
  Tensor x2 = Tensor::full({2, 3}, 0.f);
  Tensor bias_bad = Tensor::full({5}, 0.f);
  CHECK_THROWS_AS(g.channel_bias(g.input(x4), g.input(bias_bad)), ConfigError);
  CHECK_THROWS_AS(g.avgpool_global(g.input(x2)), ConfigError);
  CHECK_THROWS_AS(g.softmax_cross_entropy(g.input(x2), {0, 9}), InputError);
  CHECK_THROWS_AS(g.softmax_cross_entropy(g.input(x2), {0}), InputError);
  Tensor a = Tensor::full({2, 3}, 0.f);
  Tensor b = Tensor::full({2, 4}, 0.f);
  CHECK_THROWS_AS(g.add(g.input(a), g.input(b)), InputError);
  CHECK_THROWS_AS(g.matmul_nt(g.input(a), g.input(b)), ConfigError);
}

TEST_CASE("masked row cross-entropy validates its targets") {
  Graph g;
  Tensor one = Tensor::full({1, 1}, 0.f);
  CHECK_THROWS_AS(g.masked_softmax_ce(g.input(one), {0}), UsageError);
  Tensor sim = Tensor::full({3, 3}, 0.f);
  CHECK_THROWS_AS(g.masked_softmax_ce(g.input(sim), {0, 0, 0}), UsageError);
  CHECK_THROWS_AS(g.masked_softmax_ce(g.input(sim), {1, 0, 5}), UsageError);
  Tensor rect = Tensor::full({2, 3}, 0.f);
  CHECK_THROWS_AS(g.masked_softmax_ce(g.input(rect), {1, 0}), ConfigError);
}

TEST_CASE("full backbone gradients match finite differences") {
  // tiny network, every parameter coordinate checked
  BackbonePreset preset = preset_from_name("mini-vgg");
  preset.input_h = preset.input_w = 8;
  preset.input_c = 1;
  preset.width_multiplier = 0.3f;
  preset.embedding_dim = 6;
  for (int s = 0; s < 3; ++s) {
    Model model = build_backbone(preset, 9000 + s, false);
    RngStream rng(40 + s);
    Tensor batch = random_tensor({2, 1, 8, 8}, rng, 0.f, 1.f);
    std::vector<int> targets = {s % 2, 1 - s % 2};
    std::vector<Tensor*> params = model.backbone_params();
    for (Tensor* p : model.classifier_params()) params.push_back(p);
    check_grads(params, [&](Graph& g) {
      Var logits = model.forward_logits(g, g.input(batch), true);
      return g.softmax_cross_entropy(logits, targets);
    });
  }
}
