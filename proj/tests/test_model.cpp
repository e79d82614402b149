#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "labelforge/checkpoint.hpp"
#include "labelforge/errors.hpp"
#include "labelforge/model.hpp"
#include "labelforge/rng.hpp"

using namespace labelforge;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kFamilies = {"mini-vgg", "mini-res", "mini-eff"};

Tensor random_batch(int n, const BackbonePreset& p, std::uint64_t seed) {
  RngStream rng(seed);
  Tensor t({n, p.input_c, p.input_h, p.input_w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

long long expected_param_count(Model& m) {
  long long total = 0;
  for (Tensor* t : m.backbone_params()) total += static_cast<long long>(t->size());
  for (Tensor* t : m.classifier_params()) total += static_cast<long long>(t->size());
  if (m.with_projection)
    for (Tensor* t : m.projection_params())
      total += static_cast<long long>(t->size());
  return total;
}

fs::path temp_file(const char* stem) {
  return fs::temp_directory_path() / (std::string("labelforge_") + stem);
}

}  // namespace

TEST_CASE("preset lookup knows the three families and rejects others") {
  for (const std::string& f : kFamilies) CHECK(preset_from_name(f).family == f);
  CHECK(preset_from_name("mini-eff").width_multiplier > 1.f);
  CHECK(preset_from_name("mini-eff").depth_multiplier > 1.f);
  CHECK_THROWS_AS(preset_from_name("resnet50"), ConfigError);
}

TEST_CASE("building rejects impossible configurations") {
  BackbonePreset p = preset_from_name("mini-vgg");
  p.input_h = p.input_w = 4;  // pooling pyramid cannot fit
  CHECK_THROWS_AS(build_backbone(p, 1), ConfigError);
  p = preset_from_name("mini-res");
  p.width_multiplier = 0.f;
  CHECK_THROWS_AS(build_backbone(p, 1), ConfigError);
  p = preset_from_name("mini-vgg");
  p.embedding_dim = 0;
  CHECK_THROWS_AS(build_backbone(p, 1), ConfigError);
}

TEST_CASE("parameter count grows with the width multiplier") {
  for (const std::string& f : kFamilies) {
    long long prev = 0;
    for (float w : {0.5f, 1.0f, 1.5f, 2.0f}) {
      BackbonePreset p = preset_from_name(f);
      p.width_multiplier *= w;
      Model m = build_backbone(p, 7);
      long long count = m.parameter_count();
      CHECK(count > prev);
      CHECK(count == expected_param_count(m));
      prev = count;
    }
  }
}

TEST_CASE("depth multiplier adds residual blocks and parameters") {
  long long prev = 0;
  for (float d : {1.0f, 1.4f, 2.0f}) {
    BackbonePreset p = preset_from_name("mini-res");
    p.depth_multiplier = d;
    Model m = build_backbone(p, 7);
    CHECK(m.parameter_count() > prev);
    prev = m.parameter_count();
  }
  // compound scaling: the scaled family is strictly larger than its base
  Model base = build_backbone(preset_from_name("mini-res"), 7);
  Model scaled = build_backbone(preset_from_name("mini-eff"), 7);
  CHECK(scaled.parameter_count() > base.parameter_count());
}

TEST_CASE("initialization is deterministic in the seed") {
  for (const std::string& f : kFamilies) {
    BackbonePreset p = preset_from_name(f);
    p.input_h = p.input_w = 16;
    Model a = build_backbone(p, 123);
    Model b = build_backbone(p, 123);
    Model c = build_backbone(p, 124);
    auto na = a.named_tensors(), nb = b.named_tensors(), nc = c.named_tensors();
    REQUIRE(na.size() == nb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < na.size(); ++i) {
      CHECK(na[i].first == nb[i].first);
      REQUIRE(na[i].second->size() == nb[i].second->size());
      for (std::size_t j = 0; j < na[i].second->size(); ++j) {
        CHECK((*na[i].second)[j] == (*nb[i].second)[j]);
        any_diff = any_diff || (*na[i].second)[j] != (*nc[i].second)[j];
      }
    }
    CHECK(any_diff);
  }
}

TEST_CASE("weights respect the fan-in uniform bound and biases start at zero") {
  BackbonePreset p = preset_from_name("mini-res");
  p.input_h = p.input_w = 16;
  Model m = build_backbone(p, 99);
  for (const ConvLayer& c : m.convs) {
    const int fan_in = c.kernel.dim(1) * c.kernel.dim(2) * c.kernel.dim(3);
    const float bound = std::sqrt(6.f / static_cast<float>(fan_in));
    for (std::size_t i = 0; i < c.kernel.size(); ++i) {
      CHECK(std::fabs(c.kernel[i]) <= bound);
    }
    if (c.has_bias)
      for (std::size_t i = 0; i < c.bias.size(); ++i) CHECK(c.bias[i] == 0.f);
  }
  const float dense_bound =
      std::sqrt(6.f / static_cast<float>(m.embed.w.dim(0)));
  for (std::size_t i = 0; i < m.embed.w.size(); ++i)
    CHECK(std::fabs(m.embed.w[i]) <= dense_bound);
  for (std::size_t i = 0; i < m.embed.b.size(); ++i) CHECK(m.embed.b[i] == 0.f);
  for (const BnLayer& bn : m.bns) {
    for (std::size_t i = 0; i < bn.gamma.size(); ++i) {
      CHECK(bn.gamma[i] == 1.f);
      CHECK(bn.beta[i] == 0.f);
      CHECK(bn.state.running_mean[i] == 0.f);
      CHECK(bn.state.running_var[i] == 1.f);
    }
  }
}

TEST_CASE("forward paths produce the documented shapes") {
  for (const std::string& f : kFamilies) {
    BackbonePreset p = preset_from_name(f);
    p.input_h = p.input_w = 16;
    p.input_c = 1;
    Model m = build_backbone(p, 5);
    Tensor batch = random_batch(3, p, 11);
    Tensor logits = m.logits(batch);
    CHECK(logits.shape() == std::vector<int>{3, 2});
    Tensor probs = m.classify(batch);
    CHECK(probs.shape() == std::vector<int>{3, 2});
    for (int r = 0; r < 3; ++r)
      CHECK(probs.at(r, 0) + probs.at(r, 1) ==
            doctest::Approx(1.0).epsilon(1e-5));
    Tensor emb = m.embed_batch(batch);
    REQUIRE(emb.shape() == std::vector<int>{3, m.proj_dim});
    for (int r = 0; r < 3; ++r) {
      double n = 0;
      for (int c = 0; c < m.proj_dim; ++c)
        n += static_cast<double>(emb.at(r, c)) * emb.at(r, c);
      CHECK(n == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("projection access without a projection head is an error") {
  BackbonePreset p = preset_from_name("mini-vgg");
  p.input_h = p.input_w = 16;
  Model m = build_backbone(p, 5, false);
  Tensor batch = random_batch(2, p, 11);
  CHECK_THROWS_AS(m.embed_batch(batch), UsageError);
}

TEST_CASE("mismatched batch shapes are rejected") {
  BackbonePreset p = preset_from_name("mini-vgg");
  p.input_h = p.input_w = 16;
  Model m = build_backbone(p, 5);
  Tensor wrong({2, p.input_c, 8, 8});
  CHECK_THROWS_AS(m.logits(wrong), InputError);
}

TEST_CASE("inference does not disturb running statistics") {
  BackbonePreset p = preset_from_name("mini-res");
  p.input_h = p.input_w = 16;
  Model m = build_backbone(p, 5);
  Tensor batch = random_batch(2, p, 11);
  std::vector<float> before = m.bns.front().state.running_mean.values();
  (void)m.logits(batch);
  (void)m.logits(batch);
  CHECK(m.bns.front().state.running_mean.values() == before);
}

TEST_CASE("checkpoint roundtrip preserves tensors, metadata, and outputs") {
  for (const std::string& f : kFamilies) {
    BackbonePreset p = preset_from_name(f);
    p.input_h = p.input_w = 16;
    Model m = build_backbone(p, 321);
    Tensor batch = random_batch(2, p, 8);
    Tensor before = m.logits(batch);

    CheckpointMeta meta;
    meta.rng_state = 777;
    meta.epoch = 12;
    meta.losses = {1.5, 0.75, 0.5};
    const fs::path path = temp_file((f + ".ckpt").c_str());
    save_checkpoint(m, path.string(), meta);

    CheckpointMeta loaded_meta;
    Model loaded = load_checkpoint(path.string(), &loaded_meta);
    CHECK(loaded_meta.rng_state == meta.rng_state);
    CHECK(loaded_meta.epoch == meta.epoch);
    CHECK(loaded_meta.losses == meta.losses);
    CHECK(loaded.preset.family == f);
    CHECK(loaded.with_projection == m.with_projection);

    auto na = m.named_tensors(), nl = loaded.named_tensors();
    REQUIRE(na.size() == nl.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
      CHECK(na[i].first == nl[i].first);
      CHECK(na[i].second->values() == nl[i].second->values());
    }
    Tensor after = loaded.logits(batch);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i)
      CHECK(after[i] == before[i]);
    fs::remove(path);
  }
}

TEST_CASE("corrupt checkpoints are rejected with a format error") {
  BackbonePreset p = preset_from_name("mini-vgg");
  p.input_h = p.input_w = 16;
  Model m = build_backbone(p, 1);
  const fs::path path = temp_file("corrupt.ckpt");
  save_checkpoint(m, path.string());

  // truncation
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  CHECK_THROWS_AS(load_checkpoint(path.string()), FormatError);

  // wrong magic
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), FormatError);

  CHECK_THROWS_AS(load_checkpoint((path.string() + ".missing")), IoError);
  fs::remove(path);
}

TEST_CASE("embedding dim flows into classifier and projection shapes") {
  BackbonePreset p = preset_from_name("mini-vgg");
  p.input_h = p.input_w = 16;
  p.embedding_dim = 24;
  Model m = build_backbone(p, 3);
  CHECK(m.embed.w.dim(1) == 24);
  CHECK(m.classifier.w.dim(0) == 24);
  CHECK(m.classifier.w.dim(1) == 2);
  CHECK(m.proj1.w.dim(0) == 24);
  CHECK(m.proj1.w.dim(1) == 24);
  CHECK(m.proj2.w.dim(0) == 24);
  CHECK(m.proj2.w.dim(1) == m.proj_dim);
}
