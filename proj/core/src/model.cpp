#include "labelforge/model.hpp"

#include <cmath>
#include <stdexcept>

#include "labelforge/errors.hpp"
#include "labelforge/rng.hpp"

namespace labelforge {

BackbonePreset preset_from_name(const std::string& name) {
  BackbonePreset p;
  p.family = name;
  if (name == "mini-vgg" || name == "mini-res") return p;
  if (name == "mini-eff") {
    // one compound-scaling step: depth alpha=1.2, width beta=1.1
    p.width_multiplier = 1.1f;
    p.depth_multiplier = 1.2f;
    return p;
  }
  throw ConfigError("unknown backbone preset: " + name);
}

namespace {

int scaled(int base, float mult) {
  int v = static_cast<int>(std::ceil(static_cast<double>(base) * mult));
  return v < 1 ? 1 : v;
}

void init_kaiming(Tensor& t, int fan_in, RngStream rng) {
  float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-bound, bound);
}

struct Builder {
  Model m;
  RngStream root;
  int c, h, w;  // current feature map shape

  Builder(const BackbonePreset& p, std::uint64_t seed)
      : root(seed), c(p.input_c), h(p.input_h), w(p.input_w) {
    m.preset = p;
    m.seed = seed;
  }

  RngStream stream(const std::string& name) { return root.derive(name); }

  void conv(int out_c, int k, int stride, int pad, bool bias) {
    ConvLayer layer;
    layer.kernel = Tensor({out_c, c, k, k});
    layer.kernel.requires_grad = true;
    std::string name = "conv" + std::to_string(m.convs.size());
    init_kaiming(layer.kernel, c * k * k, stream(name + ".kernel"));
    layer.stride = stride;
    layer.pad = pad;
    layer.has_bias = bias;
    if (bias) {
      layer.bias = Tensor({out_c});
      layer.bias.requires_grad = true;
    }
    m.seq.push_back({ItemKind::conv, static_cast<int>(m.convs.size())});
    m.convs.push_back(std::move(layer));
    c = out_c;
    h = (h + 2 * pad - k) / stride + 1;
    w = (w + 2 * pad - k) / stride + 1;
  }

  void bn() {
    BnLayer layer;
    layer.gamma = Tensor::full({c}, 1.f);
    layer.gamma.requires_grad = true;
    layer.beta = Tensor({c});
    layer.beta.requires_grad = true;
    layer.state.running_mean = Tensor({c});
    layer.state.running_var = Tensor::full({c}, 1.f);
    m.seq.push_back({ItemKind::bn, static_cast<int>(m.bns.size())});
    m.bns.push_back(std::move(layer));
  }

  void relu() { m.seq.push_back({ItemKind::relu}); }

  void maxpool() {
    if (h < 2 || w < 2)
      throw ConfigError("input too small for the pooling pyramid");
    m.seq.push_back({ItemKind::maxpool});
    h /= 2;
    w /= 2;
  }

  void dense(DenseLayer& d, int in, int out, const std::string& name) {
    d.w = Tensor({in, out});
    d.w.requires_grad = true;
    init_kaiming(d.w, in, stream(name + ".w"));
    d.b = Tensor({out});
    d.b.requires_grad = true;
  }

  Model finish(int flat_dim, bool with_projection) {
    m.flatten_dim = flat_dim;
    const int e = m.preset.embedding_dim;
    dense(m.embed, flat_dim, e, "embed");
    dense(m.classifier, e, 2, "classifier");
    m.with_projection = with_projection;
    if (with_projection) {
      dense(m.proj1, e, e, "proj1");
      dense(m.proj2, e, m.proj_dim, "proj2");
    }
    return std::move(m);
  }
};

Model build_vgg(const BackbonePreset& p, std::uint64_t seed,
                bool with_projection) {
  Builder b(p, seed);
  const int base[3] = {4, 8, 16};
  for (int stage = 0; stage < 3; ++stage) {
    int width = scaled(base[stage], p.width_multiplier);
    b.conv(width, 3, 1, 1, true);
    b.relu();
    b.conv(width, 3, 1, 1, true);
    b.relu();
    b.maxpool();
  }
  b.m.seq.push_back({ItemKind::flatten});
  return b.finish(b.c * b.h * b.w, with_projection);
}

// Pre-activation residual body: zeroing both conv kernels makes every block
// an exact identity regardless of batchnorm parameters.
Model build_res(const BackbonePreset& p, std::uint64_t seed,
                bool with_projection) {
  Builder b(p, seed);
  int width = scaled(8, p.width_multiplier);
  int blocks = scaled(3, p.depth_multiplier);
  b.conv(width, 3, 2, 1, true);  // stem, halves the spatial dims
  for (int blk = 0; blk < blocks; ++blk) {
    b.m.seq.push_back({ItemKind::res_begin});
    b.bn();
    b.relu();
    b.conv(width, 3, 1, 1, false);
    b.bn();
    b.relu();
    b.conv(width, 3, 1, 1, false);
    b.m.seq.push_back({ItemKind::res_end});
    if (blk + 1 < blocks && b.h >= 8 && b.w >= 8) b.maxpool();
  }
  b.bn();
  b.relu();
  b.m.seq.push_back({ItemKind::gap});
  return b.finish(b.c, with_projection);
}

}  // namespace

Model build_backbone(const BackbonePreset& preset, std::uint64_t seed,
                     bool with_projection) {
  if (preset.input_h < 8 || preset.input_w < 8 || preset.input_c < 1)
    throw ConfigError("backbone input must be at least 8x8 with >= 1 channel");
  if (preset.width_multiplier <= 0.f || preset.depth_multiplier <= 0.f)
    throw ConfigError("backbone multipliers must be positive");
  if (preset.embedding_dim < 1)
    throw ConfigError("embedding_dim must be positive");
  if (preset.family == "mini-vgg")
    return build_vgg(preset, seed, with_projection);
  if (preset.family == "mini-res" || preset.family == "mini-eff")
    return build_res(preset, seed, with_projection);
  throw ConfigError("unknown backbone family: " + preset.family);
}

Var Model::forward_embedding(Graph& g, Var x, bool training) {
  std::vector<Var> res_stack;
  Var cur = x;
  for (const SeqItem& item : seq) {
    switch (item.kind) {
      case ItemKind::conv: {
        ConvLayer& layer = convs[item.idx];
        cur = g.conv2d(cur, g.leaf(layer.kernel), layer.stride, layer.pad);
        if (layer.has_bias) cur = g.channel_bias(cur, g.leaf(layer.bias));
        break;
      }
      case ItemKind::bn: {
        BnLayer& layer = bns[item.idx];
        cur = g.batchnorm(cur, g.leaf(layer.gamma), g.leaf(layer.beta),
                          &layer.state, training);
        break;
      }
      case ItemKind::relu:
        cur = g.relu(cur);
        break;
      case ItemKind::maxpool:
        cur = g.maxpool2(cur);
        break;
      case ItemKind::gap:
        cur = g.avgpool_global(cur);
        break;
      case ItemKind::flatten:
        cur = g.flatten(cur);
        break;
      case ItemKind::res_begin:
        res_stack.push_back(cur);
        break;
      case ItemKind::res_end:
        if (res_stack.empty()) throw UsageError("unbalanced residual block");
        cur = g.add(res_stack.back(), cur);
        res_stack.pop_back();
        break;
    }
  }
  if (!res_stack.empty()) throw UsageError("unbalanced residual block");
  return g.dense(cur, g.leaf(embed.w), g.leaf(embed.b));
}

Var Model::forward_logits(Graph& g, Var x, bool training) {
  Var e = forward_embedding(g, x, training);
  return g.dense(e, g.leaf(classifier.w), g.leaf(classifier.b));
}

Var Model::forward_projection(Graph& g, Var x, bool training) {
  if (!with_projection)
    throw UsageError("model was built without a projection head");
  Var e = forward_embedding(g, x, training);
  Var p = g.dense(e, g.leaf(proj1.w), g.leaf(proj1.b));
  p = g.relu(p);
  p = g.dense(p, g.leaf(proj2.w), g.leaf(proj2.b));
  return g.l2_normalize_rows(p);
}

namespace {

void check_batch(const Model& m, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != m.preset.input_c ||
      batch.dim(2) != m.preset.input_h || batch.dim(3) != m.preset.input_w)
    throw InputError("batch shape does not match the model input size");
}

}  // namespace

Tensor Model::logits(const Tensor& batch) {
  check_batch(*this, batch);
  Graph g;
  Var out = forward_logits(g, g.input(batch), false);
  return g.value(out);
}

Tensor Model::classify(const Tensor& batch) {
  check_batch(*this, batch);
  Graph g;
  Var out = g.softmax(forward_logits(g, g.input(batch), false));
  return g.value(out);
}

Tensor Model::embed_batch(const Tensor& batch) {
  check_batch(*this, batch);
  Graph g;
  Var out = forward_projection(g, g.input(batch), false);
  return g.value(out);
}

std::vector<Tensor*> Model::backbone_params() {
  std::vector<Tensor*> out;
  for (ConvLayer& c : convs) {
    out.push_back(&c.kernel);
    if (c.has_bias) out.push_back(&c.bias);
  }
  for (BnLayer& b : bns) {
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
  }
  out.push_back(&embed.w);
  out.push_back(&embed.b);
  return out;
}

std::vector<Tensor*> Model::classifier_params() {
  return {&classifier.w, &classifier.b};
}

std::vector<Tensor*> Model::projection_params() {
  if (!with_projection)
    throw UsageError("model was built without a projection head");
  return {&proj1.w, &proj1.b, &proj2.w, &proj2.b};
}

std::vector<std::pair<std::string, Tensor*>> Model::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    std::string base = "conv" + std::to_string(i);
    out.emplace_back(base + ".kernel", &convs[i].kernel);
    if (convs[i].has_bias) out.emplace_back(base + ".bias", &convs[i].bias);
  }
  for (std::size_t i = 0; i < bns.size(); ++i) {
    std::string base = "bn" + std::to_string(i);
    out.emplace_back(base + ".gamma", &bns[i].gamma);
    out.emplace_back(base + ".beta", &bns[i].beta);
    out.emplace_back(base + ".running_mean", &bns[i].state.running_mean);
    out.emplace_back(base + ".running_var", &bns[i].state.running_var);
  }
  out.emplace_back("embed.w", &embed.w);
  out.emplace_back("embed.b", &embed.b);
  out.emplace_back("classifier.w", &classifier.w);
  out.emplace_back("classifier.b", &classifier.b);
  if (with_projection) {
    out.emplace_back("proj1.w", &proj1.w);
    out.emplace_back("proj1.b", &proj1.b);
    out.emplace_back("proj2.w", &proj2.w);
    out.emplace_back("proj2.b", &proj2.b);
  }
  return out;
}

long long Model::parameter_count() {
  long long n = 0;
  for (Tensor* t : backbone_params()) n += static_cast<long long>(t->size());
  for (Tensor* t : classifier_params()) n += static_cast<long long>(t->size());
  if (with_projection)
    for (Tensor* t : projection_params())
      n += static_cast<long long>(t->size());
  return n;
}

}  // namespace labelforge
