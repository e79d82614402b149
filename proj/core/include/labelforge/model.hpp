#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "labelforge/graph.hpp"
#include "labelforge/tensor.hpp"

namespace labelforge {

// Three miniature CNN families. mini-eff is the mini-res base under compound
// width/depth scaling; its preset defaults apply one scaling step.
struct BackbonePreset {
  std::string family = "mini-vgg";  // mini-vgg | mini-res | mini-eff
  int input_h = 32;
  int input_w = 32;
  int input_c = 3;
  float width_multiplier = 1.0f;
  float depth_multiplier = 1.0f;
  int embedding_dim = 128;
};

BackbonePreset preset_from_name(const std::string& name);

struct ConvLayer {
  Tensor kernel;  // [F,C,kh,kw]
  Tensor bias;    // [F], unused when has_bias is false
  int stride = 1;
  int pad = 1;
  bool has_bias = true;
};

struct BnLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;
};

struct DenseLayer {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
};

enum class ItemKind {
  conv,
  bn,
  relu,
  maxpool,
  gap,
  flatten,
  res_begin,  // push current activation
  res_end,    // add pushed activation (identity shortcut)
};

struct SeqItem {
  ItemKind kind;
  int idx = -1;  // index into convs / bns for parameterized items
};

// A built network: backbone sequence to an embedding vector, a 2-class
// classifier head, and an optional contrastive projection head. Value
// semantics; copying a model copies all parameters and batchnorm state.
class Model {
 public:
  BackbonePreset preset;
  std::uint64_t seed = 0;

  std::vector<ConvLayer> convs;
  std::vector<BnLayer> bns;
  std::vector<SeqItem> seq;
  int flatten_dim = 0;  // input width of the embed layer

  DenseLayer embed;       // flatten/gap output -> embedding_dim
  DenseLayer classifier;  // embedding_dim -> 2
  bool with_projection = false;
  DenseLayer proj1;  // embedding_dim -> embedding_dim
  DenseLayer proj2;  // embedding_dim -> proj_dim
  int proj_dim = 64;

  // Graph-building forward paths. x must be an input/leaf of g with shape
  // [N, input_c, input_h, input_w].
  Var forward_embedding(Graph& g, Var x, bool training);
  Var forward_logits(Graph& g, Var x, bool training);
  Var forward_projection(Graph& g, Var x, bool training);

  // Inference helpers (eval mode, running batchnorm statistics).
  Tensor classify(const Tensor& batch);      // softmax probabilities [N,2]
  Tensor logits(const Tensor& batch);        // [N,2]
  Tensor embed_batch(const Tensor& batch);   // unit rows [N, proj_dim]

  std::vector<Tensor*> backbone_params();
  std::vector<Tensor*> classifier_params();
  std::vector<Tensor*> projection_params();
  // Everything persisted in a checkpoint, including running statistics.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  long long parameter_count();
};

// Deterministic architecture + initialization from (preset, seed).
// Kaiming-uniform weights, zero biases, unit batchnorm scale.
Model build_backbone(const BackbonePreset& preset, std::uint64_t seed,
                     bool with_projection = true);

}  // namespace labelforge
