#pragma once

#include <cstdint>
#include <vector>

#include "labelforge/augment.hpp"
#include "labelforge/dataset.hpp"
#include "labelforge/model.hpp"
#include "labelforge/rng.hpp"
#include "labelforge/sgd.hpp"

namespace labelforge {

// Normalized-temperature cross-entropy over a batch of M unit-norm views.
// partner must be a perfect matching (partner[partner[i]] == i, no fixed
// points): each view has exactly one positive. Mean over all M ordered
// pairs of -log(exp(sim(i,j)/t) / sum_{k != i} exp(sim(i,k)/t)).
Var nt_xent(Graph& g, Var embeddings, const std::vector<int>& partner,
            float temperature);

// Convenience evaluation for a plain tensor (no gradients kept).
double nt_xent_value(const Tensor& embeddings, const std::vector<int>& partner,
                     float temperature);

struct ContrastiveConfig {
  float temperature = 0.5f;
  int batch_views = 64;  // M, two augmented views per drawn sample
  int epochs = 30;
  AugmentPolicy policy;
  SgdConfig sgd{0.005f, 0.9f, 1e-4f};
};

// SimCLR-style pretraining over backbone + projection head. Labels are
// never read. Returns per-epoch mean loss; the model is updated in place.
std::vector<double> pretrain_contrastive(Model& model, const Dataset& data,
                                         const ContrastiveConfig& config,
                                         RngStream rng);

struct KMeansResult {
  std::vector<int> assignment;      // cluster id per point
  std::vector<float> centroids;     // 2 x d row-major
  int iterations = 0;
  int restarts = 0;
};

// Two-means with k-means++ seeding, up to 50 Lloyd iterations or centroid
// movement below 1e-6. An empty cluster triggers reseeding, at most 5 times.
KMeansResult kmeans2(const std::vector<float>& points, std::size_t n,
                     std::size_t dim, RngStream rng);

// Rows of the projection space for every sample, eval mode.
Tensor embed_dataset(Model& model, const Dataset& ds, int batch_size = 128);

// Clusters the embeddings of `unlabeled`, then maps the two clusters onto
// classes so that agreement with the labeled probe split is maximal.
// Returns the samples with assigned_label set and label_source=cluster.
Dataset cluster_label(Model& encoder, const Dataset& unlabeled,
                      const Dataset& probe, RngStream rng);

}  // namespace labelforge
