#include "labelforge/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "labelforge/errors.hpp"

namespace labelforge {

Var nt_xent(Graph& g, Var embeddings, const std::vector<int>& partner,
            float temperature) {
  if (!(temperature > 0.f)) throw ConfigError("temperature must be positive");
  const Tensor& emb = g.value(embeddings);
  if (emb.rank() != 2) throw UsageError("nt_xent expects [M, d] embeddings");
  const int m = emb.dim(0);
  if (m < 2 || m % 2 != 0)
    throw UsageError("nt_xent needs an even number of views, got " +
                     std::to_string(m));
  if (static_cast<int>(partner.size()) != m)
    throw UsageError("nt_xent pairing must cover every view");
  for (int i = 0; i < m; ++i) {
    if (partner[i] < 0 || partner[i] >= m || partner[i] == i ||
        partner[partner[i]] != i)
      throw UsageError("nt_xent pairing must be a perfect matching");
  }
  Var sim = g.matmul_nt(embeddings, embeddings);
  Var scaled = g.scale(sim, 1.0f / temperature);
  return g.masked_softmax_ce(scaled, partner);
}

double nt_xent_value(const Tensor& embeddings, const std::vector<int>& partner,
                     float temperature) {
  Graph g;
  Var loss = nt_xent(g, g.input(embeddings), partner, temperature);
  return g.value(loss)[0];
}

std::vector<double> pretrain_contrastive(Model& model, const Dataset& data,
                                         const ContrastiveConfig& config,
                                         RngStream rng) {
  if (config.batch_views < 2 || config.batch_views % 2 != 0)
    throw ConfigError("batch_views must be even and >= 2");
  if (config.epochs < 0) throw ConfigError("epoch count must be >= 0");
  const std::size_t half = static_cast<std::size_t>(config.batch_views) / 2;
  if (data.size() < half)
    throw UsageError("dataset smaller than half the contrastive batch");

  auto params = model.backbone_params();
  for (Tensor* p : model.projection_params()) params.push_back(p);
  SgdOptimizer opt(params, config.sgd);

  const RngStream aug_root = rng.derive("views");
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuf = rng.derive("order", static_cast<std::uint64_t>(epoch));
    shuf.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += half) {
      const std::size_t stop = std::min(n, start + half);
      const int m = static_cast<int>(2 * (stop - start));
      if (m < 2) break;
      // two independently augmented views per sample, interleaved so that
      // partner(i) = i xor 1
      Dataset views;
      views.samples.reserve(static_cast<std::size_t>(m));
      for (std::size_t j = start; j < stop; ++j) {
        const Sample& s = data.samples[order[j]];
        for (std::uint64_t v = 0; v < 2; ++v)
          views.samples.push_back(augment(
              s, config.policy,
              aug_root.derive(s.id, static_cast<std::uint64_t>(epoch), v)));
      }
      std::vector<std::size_t> idx(static_cast<std::size_t>(m));
      std::iota(idx.begin(), idx.end(), 0);
      std::vector<int> partner(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) partner[static_cast<std::size_t>(i)] = i ^ 1;

      Graph g;
      Var emb = model.forward_projection(g, g.input(make_batch(views, idx)), true);
      Var loss = nt_xent(g, emb, partner, config.temperature);
      g.backward(loss);
      loss_sum += g.value(loss)[0];
      ++steps;
      opt.step();
    }
    history.push_back(steps ? loss_sum / static_cast<double>(steps) : 0.0);
  }
  return history;
}

namespace {

double sq_dist(const float* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - b[i];
    s += diff * diff;
  }
  return s;
}

bool lloyd(const std::vector<float>& pts, std::size_t n, std::size_t d,
           RngStream& rng, KMeansResult& out) {
  // k-means++ seeding: first centroid uniform, second proportional to
  // squared distance from the first
  const float* base = pts.data();
  std::size_t c0 = rng.index(n);
  std::vector<double> d2(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = sq_dist(base + i * d, base + c0 * d, d);
    total += d2[i];
  }
  std::size_t c1 = c0;
  if (total > 0.0) {
    double r = rng.uniform_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= r) {
        c1 = i;
        break;
      }
    }
  } else {
    c1 = (c0 + 1) % n;  // all points identical, degenerate but defined
  }

  std::vector<float> cent(2 * d);
  std::copy(base + c0 * d, base + (c0 + 1) * d, cent.begin());
  std::copy(base + c1 * d, base + (c1 + 1) * d, cent.begin() + d);

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    std::size_t counts[2] = {0, 0};
    std::vector<double> sums(2 * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double e0 = sq_dist(base + i * d, cent.data(), d);
      const double e1 = sq_dist(base + i * d, cent.data() + d, d);
      const int a = e1 < e0 ? 1 : 0;
      assign[i] = a;
      ++counts[a];
      for (std::size_t j = 0; j < d; ++j)
        sums[static_cast<std::size_t>(a) * d + j] += base[i * d + j];
    }
    if (counts[0] == 0 || counts[1] == 0) return false;  // caller reseeds
    double shift = 0.0;
    for (int cidx = 0; cidx < 2; ++cidx)
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t at = static_cast<std::size_t>(cidx) * d + j;
        const float next =
            static_cast<float>(sums[at] / static_cast<double>(counts[cidx]));
        const double delta = static_cast<double>(next) - cent[at];
        shift += delta * delta;
        cent[at] = next;
      }
    out.iterations = iter + 1;
    if (shift < 1e-6) break;
  }
  out.assignment = std::move(assign);
  out.centroids = std::move(cent);
  return true;
}

}  // namespace

KMeansResult kmeans2(const std::vector<float>& points, std::size_t n,
                     std::size_t dim, RngStream rng) {
  if (n < 2) throw UsageError("k-means needs at least 2 points");
  if (dim < 1 || points.size() != n * dim)
    throw UsageError("k-means point buffer does not match n x dim");
  KMeansResult out;
  for (int attempt = 0; attempt <= 5; ++attempt) {
    RngStream seed_rng = rng.derive("seeding", static_cast<std::uint64_t>(attempt));
    out.restarts = attempt;
    if (lloyd(points, n, dim, seed_rng, out)) return out;
  }
  throw InputError("k-means kept producing an empty cluster after 5 restarts");
}

Tensor embed_dataset(Model& model, const Dataset& ds, int batch_size) {
  if (ds.empty()) throw UsageError("embedding an empty dataset");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  Tensor out;
  std::vector<float> rows;
  int dim = 0;
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop =
        std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor emb = model.embed_batch(make_batch(ds, idx));
    dim = emb.dim(1);
    rows.insert(rows.end(), emb.data(), emb.data() + emb.size());
  }
  return Tensor({static_cast<int>(ds.size()), dim}, std::move(rows));
}

Dataset cluster_label(Model& encoder, const Dataset& unlabeled,
                      const Dataset& probe, RngStream rng) {
  if (unlabeled.size() < 2)
    throw UsageError("cluster labeling needs at least 2 samples");
  int probe_b = probe.count_assigned(kBenign);
  int probe_m = probe.count_assigned(kMalignant);
  if (probe_b < 1 || probe_m < 1)
    throw UsageError("probe split must contain both classes");

  Tensor emb = embed_dataset(encoder, unlabeled);
  const std::size_t n = unlabeled.size();
  const std::size_t d = static_cast<std::size_t>(emb.dim(1));
  KMeansResult km = kmeans2(emb.values(), n, d, rng.derive("kmeans"));

  // nearest centroid per probe sample, then pick the cluster->class map
  // with the higher probe agreement; ties map cluster 0 to Benign
  Tensor pemb = embed_dataset(encoder, probe);
  long long agree_direct = 0;  // cluster0=B, cluster1=M
  long long counted = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    if (!probe.samples[i].assigned_label) continue;
    const float* row = pemb.data() + i * d;
    const double e0 = sq_dist(row, km.centroids.data(), d);
    const double e1 = sq_dist(row, km.centroids.data() + d, d);
    const int cluster = e1 < e0 ? 1 : 0;
    const int direct_cls = cluster == 0 ? kBenign : kMalignant;
    if (*probe.samples[i].assigned_label == direct_cls) ++agree_direct;
    ++counted;
  }
  const bool direct = 2 * agree_direct >= counted;

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Dataset out = unlabeled.subset(all);
  for (std::size_t i = 0; i < n; ++i) {
    const int cluster = km.assignment[i];
    int cls;
    if (direct)
      cls = cluster == 0 ? kBenign : kMalignant;
    else
      cls = cluster == 0 ? kMalignant : kBenign;
    out.samples[i].assigned_label = cls;
    out.samples[i].label_source = LabelSource::cluster;
  }
  return out;
}

}  // namespace labelforge
