#include "labelforge/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <utility>

#include <Eigen/Core>

#include "labelforge/errors.hpp"

namespace labelforge {

using MatMap = Eigen::Map<
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Graph::Node& Graph::node(Var v) {
  if (!v.valid() || v.node >= static_cast<int>(nodes_.size()))
    throw UsageError("invalid graph handle");
  return nodes_[v.node];
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.node >= static_cast<int>(nodes_.size()))
    throw UsageError("invalid graph handle");
  return nodes_[v.node];
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
Tensor& Graph::mutable_value(Var v) { return node(v).value; }

Var Graph::leaf(Tensor& t) {
  auto it = leaf_index_.find(&t);
  if (it != leaf_index_.end()) return Var{it->second};
  Node n;
  n.kind = OpKind::leaf;
  n.value = t;  // copy; sgd updates are picked up on the next graph build
  n.value.grad.clear();
  n.external = &t;
  Var v = push(std::move(n));
  leaf_index_[&t] = v.node;
  return v;
}

Var Graph::input(Tensor value) {
  Node n;
  n.kind = OpKind::input;
  n.value = std::move(value);
  n.value.grad.clear();
  return push(std::move(n));
}

namespace {

void accumulate(std::vector<float>& dst, const std::vector<float>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise and shape ops

Var Graph::relu(Var x) {
  const Tensor& in = value(x);
  Node n;
  n.kind = OpKind::relu;
  n.inputs = {x.node};
  n.value = Tensor(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i)
    n.value[i] = in[i] > 0.f ? in[i] : 0.f;
  n.backprop = [](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    Node& src = g.nodes_[self.inputs[0]];
    for (std::size_t i = 0; i < self.value.size(); ++i)
      if (self.value[i] > 0.f) src.value.grad[i] += self.value.grad[i];
  };
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw InputError("add: shape mismatch");
  Node n;
  n.kind = OpKind::add;
  n.inputs = {a.node, b.node};
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] + tb[i];
  n.backprop = [](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    accumulate(g.grad_of(self.inputs[0]), self.value.grad);
    accumulate(g.grad_of(self.inputs[1]), self.value.grad);
  };
  return push(std::move(n));
}

Var Graph::scale(Var x, float factor) {
  const Tensor& in = value(x);
  Node n;
  n.kind = OpKind::scale;
  n.inputs = {x.node};
  n.value = Tensor(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) n.value[i] = factor * in[i];
  n.backprop = [factor](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    std::vector<float>& gin = g.grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < gin.size(); ++i)
      gin[i] += factor * self.value.grad[i];
  };
  return push(std::move(n));
}

Var Graph::flatten(Var x) {
  const Tensor& in = value(x);
  if (in.rank() < 2) throw ConfigError("flatten: input must have rank >= 2");
  int n0 = in.dim(0);
  int rest = static_cast<int>(in.size()) / n0;
  Node n;
  n.kind = OpKind::flatten;
  n.inputs = {x.node};
  n.value = Tensor({n0, rest}, in.values());
  n.backprop = [](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    accumulate(g.grad_of(self.inputs[0]), self.value.grad);
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// dense / matmul

Var Graph::dense(Var x, Var w, Var b) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  const Tensor& tb = value(b);
  if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1)
    throw ConfigError("dense: expected x[N,I], w[I,O], b[O]");
  int N = tx.dim(0), I = tx.dim(1), O = tw.dim(1);
  if (tw.dim(0) != I || tb.dim(0) != O)
    throw ConfigError("dense: weight shape incompatible with input");
  Node n;
  n.kind = OpKind::dense;
  n.inputs = {x.node, w.node, b.node};
  n.value = Tensor({N, O});
  {
    ConstMatMap X(tx.data(), N, I), W(tw.data(), I, O);
    MatMap Y(n.value.data(), N, O);
    Y.noalias() = X * W;
    for (int r = 0; r < N; ++r)
      for (int c = 0; c < O; ++c) n.value[r * O + c] += tb[c];
  }
  n.backprop = [N, I, O](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    Node& nx = g.nodes_[self.inputs[0]];
    Node& nw = g.nodes_[self.inputs[1]];
    Node& nb = g.nodes_[self.inputs[2]];
    ConstMatMap G(self.value.grad.data(), N, O);
    ConstMatMap X(nx.value.data(), N, I), W(nw.value.data(), I, O);
    MatMap GX(nx.value.grad.data(), N, I), GW(nw.value.grad.data(), I, O);
    GX.noalias() += G * W.transpose();
    GW.noalias() += X.transpose() * G;
    for (int c = 0; c < O; ++c) {
      double s = 0.0;
      for (int r = 0; r < N; ++r) s += self.value.grad[r * O + c];
      nb.value.grad[c] += static_cast<float>(s);
    }
  };
  return push(std::move(n));
}

Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(1))
    throw ConfigError("matmul_nt: expected [M,d] x [K,d]");
  int M = ta.dim(0), K = tb.dim(0), d = ta.dim(1);
  Node n;
  n.kind = OpKind::matmul_nt;
  n.inputs = {a.node, b.node};
  n.value = Tensor({M, K});
  {
    ConstMatMap A(ta.data(), M, d), B(tb.data(), K, d);
    MatMap Y(n.value.data(), M, K);
    Y.noalias() = A * B.transpose();
  }
  n.backprop = [M, K, d](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    Node& na = g.nodes_[self.inputs[0]];
    Node& nb = g.nodes_[self.inputs[1]];
    ConstMatMap G(self.value.grad.data(), M, K);
    ConstMatMap A(na.value.data(), M, d), B(nb.value.data(), K, d);
    MatMap GA(na.value.grad.data(), M, d);
    GA.noalias() += G * B;
    MatMap GB(nb.value.grad.data(), K, d);
    GB.noalias() += G.transpose() * A;
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// pooling

Var Graph::maxpool2(Var x) {
  const Tensor& in = value(x);
  if (in.rank() != 4) throw ConfigError("maxpool2: expected [N,C,H,W]");
  int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  if (H < 2 || W < 2) throw ConfigError("maxpool2: spatial dims must be >= 2");
  int OH = H / 2, OW = W / 2;
  Node n;
  n.kind = OpKind::maxpool2;
  n.inputs = {x.node};
  n.value = Tensor({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::size_t>>(n.value.size());
  const float* src = in.data();
  std::size_t o = 0;
  for (int nn = 0; nn < N; ++nn)
    for (int c = 0; c < C; ++c) {
      std::size_t plane = (static_cast<std::size_t>(nn) * C + c) *
                          static_cast<std::size_t>(H) * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++o) {
          std::size_t base = plane + static_cast<std::size_t>(2 * oh) * W + 2 * ow;
          std::size_t best = base;
          float bv = src[base];
          for (std::size_t cand : {base + 1, base + W, base + W + 1}) {
            if (src[cand] > bv) {
              bv = src[cand];
              best = cand;
            }
          }
          n.value[o] = bv;
          (*argmax)[o] = best;
        }
    }
  n.backprop = [argmax](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    std::vector<float>& gin = g.grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < self.value.size(); ++i)
      gin[(*argmax)[i]] += self.value.grad[i];
  };
  return push(std::move(n));
}

Var Graph::avgpool_global(Var x) {
  const Tensor& in = value(x);
  if (in.rank() != 4) throw ConfigError("avgpool_global: expected [N,C,H,W]");
  int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  int area = H * W;
  Node n;
  n.kind = OpKind::avgpool_global;
  n.inputs = {x.node};
  n.value = Tensor({N, C});
  for (int nn = 0; nn < N; ++nn)
    for (int c = 0; c < C; ++c) {
      const float* p = in.data() + (static_cast<std::size_t>(nn) * C + c) * area;
      double s = 0.0;
      for (int i = 0; i < area; ++i) s += p[i];
      n.value[nn * C + c] = static_cast<float>(s / area);
    }
  n.backprop = [N, C, area](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    std::vector<float>& gin = g.grad_of(self.inputs[0]);
    for (int nn = 0; nn < N; ++nn)
      for (int c = 0; c < C; ++c) {
        float gv = self.value.grad[nn * C + c] / static_cast<float>(area);
        float* p = gin.data() + (static_cast<std::size_t>(nn) * C + c) * area;
        for (int i = 0; i < area; ++i) p[i] += gv;
      }
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// channel bias and batchnorm

Var Graph::channel_bias(Var x, Var bias) {
  const Tensor& in = value(x);
  const Tensor& tb = value(bias);
  if (in.rank() != 4 || tb.rank() != 1 || tb.dim(0) != in.dim(1))
    throw ConfigError("channel_bias: expected x[N,C,H,W], bias[C]");
  int N = in.dim(0), C = in.dim(1), area = in.dim(2) * in.dim(3);
  Node n;
  n.kind = OpKind::channel_bias;
  n.inputs = {x.node, bias.node};
  n.value = Tensor(in.shape());
  for (int nn = 0; nn < N; ++nn)
    for (int c = 0; c < C; ++c) {
      std::size_t base = (static_cast<std::size_t>(nn) * C + c) * area;
      float b = tb[c];
      for (int i = 0; i < area; ++i) n.value[base + i] = in[base + i] + b;
    }
  n.backprop = [N, C, area](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    accumulate(g.grad_of(self.inputs[0]), self.value.grad);
    std::vector<float>& gb = g.grad_of(self.inputs[1]);
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int nn = 0; nn < N; ++nn) {
        const float* p = self.value.grad.data() +
                         (static_cast<std::size_t>(nn) * C + c) * area;
        for (int i = 0; i < area; ++i) s += p[i];
      }
      gb[c] += static_cast<float>(s);
    }
  };
  return push(std::move(n));
}

Var Graph::batchnorm(Var x, Var gamma, Var beta, BatchNormState* state,
                     bool training) {
  const Tensor& in = value(x);
  if (in.rank() != 4 && in.rank() != 2)
    throw ConfigError("batchnorm: expected rank-4 or rank-2 input");
  int C = in.rank() == 4 ? in.dim(1) : in.dim(1);
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  if (tg.rank() != 1 || tg.dim(0) != C || tb.rank() != 1 || tb.dim(0) != C)
    throw ConfigError("batchnorm: gamma/beta must have one entry per channel");
  if (state && (state->running_mean.size() != static_cast<std::size_t>(C) ||
                state->running_var.size() != static_cast<std::size_t>(C)))
    throw ConfigError("batchnorm: running statistics have wrong length");

  constexpr float kEps = 1e-5f;
  constexpr float kMomentum = 0.9f;
  int N = in.dim(0);
  int area = in.rank() == 4 ? in.dim(2) * in.dim(3) : 1;
  int m = N * area;  // samples per channel

  // gather per-channel mean/var (batch stats when training, running otherwise)
  std::vector<float> mean(C), inv_std(C);
  auto channel_ptr = [&](const float* base, int nn, int c) {
    return in.rank() == 4
               ? base + (static_cast<std::size_t>(nn) * C + c) * area
               : base + static_cast<std::size_t>(nn) * C + c;
  };
  for (int c = 0; c < C; ++c) {
    float mu, var;
    if (training || !state) {
      double s = 0.0, s2 = 0.0;
      for (int nn = 0; nn < N; ++nn) {
        const float* p = channel_ptr(in.data(), nn, c);
        for (int i = 0; i < area; ++i) {
          s += p[i];
          s2 += static_cast<double>(p[i]) * p[i];
        }
      }
      mu = static_cast<float>(s / m);
      var = static_cast<float>(s2 / m - (s / m) * (s / m));
      if (var < 0.f) var = 0.f;
      if (state) {
        state->running_mean[c] = kMomentum * state->running_mean[c] +
                                 (1.f - kMomentum) * mu;
        state->running_var[c] =
            kMomentum * state->running_var[c] + (1.f - kMomentum) * var;
      }
    } else {
      mu = state->running_mean[c];
      var = state->running_var[c];
    }
    mean[c] = mu;
    inv_std[c] = 1.f / std::sqrt(var + kEps);
  }

  Node n;
  n.kind = OpKind::batchnorm;
  n.inputs = {x.node, gamma.node, beta.node};
  n.value = Tensor(in.shape());
  auto xhat = std::make_shared<std::vector<float>>(in.size());
  for (int c = 0; c < C; ++c) {
    float mu = mean[c], is = inv_std[c], gmul = tg[c], badd = tb[c];
    for (int nn = 0; nn < N; ++nn) {
      const float* p = channel_ptr(in.data(), nn, c);
      std::size_t off = static_cast<std::size_t>(p - in.data());
      for (int i = 0; i < area; ++i) {
        float h = (p[i] - mu) * is;
        (*xhat)[off + i] = h;
        n.value[off + i] = gmul * h + badd;
      }
    }
  }
  auto istd = std::make_shared<std::vector<float>>(std::move(inv_std));
  bool batch_stats = training || !state;
  n.backprop = [N, C, area, m, xhat, istd, batch_stats](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    Node& nx = g.nodes_[self.inputs[0]];
    Node& ng = g.nodes_[self.inputs[1]];
    Node& nb = g.nodes_[self.inputs[2]];
    bool rank4 = nx.value.rank() == 4;
    for (int c = 0; c < C; ++c) {
      double sum_g = 0.0, sum_gh = 0.0;
      for (int nn = 0; nn < N; ++nn) {
        std::size_t off = rank4 ? (static_cast<std::size_t>(nn) * C + c) * area
                                : static_cast<std::size_t>(nn) * C + c;
        for (int i = 0; i < area; ++i) {
          float gv = self.value.grad[off + i];
          sum_g += gv;
          sum_gh += static_cast<double>(gv) * (*xhat)[off + i];
        }
      }
      ng.value.grad[c] += static_cast<float>(sum_gh);
      nb.value.grad[c] += static_cast<float>(sum_g);
      float gmul = ng.value[c] * (*istd)[c];
      for (int nn = 0; nn < N; ++nn) {
        std::size_t off = rank4 ? (static_cast<std::size_t>(nn) * C + c) * area
                                : static_cast<std::size_t>(nn) * C + c;
        for (int i = 0; i < area; ++i) {
          float gv = self.value.grad[off + i];
          if (batch_stats) {
            nx.value.grad[off + i] += gmul * (gv -
                static_cast<float>(sum_g) / m -
                (*xhat)[off + i] * static_cast<float>(sum_gh) / m);
          } else {
            // inference stats are constants
            nx.value.grad[off + i] += gmul * gv;
          }
        }
      }
    }
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// softmax and losses

Var Graph::softmax(Var x) {
  const Tensor& in = value(x);
  if (in.rank() != 2) throw ConfigError("softmax: expected [N,C]");
  int N = in.dim(0), C = in.dim(1);
  Node n;
  n.kind = OpKind::softmax;
  n.inputs = {x.node};
  n.value = Tensor(in.shape());
  for (int r = 0; r < N; ++r) {
    const float* row = in.data() + static_cast<std::size_t>(r) * C;
    float mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    for (int c = 0; c < C; ++c)
      n.value[static_cast<std::size_t>(r) * C + c] =
          static_cast<float>(std::exp(static_cast<double>(row[c] - mx)) / denom);
  }
  n.backprop = [N, C](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    std::vector<float>& gin = g.grad_of(self.inputs[0]);
    for (int r = 0; r < N; ++r) {
      std::size_t base = static_cast<std::size_t>(r) * C;
      double dot = 0.0;
      for (int c = 0; c < C; ++c)
        dot += static_cast<double>(self.value.grad[base + c]) * self.value[base + c];
      for (int c = 0; c < C; ++c)
        gin[base + c] += self.value[base + c] *
                         (self.value.grad[base + c] - static_cast<float>(dot));
    }
  };
  return push(std::move(n));
}

Var Graph::softmax_cross_entropy(Var logits, std::vector<int> targets) {
  const Tensor& in = value(logits);
  if (in.rank() != 2) throw ConfigError("softmax_cross_entropy: expected [N,C]");
  int N = in.dim(0), C = in.dim(1);
  if (static_cast<int>(targets.size()) != N)
    throw InputError("softmax_cross_entropy: one target per row required");
  for (int t : targets)
    if (t < 0 || t >= C)
      throw InputError("softmax_cross_entropy: target out of range");

  Node n;
  n.kind = OpKind::softmax_ce;
  n.inputs = {logits.node};
  auto probs = std::make_shared<std::vector<float>>(in.size());
  double total = 0.0;
  for (int r = 0; r < N; ++r) {
    const float* row = in.data() + static_cast<std::size_t>(r) * C;
    float mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    for (int c = 0; c < C; ++c)
      (*probs)[static_cast<std::size_t>(r) * C + c] =
          static_cast<float>(std::exp(static_cast<double>(row[c] - mx)) / denom);
    // -(z_t - m) + log(sum exp(z - m)), all in double to keep tiny losses
    total += std::log(denom) - static_cast<double>(row[targets[r]] - mx);
  }
  n.value = Tensor::scalar(static_cast<float>(total / N));
  auto tg = std::make_shared<std::vector<int>>(std::move(targets));
  n.backprop = [N, C, probs, tg](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    float go = self.value.grad[0];
    std::vector<float>& gin = g.grad_of(self.inputs[0]);
    for (int r = 0; r < N; ++r) {
      std::size_t base = static_cast<std::size_t>(r) * C;
      for (int c = 0; c < C; ++c) {
        float p = (*probs)[base + c];
        float delta = (c == (*tg)[r]) ? 1.f : 0.f;
        gin[base + c] += go * (p - delta) / N;
      }
    }
  };
  return push(std::move(n));
}

Var Graph::l2_normalize_rows(Var x) {
  const Tensor& in = value(x);
  if (in.rank() != 2) throw ConfigError("l2_normalize_rows: expected [N,d]");
  int N = in.dim(0), d = in.dim(1);
  Node n;
  n.kind = OpKind::l2norm_rows;
  n.inputs = {x.node};
  n.value = Tensor(in.shape());
  auto inv_norm = std::make_shared<std::vector<float>>(N);
  for (int r = 0; r < N; ++r) {
    const float* row = in.data() + static_cast<std::size_t>(r) * d;
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += static_cast<double>(row[c]) * row[c];
    float inv = static_cast<float>(1.0 / std::sqrt(s + 1e-12));
    (*inv_norm)[r] = inv;
    for (int c = 0; c < d; ++c)
      n.value[static_cast<std::size_t>(r) * d + c] = row[c] * inv;
  }
  n.backprop = [N, d, inv_norm](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    std::vector<float>& gin = g.grad_of(self.inputs[0]);
    for (int r = 0; r < N; ++r) {
      std::size_t base = static_cast<std::size_t>(r) * d;
      double dot = 0.0;
      for (int c = 0; c < d; ++c)
        dot += static_cast<double>(self.value.grad[base + c]) * self.value[base + c];
      for (int c = 0; c < d; ++c)
        gin[base + c] += (*inv_norm)[r] *
                         (self.value.grad[base + c] -
                          self.value[base + c] * static_cast<float>(dot));
    }
  };
  return push(std::move(n));
}

Var Graph::masked_softmax_ce(Var sim, std::vector<int> targets) {
  const Tensor& in = value(sim);
  if (in.rank() != 2 || in.dim(0) != in.dim(1))
    throw ConfigError("masked_softmax_ce: expected square similarity matrix");
  int M = in.dim(0);
  if (M < 2) throw UsageError("masked_softmax_ce: need at least two rows");
  if (static_cast<int>(targets.size()) != M)
    throw InputError("masked_softmax_ce: one target per row required");
  for (int r = 0; r < M; ++r)
    if (targets[r] < 0 || targets[r] >= M || targets[r] == r)
      throw UsageError("masked_softmax_ce: target must be another row");

  Node n;
  n.kind = OpKind::masked_softmax_ce;
  n.inputs = {sim.node};
  auto probs = std::make_shared<std::vector<float>>(in.size(), 0.f);
  double total = 0.0;
  for (int r = 0; r < M; ++r) {
    const float* row = in.data() + static_cast<std::size_t>(r) * M;
    float mx = -std::numeric_limits<float>::infinity();
    for (int c = 0; c < M; ++c)
      if (c != r) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < M; ++c)
      if (c != r) denom += std::exp(static_cast<double>(row[c] - mx));
    for (int c = 0; c < M; ++c)
      if (c != r)
        (*probs)[static_cast<std::size_t>(r) * M + c] =
            static_cast<float>(std::exp(static_cast<double>(row[c] - mx)) / denom);
    total += std::log(denom) - static_cast<double>(row[targets[r]] - mx);
  }
  n.value = Tensor::scalar(static_cast<float>(total / M));
  auto tg = std::make_shared<std::vector<int>>(std::move(targets));
  n.backprop = [M, probs, tg](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    float go = self.value.grad[0];
    std::vector<float>& gin = g.grad_of(self.inputs[0]);
    for (int r = 0; r < M; ++r) {
      std::size_t base = static_cast<std::size_t>(r) * M;
      for (int c = 0; c < M; ++c) {
        if (c == r) continue;
        float p = (*probs)[base + c];
        float delta = (c == (*tg)[r]) ? 1.f : 0.f;
        gin[base + c] += go * (p - delta) / M;
      }
    }
  };
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// backward driver

void Graph::backward(Var loss) {
  Node& ln = node(loss);
  if (ln.value.size() != 1)
    throw UsageError("backward: loss must be a scalar");

  std::vector<char> reachable(nodes_.size(), 0);
  reachable[loss.node] = 1;
  for (int i = loss.node; i >= 0; --i) {
    if (!reachable[i]) continue;
    for (int in : nodes_[i].inputs) reachable[in] = 1;
  }
  for (int i = 0; i <= loss.node; ++i)
    if (reachable[i]) nodes_[i].value.ensure_grad();

  nodes_[loss.node].value.grad[0] = 1.f;
  for (int i = loss.node; i >= 0; --i) {
    if (reachable[i] && nodes_[i].backprop) nodes_[i].backprop(*this, i);
  }

  // every registered parameter gets a populated grad buffer, zero when the
  // parameter was unreachable from the loss
  for (Node& n : nodes_) {
    if (!n.external || !n.external->requires_grad) continue;
    n.external->ensure_grad();
    if (!n.value.grad.empty()) accumulate(n.external->grad, n.value.grad);
  }
}

// ---------------------------------------------------------------------------
// layer dispatcher

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "relu") return LayerKind::relu;
  if (name == "maxpool2") return LayerKind::maxpool2;
  if (name == "avgpool_global") return LayerKind::avgpool_global;
  if (name == "batchnorm") return LayerKind::batchnorm;
  if (name == "flatten") return LayerKind::flatten;
  if (name == "softmax") return LayerKind::softmax;
  throw ConfigError("unknown layer kind: " + name);
}

Var layer_forward(Graph& g, LayerKind kind, Var input,
                  const std::vector<Var>& params, BatchNormState* bn_state,
                  bool training) {
  switch (kind) {
    case LayerKind::dense:
      if (params.size() != 2) throw ConfigError("dense needs {w, b} params");
      return g.dense(input, params[0], params[1]);
    case LayerKind::relu:
      return g.relu(input);
    case LayerKind::maxpool2:
      return g.maxpool2(input);
    case LayerKind::avgpool_global:
      return g.avgpool_global(input);
    case LayerKind::batchnorm:
      if (params.size() != 2)
        throw ConfigError("batchnorm needs {gamma, beta} params");
      return g.batchnorm(input, params[0], params[1], bn_state, training);
    case LayerKind::flatten:
      return g.flatten(input);
    case LayerKind::softmax:
      return g.softmax(input);
  }
  throw ConfigError("unknown layer kind");
}

}  // namespace labelforge
