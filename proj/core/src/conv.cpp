#include <memory>
#include <vector>

#include <Eigen/Core>

#include "labelforge/errors.hpp"
#include "labelforge/graph.hpp"

namespace labelforge {

namespace {

using Mat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct ConvDims {
  int N, C, H, W;
  int F, kh, kw;
  int stride, padding;
  int OH, OW;
  int ckk() const { return C * kh * kw; }
  std::size_t cols() const {
    return static_cast<std::size_t>(N) * OH * OW;
  }
};

// col[(c*kh+ki)*kw+kj, (n*OH+oh)*OW+ow] = x[n, c, oh*s-p+ki, ow*s-p+kj]
void im2col(const float* x, const ConvDims& d, float* col) {
  const std::size_t ncols = d.cols();
  for (int c = 0; c < d.C; ++c)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        float* row = col + (static_cast<std::size_t>(c) * d.kh + ki) * d.kw * ncols +
                     static_cast<std::size_t>(kj) * ncols;
        std::size_t o = 0;
        for (int n = 0; n < d.N; ++n) {
          const float* plane =
              x + (static_cast<std::size_t>(n) * d.C + c) * d.H * d.W;
          for (int oh = 0; oh < d.OH; ++oh) {
            int h = oh * d.stride - d.padding + ki;
            bool hin = h >= 0 && h < d.H;
            for (int ow = 0; ow < d.OW; ++ow, ++o) {
              int w = ow * d.stride - d.padding + kj;
              row[o] = (hin && w >= 0 && w < d.W)
                           ? plane[static_cast<std::size_t>(h) * d.W + w]
                           : 0.f;
            }
          }
        }
      }
}

// adjoint of im2col: scatter-add col entries back to the input image
void col2im(const float* col, const ConvDims& d, float* dx) {
  const std::size_t ncols = d.cols();
  for (int c = 0; c < d.C; ++c)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        const float* row =
            col + (static_cast<std::size_t>(c) * d.kh + ki) * d.kw * ncols +
            static_cast<std::size_t>(kj) * ncols;
        std::size_t o = 0;
        for (int n = 0; n < d.N; ++n) {
          float* plane =
              dx + (static_cast<std::size_t>(n) * d.C + c) * d.H * d.W;
          for (int oh = 0; oh < d.OH; ++oh) {
            int h = oh * d.stride - d.padding + ki;
            bool hin = h >= 0 && h < d.H;
            for (int ow = 0; ow < d.OW; ++ow, ++o) {
              int w = ow * d.stride - d.padding + kj;
              if (hin && w >= 0 && w < d.W)
                plane[static_cast<std::size_t>(h) * d.W + w] += row[o];
            }
          }
        }
      }
}

}  // namespace

Var Graph::conv2d(Var x, Var kernel, int stride, int padding) {
  const Tensor& tx = value(x);
  const Tensor& tk = value(kernel);
  if (tx.rank() != 4) throw ConfigError("conv2d: expected input [N,C,H,W]");
  if (tk.rank() != 4) throw ConfigError("conv2d: expected kernel [F,C,kh,kw]");
  if (tk.dim(1) != tx.dim(1))
    throw ConfigError("conv2d: kernel channels do not match input");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");

  ConvDims d;
  d.N = tx.dim(0);
  d.C = tx.dim(1);
  d.H = tx.dim(2);
  d.W = tx.dim(3);
  d.F = tk.dim(0);
  d.kh = tk.dim(2);
  d.kw = tk.dim(3);
  d.stride = stride;
  d.padding = padding;
  d.OH = (d.H + 2 * padding - d.kh) / stride + 1;
  d.OW = (d.W + 2 * padding - d.kw) / stride + 1;
  if (d.H + 2 * padding < d.kh || d.W + 2 * padding < d.kw)
    throw ConfigError("conv2d: kernel larger than padded input");

  auto col = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(d.ckk()) * d.cols());
  im2col(tx.data(), d, col->data());

  Node n;
  n.kind = OpKind::conv2d;
  n.inputs = {x.node, kernel.node};
  n.value = Tensor({d.N, d.F, d.OH, d.OW});
  {
    ConstMatMap K(tk.data(), d.F, d.ckk());
    ConstMatMap Col(col->data(), d.ckk(), static_cast<Eigen::Index>(d.cols()));
    Mat out = K * Col;  // [F, N*OH*OW]
    const int plane = d.OH * d.OW;
    for (int nn = 0; nn < d.N; ++nn)
      for (int f = 0; f < d.F; ++f) {
        const float* srcrow = out.data() +
                              static_cast<std::size_t>(f) * d.cols() +
                              static_cast<std::size_t>(nn) * plane;
        float* dst = n.value.data() +
                     (static_cast<std::size_t>(nn) * d.F + f) * plane;
        std::copy(srcrow, srcrow + plane, dst);
      }
  }
  n.backprop = [d, col](Graph& g, int idx) {
    Node& self = g.nodes_[idx];
    Node& nx = g.nodes_[self.inputs[0]];
    Node& nk = g.nodes_[self.inputs[1]];
    const int plane = d.OH * d.OW;

    Mat gout(d.F, static_cast<Eigen::Index>(d.cols()));
    for (int nn = 0; nn < d.N; ++nn)
      for (int f = 0; f < d.F; ++f) {
        const float* src = self.value.grad.data() +
                           (static_cast<std::size_t>(nn) * d.F + f) * plane;
        float* dst = gout.data() + static_cast<std::size_t>(f) * d.cols() +
                     static_cast<std::size_t>(nn) * plane;
        std::copy(src, src + plane, dst);
      }

    ConstMatMap Col(col->data(), d.ckk(), static_cast<Eigen::Index>(d.cols()));
    MatMap GK(nk.value.grad.data(), d.F, d.ckk());
    GK.noalias() += gout * Col.transpose();

    ConstMatMap K(nk.value.data(), d.F, d.ckk());
    Mat gcol = K.transpose() * gout;  // [CKK, N*OH*OW]
    col2im(gcol.data(), d, nx.value.grad.data());
  };
  return push(std::move(n));
}

}  // namespace labelforge
