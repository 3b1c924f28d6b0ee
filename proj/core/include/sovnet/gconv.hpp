#pragma once

// Group-equivariant correlation kernels: lifting (plane -> group),
// group-to-group, subgroup pooling, and the residual prediction block.
//
// Filter transformation is done by precomputed integer index-permutation
// tables, so rotating a filter is exact. A group correlation is then S_out
// planar correlations against the permuted filter planes.
//
// Spatial handling: "same" zero padding with a centered stride lattice
// (output position q reads input center off + stride*q, with off chosen so
// the lattice is symmetric about the grid center), or "valid" with stride 1
// for the fully-connected output layer. The centered lattice is what keeps
// stride-2 layers exactly equivariant to quarter-turn rotations on
// odd-extent grids.

#include <cstddef>
#include <optional>
#include <vector>

#include "sovnet/group.hpp"
#include "sovnet/tensor.hpp"

namespace sovnet {

enum class PadMode { same, valid };

// Geometry of one correlation: maps output pixels to input pixels.
struct ConvGeometry {
  int k = 3;
  int stride = 1;
  PadMode pad = PadMode::same;
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int off_y = 0, off_x = 0;  // same mode: input center of output (qy,qx) is (off+stride*q)

  // Top-left input pixel read by output (qy,qx) with tap (0,0).
  int in_y0(int qy) const { return pad == PadMode::same ? off_y + stride * qy - (k - 1) / 2 : qy + 0; }
  int in_x0(int qx) const { return pad == PadMode::same ? off_x + stride * qx - (k - 1) / 2 : qx + 0; }
};

inline ConvGeometry make_geometry(int in_h, int in_w, int k, int stride, PadMode pad) {
  ConvGeometry g;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  g.in_h = in_h;
  g.in_w = in_w;
  if (pad == PadMode::same) {
    if (k % 2 == 0) throw ShapeMismatch("same-padded correlation needs odd kernel");
    g.off_y = ((in_h - 1) / 2) % stride;
    g.off_x = ((in_w - 1) / 2) % stride;
    g.out_h = (in_h - 1 - g.off_y) / stride + 1;
    g.out_w = (in_w - 1 - g.off_x) / stride + 1;
  } else {
    if (stride != 1) throw ShapeMismatch("valid correlation is stride 1");
    if (k > in_h || k > in_w) throw ShapeMismatch("valid correlation: kernel exceeds input");
    g.out_h = in_h - k + 1;
    g.out_w = in_w - k + 1;
  }
  return g;
}

// Tap permutation: index of M_s^{-1} applied to tap (ty,tx) about the tap
// center. Exact for even and odd k.
inline std::vector<int> tap_permutation(GroupKind kind, int s, int k) {
  int si = stab_inverse(kind, s);
  Mat2 m = matrix_rep(si / 4, si % 4);
  std::vector<int> perm(k * k);
  for (int ty = 0; ty < k; ++ty)
    for (int tx = 0; tx < k; ++tx) {
      std::int64_t u = 2 * tx - (k - 1);
      std::int64_t v = (k - 1) - 2 * ty;
      Vec2 q = apply(m, {u, v});
      int rx = static_cast<int>((q.u + (k - 1)) / 2);
      int ry = static_cast<int>(((k - 1) - q.v) / 2);
      perm[ty * k + tx] = ry * k + rx;
    }
  return perm;
}

namespace detail {

// Shared forward/backward kernel. Input (c_in, S_in, H, W); weights
// (c_out, c_in, S_in, k, k); bias (c_out); output (c_out, S_out, H', W').
// S_in == 1 with identity slot map is the lifting case.
template <typename T>
Tensor<T> correlate_impl(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         const GroupGrid& grid, const ConvGeometry& geo, bool lifting) {
  const Shape& is = input.shape();
  const Shape& ws = weights.shape();
  if (is.size() != 4 || ws.size() != 5) throw ShapeMismatch("correlate: input (c,S,H,W), weights (o,i,S,k,k)");
  int c_in = static_cast<int>(is[0]);
  int s_in = static_cast<int>(is[1]);
  int H = static_cast<int>(is[2]);
  int W = static_cast<int>(is[3]);
  int c_out = static_cast<int>(ws[0]);
  int k = geo.k;
  if (static_cast<int>(ws[1]) != c_in || static_cast<int>(ws[2]) != s_in ||
      static_cast<int>(ws[3]) != k || static_cast<int>(ws[4]) != k)
    throw ShapeMismatch("correlate: weights " + shape_str(ws) + " vs input " + shape_str(is));
  if (lifting ? s_in != 1 : s_in != grid.stabilizer())
    throw GroupKindMismatch("correlate: group-slot extent does not match grid stabilizer");
  if (H != geo.in_h || W != geo.in_w) throw ShapeMismatch("correlate: geometry mismatch");
  if (static_cast<int>(bias.size()) != c_out) throw ShapeMismatch("correlate: bias extent");

  int S_out = grid.stabilizer();
  int OH = geo.out_h, OW = geo.out_w;

  // Transformed filter bank: wt[s] has layout (c_out, c_in, s_in, k, k).
  std::size_t wsize = weights.size();
  std::vector<std::vector<T>> wt(S_out, std::vector<T>(wsize));
  std::vector<std::vector<std::size_t>> windex(S_out, std::vector<std::size_t>(wsize));
  {
    const auto& wv = weights.values();
    for (int s = 0; s < S_out; ++s) {
      auto tap = tap_permutation(grid.kind, s, k);
      int sinv = stab_inverse(grid.kind, s);
      for (int o = 0; o < c_out; ++o)
        for (int i = 0; i < c_in; ++i)
          for (int h = 0; h < s_in; ++h) {
            int hc = lifting ? 0 : stab_compose(grid.kind, sinv, h);
            for (int t = 0; t < k * k; ++t) {
              std::size_t dst = ((static_cast<std::size_t>(o) * c_in + i) * s_in + h) * k * k + t;
              std::size_t src = ((static_cast<std::size_t>(o) * c_in + i) * s_in + hc) * k * k + tap[t];
              wt[s][dst] = wv[src];
              windex[s][dst] = src;
            }
          }
    }
  }

  std::vector<T> out(static_cast<std::size_t>(c_out) * S_out * OH * OW);
  const auto& in = input.values();
  const auto& bv = bias.values();
  for (int o = 0; o < c_out; ++o)
    for (int s = 0; s < S_out; ++s) {
      const T* w = wt[s].data() + static_cast<std::size_t>(o) * c_in * s_in * k * k;
      for (int qy = 0; qy < OH; ++qy) {
        int y0 = geo.in_y0(qy);
        for (int qx = 0; qx < OW; ++qx) {
          int x0 = geo.in_x0(qx);
          T acc = bv[o];
          for (int i = 0; i < c_in; ++i)
            for (int h = 0; h < s_in; ++h) {
              const T* plane = in.data() + (static_cast<std::size_t>(i) * s_in + h) * H * W;
              const T* wp = w + (static_cast<std::size_t>(i) * s_in + h) * k * k;
              for (int ty = 0; ty < k; ++ty) {
                int iy = y0 + ty;
                if (iy < 0 || iy >= H) continue;
                const T* row = plane + static_cast<std::size_t>(iy) * W;
                const T* wr = wp + ty * k;
                for (int tx = 0; tx < k; ++tx) {
                  int ix = x0 + tx;
                  if (ix < 0 || ix >= W) continue;
                  acc += row[ix] * wr[tx];
                }
              }
            }
          out[((static_cast<std::size_t>(o) * S_out + s) * OH + qy) * OW + qx] = acc;
        }
      }
    }

  auto backward = [input, weights, grid, geo, lifting, wt = std::move(wt), windex = std::move(windex),
                   c_in, s_in, H, W, c_out, S_out, OH, OW, k](
                      const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* gin = pg(0);
    std::vector<T>* gw = pg(1);
    std::vector<T>* gb = pg(2);
    const auto& in = input.values();
    std::vector<T> gwt;  // gradient w.r.t. one transformed bank at a time
    for (int s = 0; s < S_out; ++s) {
      if (gw) gwt.assign(wt[s].size(), T(0));
      for (int o = 0; o < c_out; ++o) {
        const T* w = wt[s].data() + static_cast<std::size_t>(o) * c_in * s_in * k * k;
        T* gwo = gw ? gwt.data() + static_cast<std::size_t>(o) * c_in * s_in * k * k : nullptr;
        T gbias = T(0);
        for (int qy = 0; qy < OH; ++qy) {
          int y0 = geo.in_y0(qy);
          for (int qx = 0; qx < OW; ++qx) {
            int x0 = geo.in_x0(qx);
            T go = g[((static_cast<std::size_t>(o) * S_out + s) * OH + qy) * OW + qx];
            if (go == T(0)) continue;
            gbias += go;
            for (int i = 0; i < c_in; ++i)
              for (int h = 0; h < s_in; ++h) {
                std::size_t pbase = (static_cast<std::size_t>(i) * s_in + h) * H * W;
                std::size_t wbase = (static_cast<std::size_t>(i) * s_in + h) * k * k;
                for (int ty = 0; ty < k; ++ty) {
                  int iy = y0 + ty;
                  if (iy < 0 || iy >= H) continue;
                  for (int tx = 0; tx < k; ++tx) {
                    int ix = x0 + tx;
                    if (ix < 0 || ix >= W) continue;
                    std::size_t pi = pbase + static_cast<std::size_t>(iy) * W + ix;
                    std::size_t wi = wbase + ty * k + tx;
                    if (gin) (*gin)[pi] += go * w[wi];
                    if (gwo) gwo[wi] += go * in[pi];
                  }
                }
              }
          }
        }
        if (gb) (*gb)[o] += gbias;
      }
      if (gw)
        for (std::size_t j = 0; j < gwt.size(); ++j) (*gw)[windex[s][j]] += gwt[j];
    }
  };

  return Tensor<T>::make_op({input, weights, bias},
                            {static_cast<std::size_t>(c_out), static_cast<std::size_t>(S_out),
                             static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)},
                            std::move(out), std::move(backward));
}

}  // namespace detail

// Plane -> group correlation. image (c, H, W), weights (c_out, c_in, k, k).
template <typename T>
Tensor<T> lift_correlate(const Tensor<T>& image, const Tensor<T>& weights, const Tensor<T>& bias,
                         const GroupGrid& grid, const ConvGeometry& geo) {
  const Shape& is = image.shape();
  const Shape& ws = weights.shape();
  if (is.size() != 3 || ws.size() != 4) throw ShapeMismatch("lift_correlate: image (c,H,W), weights (o,i,k,k)");
  Tensor<T> in4 = reshape(image, {is[0], 1, is[1], is[2]});
  Tensor<T> w5 = reshape(weights, {ws[0], ws[1], 1, ws[2], ws[3]});
  return detail::correlate_impl(in4, w5, bias, grid, geo, /*lifting=*/true);
}

// Group -> group correlation. field (c, S, H, W), weights (c_out, c_in, S, k, k).
template <typename T>
Tensor<T> group_correlate(const Tensor<T>& field, const Tensor<T>& weights, const Tensor<T>& bias,
                          const GroupGrid& grid, const ConvGeometry& geo) {
  return detail::correlate_impl(field, weights, bias, grid, geo, /*lifting=*/false);
}

// Max over the stabilizer slots of a (..., S, H, W) field; invariant to
// stabilizer left-translation.
template <typename T>
Tensor<T> subgroup_pool(const Tensor<T>& field) {
  if (field.rank() < 3) throw ShapeMismatch("subgroup_pool: field must be (..., S, H, W)");
  return reduce_max(field, static_cast<int>(field.rank()) - 3, false);
}

// ---------------------------------------------------------------------------
// Modified residual block: selu(gc2(selu(gc1(x)))) + project(x), with gc1
// carrying the stride and a 1x1 projection when channels or stride change.

template <typename T>
struct ResidualBlock {
  Tensor<T> w1, b1;  // (mid, in, S, k, k)
  Tensor<T> w2, b2;  // (out, mid, S, k, k)
  Tensor<T> wp, bp;  // (out, in, S, 1, 1); undefined when the skip is identity
  int stride = 1;

  bool has_projection() const { return wp.defined(); }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> ps{&w1, &b1, &w2, &b2};
    if (has_projection()) {
      ps.push_back(&wp);
      ps.push_back(&bp);
    }
    return ps;
  }
};

// Receptive-field half-width of the block at the input resolution.
inline int residual_block_radius(int stride) { return stride + 1; }

template <typename T>
Tensor<T> residual_block(const Tensor<T>& field, const ResidualBlock<T>& p, const GroupGrid& grid) {
  int H = static_cast<int>(field.shape()[2]);
  int W = static_cast<int>(field.shape()[3]);
  int k = static_cast<int>(p.w1.shape()[3]);
  ConvGeometry g1 = make_geometry(H, W, k, p.stride, PadMode::same);
  Tensor<T> y = selu(group_correlate(field, p.w1, p.b1, grid, g1));
  ConvGeometry g2 = make_geometry(g1.out_h, g1.out_w, k, 1, PadMode::same);
  y = selu(group_correlate(y, p.w2, p.b2, grid, g2));
  if (p.has_projection()) {
    ConvGeometry gp = make_geometry(H, W, 1, p.stride, PadMode::same);
    return y + group_correlate(field, p.wp, p.bp, grid, gp);
  }
  return y + field;
}

}  // namespace sovnet
