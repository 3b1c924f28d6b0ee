#pragma once

// Exact integer arithmetic for p4 (translations x 4 rotations) and
// p4m (translations x 4 rotations x mirror), plus their action on pixel
// grids. No floating point anywhere: equivariance checks must not accrue
// geometric error.

#include <array>
#include <cstdint>
#include <vector>

#include "sovnet/errors.hpp"
#include "sovnet/tensor.hpp"

namespace sovnet {

enum class GroupKind { p4, p4m };

inline int stabilizer_size(GroupKind k) { return k == GroupKind::p4 ? 4 : 8; }

// 2x2 integer matrix, column-vector convention.
struct Mat2 {
  std::int64_t a, b, c, d;  // [[a, b], [c, d]]
  friend Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
  }
  bool operator==(const Mat2&) const = default;
};

struct Vec2 {
  std::int64_t u = 0, v = 0;
  bool operator==(const Vec2&) const = default;
  friend Vec2 operator+(Vec2 x, Vec2 y) { return {x.u + y.u, x.v + y.v}; }
  friend Vec2 operator-(Vec2 x, Vec2 y) { return {x.u - y.u, x.v - y.v}; }
};

inline Vec2 apply(const Mat2& m, Vec2 p) { return {m.a * p.u + m.b * p.v, m.c * p.u + m.d * p.v}; }

// Stabilizer element index: s = mirror * 4 + rotation.
// rotation r is a counter-clockwise quarter-turn count; the mirror negates
// the first coordinate and is applied before the rotation.
struct GroupElement {
  GroupKind kind = GroupKind::p4;
  int mirror = 0;    // {0,1}; always 0 for p4
  int rotation = 0;  // {0,1,2,3}
  Vec2 translation;

  bool operator==(const GroupElement&) const = default;
};

GroupElement identity_element(GroupKind kind);
GroupElement rotation_element(GroupKind kind, int quarter_turns);
GroupElement mirror_element(GroupKind kind);
GroupElement translation_element(GroupKind kind, std::int64_t u, std::int64_t v);

Mat2 matrix_rep(int mirror, int rotation);
inline Mat2 matrix_rep(const GroupElement& g) { return matrix_rep(g.mirror, g.rotation); }

GroupElement compose(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& g);
Vec2 act_on_point(const GroupElement& g, Vec2 p);

// Stabilizer arithmetic on flat indices s = mirror*4 + rotation.
int stab_compose(GroupKind kind, int s1, int s2);
int stab_inverse(GroupKind kind, int s);
GroupElement stabilizer_element(GroupKind kind, int s);

// Finite carrier for functions on the group: stabilizer x (H x W) pixel grid,
// zero outside.
struct GroupGrid {
  GroupKind kind = GroupKind::p4;
  int height = 0;
  int width = 0;

  int stabilizer() const { return stabilizer_size(kind); }
};

// Pixel index (row, col) action. Rotations/mirrors act about the spatial
// center of the grid; doubled coordinates keep everything integral for even
// extents as well.
struct Pixel {
  int row = 0, col = 0;
  bool operator==(const Pixel&) const = default;
};

// Applies the stabilizer part about the grid center and then the translation
// (in pixel units: translation.u shifts columns right, translation.v shifts
// rows up). Returns the image of `p`, possibly outside the grid.
Pixel act_on_pixel(const GroupElement& g, Pixel p, int height, int width);

inline bool in_grid(Pixel p, int height, int width) {
  return p.row >= 0 && p.row < height && p.col >= 0 && p.col < width;
}

// [L_g f](h, p) = f(g^-1 h, g^-1 p) on a (..., S, H, W) tensor, zero where
// g^-1 p leaves the grid. Pure value transform; does not participate in any
// tape.
template <typename T>
Tensor<T> left_translate(const Tensor<T>& field, const GroupElement& g, const GroupGrid& grid) {
  if (g.kind != grid.kind) throw GroupKindMismatch("left_translate: element/grid group mismatch");
  if (field.rank() < 3) throw ShapeMismatch("left_translate: field must be (..., S, H, W)");
  const Shape& s = field.shape();
  int S = static_cast<int>(s[s.size() - 3]);
  int H = static_cast<int>(s[s.size() - 2]);
  int W = static_cast<int>(s[s.size() - 1]);
  if (S != grid.stabilizer()) throw GroupKindMismatch("left_translate: group-slot extent mismatch");
  if (H != grid.height || W != grid.width) throw ShapeMismatch("left_translate: spatial extent mismatch");

  GroupElement gi = inverse(g);
  std::size_t lead = field.size() / (static_cast<std::size_t>(S) * H * W);
  std::vector<T> out(field.size(), T(0));
  const auto& in = field.values();
  for (int h = 0; h < S; ++h) {
    int h_in = stab_compose(grid.kind, gi.mirror * 4 + gi.rotation, h);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        Pixel p_in = act_on_pixel(gi, {r, c}, H, W);
        if (!in_grid(p_in, H, W)) continue;
        for (std::size_t l = 0; l < lead; ++l) {
          std::size_t base = l * S;
          out[((base + h) * H + r) * W + c] = in[((base + h_in) * H + p_in.row) * W + p_in.col];
        }
      }
  }
  return Tensor<T>::from_data(field.shape(), std::move(out), false);
}

// max over positions p with g^-1 p still on the grid of
// |trans(h, p) - base(g^-1 h, g^-1 p)|: the deviation of `trans` from
// L_g base on the overlap region. Positions whose preimage leaves the grid
// carry no information about equivariance (the grid is a finite window onto
// the plane) and are skipped.
template <typename T>
T masked_action_diff(const Tensor<T>& base, const Tensor<T>& trans, const GroupElement& g,
                     const GroupGrid& grid) {
  if (base.shape() != trans.shape()) throw ShapeMismatch("masked_action_diff: shape mismatch");
  if (base.rank() < 3) throw ShapeMismatch("masked_action_diff: field must be (..., S, H, W)");
  const Shape& s = base.shape();
  int S = static_cast<int>(s[s.size() - 3]);
  int H = static_cast<int>(s[s.size() - 2]);
  int W = static_cast<int>(s[s.size() - 1]);
  if (S != grid.stabilizer() || H != grid.height || W != grid.width)
    throw GroupKindMismatch("masked_action_diff: field/grid mismatch");
  GroupElement gi = inverse(g);
  std::size_t lead = base.size() / (static_cast<std::size_t>(S) * H * W);
  const auto& bv = base.values();
  const auto& tv = trans.values();
  T m = T(0);
  for (int h = 0; h < S; ++h) {
    int h_in = stab_compose(grid.kind, gi.mirror * 4 + gi.rotation, h);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        Pixel p_in = act_on_pixel(gi, {r, c}, H, W);
        if (!in_grid(p_in, H, W)) continue;
        for (std::size_t l = 0; l < lead; ++l) {
          std::size_t base_idx = ((l * S + h_in) * H + p_in.row) * W + p_in.col;
          std::size_t trans_idx = ((l * S + h) * H + r) * W + c;
          m = std::max(m, std::abs(tv[trans_idx] - bv[base_idx]));
        }
      }
  }
  return m;
}

// Same action for a planar image (..., H, W): the stabilizer part permutes
// pixels only.
template <typename T>
Tensor<T> left_translate_plane(const Tensor<T>& image, const GroupElement& g, int height, int width) {
  if (image.rank() < 2) throw ShapeMismatch("left_translate_plane: image must be (..., H, W)");
  const Shape& s = image.shape();
  int H = static_cast<int>(s[s.size() - 2]);
  int W = static_cast<int>(s[s.size() - 1]);
  if (H != height || W != width) throw ShapeMismatch("left_translate_plane: spatial extent mismatch");
  GroupElement gi = inverse(g);
  std::size_t lead = image.size() / (static_cast<std::size_t>(H) * W);
  std::vector<T> out(image.size(), T(0));
  const auto& in = image.values();
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      Pixel p_in = act_on_pixel(gi, {r, c}, H, W);
      if (!in_grid(p_in, H, W)) continue;
      for (std::size_t l = 0; l < lead; ++l)
        out[(l * H + r) * W + c] = in[(l * H + p_in.row) * W + p_in.col];
    }
  return Tensor<T>::from_data(image.shape(), std::move(out), false);
}

}  // namespace sovnet
