#include "sovnet/group.hpp"

namespace sovnet {

namespace {
// R = quarter-turn (u, v) -> (-v, u); F = mirror (u, v) -> (-u, v).
const Mat2 kRot{0, -1, 1, 0};
const Mat2 kMirror{-1, 0, 0, 1};
const Mat2 kId{1, 0, 0, 1};

void check_same_kind(const GroupElement& a, const GroupElement& b) {
  if (a.kind != b.kind) throw GroupKindMismatch("group elements of different kinds");
}

void check_stab(GroupKind kind, int mirror) {
  if (kind == GroupKind::p4 && mirror != 0) throw GroupKindMismatch("p4 has no mirror");
}
}  // namespace

GroupElement identity_element(GroupKind kind) { return {kind, 0, 0, {0, 0}}; }

GroupElement rotation_element(GroupKind kind, int quarter_turns) {
  return {kind, 0, ((quarter_turns % 4) + 4) % 4, {0, 0}};
}

GroupElement mirror_element(GroupKind kind) {
  check_stab(kind, 1);
  return {kind, 1, 0, {0, 0}};
}

GroupElement translation_element(GroupKind kind, std::int64_t u, std::int64_t v) {
  return {kind, 0, 0, {u, v}};
}

Mat2 matrix_rep(int mirror, int rotation) {
  Mat2 m = mirror ? kMirror : kId;
  for (int i = 0; i < rotation; ++i) m = kRot * m;
  return m;
}

// M(m1,r1) M(m2,r2) = R^{r1+e r2} F^{m1+m2} with e = -1 iff m1 == 1,
// using F R = R^-1 F.
GroupElement compose(const GroupElement& a, const GroupElement& b) {
  check_same_kind(a, b);
  GroupElement out;
  out.kind = a.kind;
  out.mirror = a.mirror ^ b.mirror;
  out.rotation = (a.rotation + (a.mirror ? 4 - b.rotation : b.rotation)) % 4;
  out.translation = apply(matrix_rep(a), b.translation) + a.translation;
  return out;
}

GroupElement inverse(const GroupElement& g) {
  GroupElement out;
  out.kind = g.kind;
  out.mirror = g.mirror;
  out.rotation = g.mirror ? g.rotation : (4 - g.rotation) % 4;
  out.translation = apply(matrix_rep(out), {-g.translation.u, -g.translation.v});
  return out;
}

Vec2 act_on_point(const GroupElement& g, Vec2 p) { return apply(matrix_rep(g), p) + g.translation; }

int stab_compose(GroupKind kind, int s1, int s2) {
  int m1 = s1 / 4, r1 = s1 % 4, m2 = s2 / 4, r2 = s2 % 4;
  check_stab(kind, m1 | m2);
  int m = m1 ^ m2;
  int r = (r1 + (m1 ? 4 - r2 : r2)) % 4;
  return m * 4 + r;
}

int stab_inverse(GroupKind kind, int s) {
  int m = s / 4, r = s % 4;
  check_stab(kind, m);
  return m * 4 + (m ? r : (4 - r) % 4);
}

GroupElement stabilizer_element(GroupKind kind, int s) {
  check_stab(kind, s / 4);
  return {kind, s / 4, s % 4, {0, 0}};
}

Pixel act_on_pixel(const GroupElement& g, Pixel p, int height, int width) {
  // Doubled centered coordinates: integral for odd and even extents alike.
  std::int64_t u = 2 * p.col - (width - 1);
  std::int64_t v = (height - 1) - 2 * p.row;
  Vec2 q = apply(matrix_rep(g), {u, v});
  q.u += 2 * g.translation.u;
  q.v += 2 * g.translation.v;
  std::int64_t cu = q.u + (width - 1);
  std::int64_t cv = (height - 1) - q.v;
  if (cu % 2 != 0 || cv % 2 != 0) return {-1 << 30, -1 << 30};  // parity break on non-square grids
  return {static_cast<int>(cv / 2), static_cast<int>(cu / 2)};
}

}  // namespace sovnet
