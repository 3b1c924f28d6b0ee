#pragma once

// The full model: lifting stem -> primary capsules -> degree-routed hidden
// layers -> degree-routed class capsules -> stabilizer/position-pooled scores,
// plus a small dense decoder reconstructing the input from the true-class
// capsule. forward() returns a ForwardTrace recording every capsule field,
// every routing-weight tensor, and the receptive geometry between layers;
// the equivariance checker and the decomposition-graph builder both read
// the trace rather than re-deriving anything.

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sovnet/config.hpp"
#include "sovnet/gconv.hpp"
#include "sovnet/group.hpp"
#include "sovnet/routing.hpp"
#include "sovnet/tensor.hpp"

namespace sovnet {

// ---------------------------------------------------------------------------
// Derived geometry and parameter-count closed forms

// Spatial extents per stage: [input, primary, hidden...]. The class layer
// keeps the last extent (same-padded stride-1 correlation).
inline std::vector<int> spatial_extents(const ModelConfig& cfg) {
  std::vector<int> e{cfg.image_size};
  ConvGeometry g = make_geometry(cfg.image_size, cfg.image_size, cfg.kernel, cfg.primary_stride, PadMode::same);
  e.push_back(g.out_h);
  for (int s : cfg.strides) {
    g = make_geometry(e.back(), e.back(), cfg.kernel, s, PadMode::same);
    e.push_back(g.out_h);
  }
  return e;
}

inline long long residual_block_param_count(const ModelConfig& cfg, int stride) {
  long long d = cfg.pose_dim, S = stabilizer_size(cfg.group), k = cfg.kernel;
  long long n = 2 * (d * d * S * k * k + d);        // w1,b1,w2,b2
  if (stride != 1) n += d * d * S + d;              // 1x1 projection
  return n;
}

inline long long class_block_param_count(const ModelConfig& cfg) {
  long long d = cfg.pose_dim, S = stabilizer_size(cfg.group), k = cfg.kernel;
  return d * d * S * k * k + d;
}

// Prediction parameters of all routed layers. One block per *output* type:
// the count scales with N_{l+1} alone.
inline long long routing_parameter_count(const ModelConfig& cfg) {
  long long n = 0;
  for (int s : cfg.strides) n += cfg.num_types * residual_block_param_count(cfg, s);
  n += cfg.classes * class_block_param_count(cfg);
  return n;
}

// What the same layers would cost with a distinct block per (input, output)
// type pair.
inline long long pairwise_routing_parameter_count(const ModelConfig& cfg) {
  long long n = 0;
  for (int s : cfg.strides) n += static_cast<long long>(cfg.num_types) * cfg.num_types * residual_block_param_count(cfg, s);
  n += static_cast<long long>(cfg.num_types) * cfg.classes * class_block_param_count(cfg);
  return n;
}

inline int total_stride(const ModelConfig& cfg) {
  int c = cfg.primary_stride;
  for (int s : cfg.strides) c *= s;
  return c;
}

// Receptive half-width of the last capsule layer, in input pixels. Inputs
// supported with a zero margin of at least this plus the translation keep
// translation checks free of window-clipping effects.
inline int receptive_radius(const ModelConfig& cfg) {
  int r = (cfg.kernel - 1) / 2;  // stem
  r += (cfg.kernel - 1) / 2;     // primary correlation
  int cum = cfg.primary_stride;
  for (int s : cfg.strides) {
    r += residual_block_radius(s) * cum;
    cum *= s;
  }
  return r;
}

inline long long total_parameter_count(const ModelConfig& cfg) {
  long long S = stabilizer_size(cfg.group);
  long long k = cfg.kernel, d = cfg.pose_dim;
  long long n = cfg.stem_channels * cfg.in_channels * k * k + cfg.stem_channels;
  n += cfg.num_types * (d * cfg.stem_channels * S * k * k + d);
  n += routing_parameter_count(cfg);
  long long in = static_cast<long long>(cfg.classes) * d * S;
  long long h1 = cfg.decoder_hidden[0], h2 = cfg.decoder_hidden[1];
  long long out = static_cast<long long>(cfg.in_channels) * cfg.image_size * cfg.image_size;
  n += h1 * in + h1 + h2 * h1 + h2 + out * h2 + out;
  return n;
}

// ---------------------------------------------------------------------------
// Forward trace

// How one capsule layer samples the previous one: the input center of output
// pixel q is off + stride*q, and the receptive window is a square of
// half-width `radius` around it (whole previous grid when `full`).
struct PoolGeometry {
  int stride = 1;
  int off_y = 0, off_x = 0;
  int radius = 0;
  bool full = false;
};

template <typename T>
struct LayerTrace {
  std::vector<Tensor<T>> fields;   // per capsule type: (d, S, H, W)
  std::vector<Tensor<T>> weights;  // per type: routing weights (N_in, S, H, W); empty for primary
  GroupGrid grid;
  PoolGeometry pool;               // geometry into the previous capsule layer
  int cum_stride = 1;              // input pixels per pixel at this layer
};

template <typename T>
struct ForwardTrace {
  Tensor<T> stem;                   // (stem_channels, S, H, W)
  std::vector<LayerTrace<T>> layers;  // primary, hidden..., class (class grid is 1x1)
  Tensor<T> scores;                 // (classes,)
};

// ---------------------------------------------------------------------------
// Model

template <typename T>
struct SovnetModel {
  ModelConfig cfg;

  Tensor<T> stem_w, stem_b;                      // (stem, in, k, k), (stem)
  std::vector<Tensor<T>> primary_w, primary_b;   // per type: (d, stem, S, k, k), (d)
  std::vector<RoutingLayer<T>> hidden;           // cfg.hidden_layers layers of cfg.num_types blocks
  std::vector<Tensor<T>> class_w, class_b;       // per class: (d, d, S, K, K), (d)
  std::vector<Tensor<T>> dec_w, dec_b;           // three dense layers

  explicit SovnetModel(ModelConfig c) : cfg(std::move(c)) {
    cfg.validate();
    const std::size_t S = static_cast<std::size_t>(stabilizer_size(cfg.group));
    const std::size_t k = static_cast<std::size_t>(cfg.kernel);
    const std::size_t d = static_cast<std::size_t>(cfg.pose_dim);
    const std::size_t cs = static_cast<std::size_t>(cfg.stem_channels);
    stem_w = Tensor<T>::zeros({cs, static_cast<std::size_t>(cfg.in_channels), k, k});
    stem_b = Tensor<T>::zeros({cs});
    for (int i = 0; i < cfg.num_types; ++i) {
      primary_w.push_back(Tensor<T>::zeros({d, cs, S, k, k}));
      primary_b.push_back(Tensor<T>::zeros({d}));
    }
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      RoutingLayer<T> layer;
      for (int j = 0; j < cfg.num_types; ++j) {
        ResidualBlock<T> b;
        b.stride = cfg.strides[l];
        b.w1 = Tensor<T>::zeros({d, d, S, k, k});
        b.b1 = Tensor<T>::zeros({d});
        b.w2 = Tensor<T>::zeros({d, d, S, k, k});
        b.b2 = Tensor<T>::zeros({d});
        if (b.stride != 1) {
          b.wp = Tensor<T>::zeros({d, d, S, 1, 1});
          b.bp = Tensor<T>::zeros({d});
        }
        layer.blocks.push_back(std::move(b));
      }
      hidden.push_back(std::move(layer));
    }
    for (int j = 0; j < cfg.classes; ++j) {
      class_w.push_back(Tensor<T>::zeros({d, d, S, k, k}));
      class_b.push_back(Tensor<T>::zeros({d}));
    }
    const std::size_t din = static_cast<std::size_t>(cfg.classes) * d * S;
    const std::size_t h1 = static_cast<std::size_t>(cfg.decoder_hidden[0]);
    const std::size_t h2 = static_cast<std::size_t>(cfg.decoder_hidden[1]);
    const std::size_t dout = static_cast<std::size_t>(cfg.in_channels) * cfg.image_size * cfg.image_size;
    dec_w = {Tensor<T>::zeros({h1, din}), Tensor<T>::zeros({h2, h1}), Tensor<T>::zeros({dout, h2})};
    dec_b = {Tensor<T>::zeros({h1}), Tensor<T>::zeros({h2}), Tensor<T>::zeros({dout})};
  }

  std::vector<std::pair<std::string, Tensor<T>*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<T>*>> ps;
    ps.emplace_back("stem.w", &stem_w);
    ps.emplace_back("stem.b", &stem_b);
    for (int i = 0; i < cfg.num_types; ++i) {
      ps.emplace_back("primary." + std::to_string(i) + ".w", &primary_w[i]);
      ps.emplace_back("primary." + std::to_string(i) + ".b", &primary_b[i]);
    }
    for (int l = 0; l < cfg.hidden_layers; ++l)
      for (int j = 0; j < cfg.num_types; ++j) {
        std::string p = "hidden." + std::to_string(l) + "." + std::to_string(j) + ".";
        ResidualBlock<T>& b = hidden[l].blocks[j];
        ps.emplace_back(p + "w1", &b.w1);
        ps.emplace_back(p + "b1", &b.b1);
        ps.emplace_back(p + "w2", &b.w2);
        ps.emplace_back(p + "b2", &b.b2);
        if (b.has_projection()) {
          ps.emplace_back(p + "wp", &b.wp);
          ps.emplace_back(p + "bp", &b.bp);
        }
      }
    for (int j = 0; j < cfg.classes; ++j) {
      ps.emplace_back("class." + std::to_string(j) + ".w", &class_w[j]);
      ps.emplace_back("class." + std::to_string(j) + ".b", &class_b[j]);
    }
    for (int l = 0; l < 3; ++l) {
      ps.emplace_back("decoder." + std::to_string(l) + ".w", &dec_w[l]);
      ps.emplace_back("decoder." + std::to_string(l) + ".b", &dec_b[l]);
    }
    return ps;
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> ps;
    for (auto& [name, t] : named_parameters()) ps.push_back(t);
    return ps;
  }

  long long parameter_count() {
    long long n = 0;
    for (auto* p : parameters()) n += static_cast<long long>(p->size());
    return n;
  }

  // LeCun-normal weights (SELU-friendly), zero biases.
  void init(unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& [name, t] : named_parameters()) {
      t->set_requires_grad(true);
      auto& v = t->raw_values();
      if (t->rank() <= 1) {
        std::fill(v.begin(), v.end(), T(0));
        continue;
      }
      std::size_t fan_in = t->size() / t->shape()[0];
      double std_dev = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (auto& x : v) x = static_cast<T>(normal(rng) * std_dev);
    }
  }

  ForwardTrace<T> forward(const Tensor<T>& image) const {
    const Shape& is = image.shape();
    const std::size_t H = static_cast<std::size_t>(cfg.image_size);
    if (is.size() != 3 || is[0] != static_cast<std::size_t>(cfg.in_channels) || is[1] != H || is[2] != H)
      throw ModelMismatch("forward: expected image (" + std::to_string(cfg.in_channels) + "," +
                          std::to_string(H) + "," + std::to_string(H) + "), got " + shape_str(is));
    const int k = cfg.kernel;
    const int S = stabilizer_size(cfg.group);
    ForwardTrace<T> tr;

    GroupGrid grid0{cfg.group, cfg.image_size, cfg.image_size};
    ConvGeometry sg = make_geometry(cfg.image_size, cfg.image_size, k, 1, PadMode::same);
    tr.stem = selu(lift_correlate(image, stem_w, stem_b, grid0, sg));

    // Primary capsules: one group correlation per type, squashed.
    ConvGeometry pg = make_geometry(cfg.image_size, cfg.image_size, k, cfg.primary_stride, PadMode::same);
    LayerTrace<T> prim;
    prim.grid = GroupGrid{cfg.group, pg.out_h, pg.out_w};
    prim.pool = {cfg.primary_stride, pg.off_y, pg.off_x, (k - 1) / 2, false};
    prim.cum_stride = cfg.primary_stride;
    for (int i = 0; i < cfg.num_types; ++i)
      prim.fields.push_back(squash(group_correlate(tr.stem, primary_w[i], primary_b[i], grid0, pg)));
    tr.layers.push_back(std::move(prim));

    for (int l = 0; l < cfg.hidden_layers; ++l) {
      const LayerTrace<T>& prev = tr.layers.back();
      RoutingResult<T> r = route_degree(prev.fields, hidden[l], prev.grid);
      ConvGeometry hg = make_geometry(prev.grid.height, prev.grid.width, k, cfg.strides[l], PadMode::same);
      LayerTrace<T> lt;
      lt.grid = GroupGrid{cfg.group, hg.out_h, hg.out_w};
      lt.pool = {cfg.strides[l], hg.off_y, hg.off_x, residual_block_radius(cfg.strides[l]), false};
      lt.cum_stride = prev.cum_stride * cfg.strides[l];
      lt.fields = std::move(r.fields);
      lt.weights = std::move(r.weights);
      tr.layers.push_back(std::move(lt));
    }

    // Class capsules: same-padded correlations on the final grid, degree-
    // routed across input types. The class score pools the pose norms over
    // the stabilizer and all positions, so the readout tolerates where the
    // evidence lands on the coarse grid.
    {
      const LayerTrace<T>& prev = tr.layers.back();
      const int K = prev.grid.height;
      ConvGeometry cg = make_geometry(K, K, k, 1, PadMode::same);
      LayerTrace<T> cls;
      cls.grid = GroupGrid{cfg.group, K, K};
      cls.pool = {1, cg.off_y, cg.off_x, (k - 1) / 2, false};
      cls.cum_stride = prev.cum_stride;
      std::vector<Tensor<T>> scores;
      for (int j = 0; j < cfg.classes; ++j) {
        std::vector<Tensor<T>> preds;
        preds.reserve(prev.fields.size());
        for (const auto& f : prev.fields)
          preds.push_back(group_correlate(f, class_w[j], class_b[j], prev.grid, cg));
        Tensor<T> w = degree_weights(preds);
        check_simplex(w, T(1e-6));
        Tensor<T> f = squash(aggregate(preds, w));
        Tensor<T> slot_norms = reshape(two_norm(f, 0, T(kNormEps), false),
                                       {static_cast<std::size_t>(S) * K * K});
        scores.push_back(reduce_max(slot_norms, 0, false));
        cls.weights.push_back(std::move(w));
        cls.fields.push_back(std::move(f));
      }
      tr.scores = stack0(scores);
      tr.layers.push_back(std::move(cls));
    }
    return tr;
  }

  Tensor<T> class_scores(const Tensor<T>& image) const { return forward(image).scores; }

  // Predicted label; ties break to the lowest class index.
  int classify(const Tensor<T>& image) const {
    NoGradGuard ng;
    Tensor<T> scores = class_scores(image);  // keep the handle alive
    const auto& s = scores.values();
    int best = 0;
    for (std::size_t j = 1; j < s.size(); ++j)
      if (s[j] > s[best]) best = static_cast<int>(j);
    return best;
  }

  // Decode the input from the class capsules with every class but `label`
  // zeroed out, so the reconstruction depends on the true-class capsule only.
  // Capsule fields are averaged over positions before decoding.
  Tensor<T> reconstruct(const ForwardTrace<T>& trace, int label) const {
    if (label < 0 || label >= cfg.classes)
      throw LabelOutOfRange("reconstruct: label " + std::to_string(label));
    const auto& caps = trace.layers.back().fields;
    const std::size_t block = static_cast<std::size_t>(cfg.pose_dim) * stabilizer_size(cfg.group);
    const T inv_area = T(1) / static_cast<T>(caps[0].shape()[2] * caps[0].shape()[3]);
    std::vector<Tensor<T>> parts;
    parts.reserve(caps.size());
    for (int j = 0; j < cfg.classes; ++j)
      parts.push_back(j == label
                          ? reshape(reduce_sum(caps[j], {2, 3}, false) * inv_area, {block})
                          : Tensor<T>::zeros({block}));
    Tensor<T> x = reshape(stack0(parts), {static_cast<std::size_t>(cfg.classes) * block});
    x = selu(matvec(dec_w[0], x) + dec_b[0]);
    x = selu(matvec(dec_w[1], x) + dec_b[1]);
    x = sigmoid(matvec(dec_w[2], x) + dec_b[2]);
    return reshape(x, {static_cast<std::size_t>(cfg.in_channels), static_cast<std::size_t>(cfg.image_size),
                       static_cast<std::size_t>(cfg.image_size)});
  }
};

// ---------------------------------------------------------------------------
// Equivariance verification

template <typename T>
struct EquivarianceReport {
  std::vector<T> layer_diffs;  // stem, primary, hidden..., class fields
  T score_diff = T(0);         // filled when g has no translation part
  T max_field_diff = T(0);
};

// Compares forward(L_g x) against L_{g_l} forward(x) layer by layer, where
// g_l carries g's translation divided by the layer's cumulative stride. The
// translation must be a multiple of every cumulative stride; the centered
// stride lattice makes the offsets line up exactly. Comparison is over the
// overlap region (positions whose preimage under g_l stays on the grid);
// under pure stabilizer elements that is the whole field.
template <typename T>
EquivarianceReport<T> check_equivariance(const SovnetModel<T>& model, const Tensor<T>& image,
                                         const GroupElement& g) {
  NoGradGuard ng;
  if (g.kind != model.cfg.group) throw GroupKindMismatch("check_equivariance: group mismatch");
  ForwardTrace<T> base = model.forward(image);
  Tensor<T> moved = left_translate_plane(image, g, model.cfg.image_size, model.cfg.image_size);
  ForwardTrace<T> trans = model.forward(moved);

  EquivarianceReport<T> rep;
  auto scaled = [&](int cum) {
    if (g.translation.u % cum != 0 || g.translation.v % cum != 0)
      throw ShapeMismatch("check_equivariance: translation not a multiple of the layer stride");
    GroupElement gl = g;
    gl.translation = {g.translation.u / cum, g.translation.v / cum};
    return gl;
  };

  GroupGrid grid0{model.cfg.group, model.cfg.image_size, model.cfg.image_size};
  rep.layer_diffs.push_back(masked_action_diff(base.stem, trans.stem, scaled(1), grid0));
  for (std::size_t l = 0; l < base.layers.size(); ++l) {
    const auto& bl = base.layers[l];
    const auto& tl = trans.layers[l];
    GroupElement gl = scaled(bl.cum_stride);
    T m = T(0);
    for (std::size_t i = 0; i < bl.fields.size(); ++i)
      m = std::max(m, masked_action_diff(bl.fields[i], tl.fields[i], gl, bl.grid));
    rep.layer_diffs.push_back(m);
  }
  for (T dv : rep.layer_diffs) rep.max_field_diff = std::max(rep.max_field_diff, dv);
  if (g.translation == Vec2{}) rep.score_diff = max_abs_diff(trans.scores, base.scores);
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints: "SOVN1", length-prefixed config text, then one record per
// parameter (name, element width, extents, raw little-endian values).

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw TruncatedFile("checkpoint: unexpected end of file");
  return v;
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw TruncatedFile("checkpoint: unexpected end of file");
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[5] = {'S', 'O', 'V', 'N', '1'};

template <typename T>
void save_checkpoint(SovnetModel<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write(kCheckpointMagic, 5);
  std::string cfg = model.cfg.to_text();
  detail::write_u64(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  auto params = model.named_parameters();
  detail::write_u64(os, params.size());
  for (auto& [name, t] : params) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(sizeof(T)));
    detail::write_u32(os, static_cast<std::uint32_t>(t->rank()));
    for (auto e : t->shape()) detail::write_u64(os, e);
    os.write(reinterpret_cast<const char*>(t->values().data()),
             static_cast<std::streamsize>(t->size() * sizeof(T)));
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

template <typename T>
SovnetModel<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path);
  char magic[5];
  if (!is.read(magic, 5) || !std::equal(magic, magic + 5, kCheckpointMagic))
    throw BadMagic("checkpoint: bad magic in " + path);
  std::string cfg_text(detail::read_u64(is), '\0');
  if (!is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size())))
    throw TruncatedFile("checkpoint: truncated config");
  SovnetModel<T> model(ModelConfig::from_text(cfg_text));
  auto params = model.named_parameters();
  std::uint64_t count = detail::read_u64(is);
  if (count != params.size())
    throw CountMismatch("checkpoint: " + std::to_string(count) + " parameters, model has " +
                        std::to_string(params.size()));
  for (auto& [name, t] : params) {
    std::string rname(detail::read_u32(is), '\0');
    if (!is.read(rname.data(), static_cast<std::streamsize>(rname.size())) || rname != name)
      throw CheckpointError("checkpoint: expected parameter '" + name + "', found '" + rname + "'");
    int width = is.get();
    if (width != static_cast<int>(sizeof(T)))
      throw CheckpointError("checkpoint: element width " + std::to_string(width) + ", expected " +
                            std::to_string(sizeof(T)));
    Shape shape(detail::read_u32(is));
    for (auto& e : shape) e = detail::read_u64(is);
    if (shape != t->shape())
      throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                            ", model expects " + shape_str(t->shape()));
    if (!is.read(reinterpret_cast<char*>(t->raw_values().data()),
                 static_cast<std::streamsize>(t->size() * sizeof(T))))
      throw TruncatedFile("checkpoint: truncated values for '" + name + "'");
    t->set_requires_grad(true);
  }
  return model;
}

}  // namespace sovnet
