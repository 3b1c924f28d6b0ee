#include "sovnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

namespace sovnet {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw TruncatedFile("idx: unexpected end of " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::optional<std::string> data_dir_from_env() {
  const char* dir = std::getenv("SOVNET_DATA_DIR");
  if (dir && *dir) return std::string(dir);
  return std::nullopt;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataEmpty("idx: cannot open " + images_path);
  if (read_be32(imgs, images_path) != kImageMagic) throw BadMagic("idx: bad image magic in " + images_path);
  std::uint32_t count = read_be32(imgs, images_path);
  std::uint32_t rows = read_be32(imgs, images_path);
  std::uint32_t cols = read_be32(imgs, images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw DataEmpty("idx: cannot open " + labels_path);
  if (read_be32(labs, labels_path) != kLabelMagic) throw BadMagic("idx: bad label magic in " + labels_path);
  std::uint32_t lcount = read_be32(labs, labels_path);
  if (lcount != count)
    throw CountMismatch("idx: " + std::to_string(count) + " images vs " + std::to_string(lcount) + " labels");
  if (count == 0) throw DataEmpty("idx: empty dataset " + images_path);

  Dataset ds;
  ds.count = static_cast<int>(count);
  ds.height = static_cast<int>(rows);
  ds.width = static_cast<int>(cols);
  std::size_t n = static_cast<std::size_t>(count) * rows * cols;
  std::vector<unsigned char> raw(n);
  if (!imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n)))
    throw TruncatedFile("idx: truncated pixel data in " + images_path);
  ds.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.pixels[i] = raw[i] / 255.0f;

  std::vector<unsigned char> lraw(count);
  if (!labs.read(reinterpret_cast<char*>(lraw.data()), count))
    throw TruncatedFile("idx: truncated label data in " + labels_path);
  ds.labels.assign(lraw.begin(), lraw.end());
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  if (!imgs) throw DataEmpty("idx: cannot open for writing " + images_path);
  write_be32(imgs, kImageMagic);
  write_be32(imgs, static_cast<std::uint32_t>(ds.count));
  write_be32(imgs, static_cast<std::uint32_t>(ds.height));
  write_be32(imgs, static_cast<std::uint32_t>(ds.width));
  for (float p : ds.pixels) {
    float clamped = std::min(1.0f, std::max(0.0f, p));
    imgs.put(static_cast<char>(std::lround(clamped * 255.0f)));
  }

  std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
  if (!labs) throw DataEmpty("idx: cannot open for writing " + labels_path);
  write_be32(labs, kLabelMagic);
  write_be32(labs, static_cast<std::uint32_t>(ds.count));
  for (int l : ds.labels) labs.put(static_cast<char>(l));
}

namespace {

struct Stroke {
  std::vector<std::pair<int, int>> px;  // (row, col) within a local box
  int box = 0;
};

// Shape skeletons in a box of side `arm`, before orientation and placement.
Stroke make_shape(int cls, int arm) {
  Stroke s;
  s.box = arm;
  auto put = [&](int r, int c) { s.px.emplace_back(r, c); };
  int mid = arm / 2;
  switch (cls) {
    case 0:  // bar
      for (int c = 0; c < arm; ++c) put(mid, c);
      break;
    case 1:  // L
      for (int r = 0; r < arm; ++r) put(r, 0);
      for (int c = 1; c < arm; ++c) put(arm - 1, c);
      break;
    case 2:  // T
      for (int c = 0; c < arm; ++c) put(0, c);
      for (int r = 1; r < arm; ++r) put(r, mid);
      break;
    default:  // cross
      for (int c = 0; c < arm; ++c) put(mid, c);
      for (int r = 0; r < arm; ++r)
        if (r != mid) put(r, mid);
      break;
  }
  return s;
}

// Quarter-turn rotation of a local box coordinate.
std::pair<int, int> rot_box(int r, int c, int box, int turns) {
  for (int t = 0; t < turns; ++t) {
    int nr = box - 1 - c;
    int nc = r;
    r = nr;
    c = nc;
  }
  return {r, c};
}

}  // namespace

Dataset synthetic_shapes(int count, int image_size, unsigned long long seed) {
  if (count <= 0) throw DataEmpty("synthetic_shapes: count must be positive");
  if (image_size < 9) throw DataEmpty("synthetic_shapes: image size must be at least 9");
  Dataset ds;
  ds.count = count;
  ds.height = ds.width = image_size;
  ds.pixels.assign(static_cast<std::size_t>(count) * image_size * image_size, 0.0f);
  ds.labels.resize(count);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> arm_dist(5, std::min(9, image_size - 4));
  std::uniform_int_distribution<int> turn_dist(0, 3);

  for (int i = 0; i < count; ++i) {
    int cls = i % 4;
    ds.labels[i] = cls;
    float* img = ds.pixels.data() + static_cast<std::size_t>(i) * image_size * image_size;

    int arm = arm_dist(rng);
    int turns = turn_dist(rng);
    std::uniform_int_distribution<int> pos(1, image_size - arm - 1);
    int r0 = pos(rng);
    int c0 = pos(rng);
    Stroke s = make_shape(cls, arm);
    for (auto [r, c] : s.px) {
      auto [rr, rc] = rot_box(r, c, s.box, turns);
      img[(r0 + rr) * image_size + (c0 + rc)] = 1.0f;  // binary glyphs
    }
  }
  return ds;
}

Dataset pad_dataset(const Dataset& ds, int target) {
  if (target < ds.height || target < ds.width) throw ShapeMismatch("pad_dataset: target smaller than image");
  if (target == ds.height && target == ds.width) return ds;
  Dataset out;
  out.count = ds.count;
  out.height = out.width = target;
  out.labels = ds.labels;
  out.pixels.assign(static_cast<std::size_t>(ds.count) * target * target, 0.0f);
  int dr = (target - ds.height) / 2;
  int dc = (target - ds.width) / 2;
  for (int i = 0; i < ds.count; ++i) {
    const float* src = ds.pixels.data() + static_cast<std::size_t>(i) * ds.height * ds.width;
    float* dst = out.pixels.data() + static_cast<std::size_t>(i) * target * target;
    for (int r = 0; r < ds.height; ++r)
      for (int c = 0; c < ds.width; ++c) dst[(r + dr) * target + (c + dc)] = src[r * ds.width + c];
  }
  return out;
}

std::vector<float> affine_transform(const std::vector<float>& img, int h, int w, double degrees,
                                    double dx, double dy) {
  std::vector<float> out(img.size(), 0.0f);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;

  // Quarter turns with integer offsets permute pixels exactly.
  double turns_f = degrees / 90.0;
  bool exact = std::abs(turns_f - std::round(turns_f)) < 1e-12 &&
               std::abs(dx - std::round(dx)) < 1e-12 && std::abs(dy - std::round(dy)) < 1e-12;
  if (exact) {
    int k = ((static_cast<int>(std::llround(turns_f)) % 4) + 4) % 4;
    int idx = static_cast<int>(std::llround(dx)), idy = static_cast<int>(std::llround(dy));
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        // Doubled centered coordinates stay integral for even extents too.
        std::int64_t u = 2 * (c - idx) - (w - 1);
        std::int64_t v = 2 * (r - idy) - (h - 1);
        for (int t = 0; t < k; ++t) {  // inverse rotation, one quarter turn at a time
          std::int64_t nu = -v, nv = u;
          u = nu;
          v = nv;
        }
        if ((u + (w - 1)) % 2 != 0 || (v + (h - 1)) % 2 != 0) continue;
        std::int64_t sc = (u + (w - 1)) / 2, sr = (v + (h - 1)) / 2;
        if (sr < 0 || sr >= h || sc < 0 || sc >= w) continue;
        out[r * w + c] = img[sr * w + sc];
      }
    return out;
  }

  double rad = degrees * M_PI / 180.0;
  double cs = std::cos(rad), sn = std::sin(rad);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double x = (c - dx) - cx;
      double y = (r - dy) - cy;
      double sx = cs * x + sn * y + cx;  // inverse rotation
      double sy = -sn * x + cs * y + cy;
      int c0 = static_cast<int>(std::floor(sx));
      int r0 = static_cast<int>(std::floor(sy));
      double fx = sx - c0, fy = sy - r0;
      double acc = 0.0;
      for (int rr = 0; rr < 2; ++rr)
        for (int cc = 0; cc < 2; ++cc) {
          int pr = r0 + rr, pc = c0 + cc;
          if (pr < 0 || pr >= h || pc < 0 || pc >= w) continue;
          double wgt = (rr ? fy : 1.0 - fy) * (cc ? fx : 1.0 - fx);
          acc += wgt * img[pr * w + pc];
        }
      out[r * w + c] = static_cast<float>(acc);
    }
  return out;
}

Dataset perturb_dataset(const Dataset& ds, double max_translate, double max_degrees,
                        unsigned long long seed) {
  Dataset out = ds;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-max_degrees, max_degrees);
  // Translations are sampled on the integer lattice; rotations are real.
  int max_t = static_cast<int>(std::floor(max_translate));
  std::uniform_int_distribution<int> shift(-max_t, max_t);
  std::size_t n = static_cast<std::size_t>(ds.height) * ds.width;
  for (int i = 0; i < ds.count; ++i) {
    std::vector<float> img(ds.pixels.begin() + i * n, ds.pixels.begin() + (i + 1) * n);
    double deg = max_degrees > 0 ? angle(rng) : 0.0;
    double dx = max_t > 0 ? shift(rng) : 0.0;
    double dy = max_t > 0 ? shift(rng) : 0.0;
    std::vector<float> t = affine_transform(img, ds.height, ds.width, deg, dx, dy);
    std::copy(t.begin(), t.end(), out.pixels.begin() + i * n);
  }
  return out;
}

namespace {

std::string resolve_path(const std::string& p) {
  namespace fs = std::filesystem;
  if (p.empty()) throw ConfigError("idx dataset: missing file path");
  if (!fs::path(p).is_absolute())
    if (auto dir = data_dir_from_env()) return (fs::path(*dir) / p).string();
  return p;
}

Dataset take_first(const Dataset& ds, int count) {
  if (count <= 0 || count >= ds.count) return ds;
  Dataset out;
  out.count = count;
  out.height = ds.height;
  out.width = ds.width;
  std::size_t n = static_cast<std::size_t>(ds.height) * ds.width;
  out.pixels.assign(ds.pixels.begin(), ds.pixels.begin() + count * n);
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + count);
  return out;
}

}  // namespace

SplitDatasets make_datasets(const DataConfig& cfg) {
  SplitDatasets out;
  if (cfg.dataset == "shapes") {
    out.train = synthetic_shapes(cfg.train_count, cfg.image_size, cfg.seed);
    out.test = synthetic_shapes(cfg.test_count, cfg.image_size, cfg.seed + 1);
  } else {
    out.train = take_first(load_idx(resolve_path(cfg.train_images), resolve_path(cfg.train_labels)),
                           cfg.train_count);
    out.test = take_first(load_idx(resolve_path(cfg.test_images), resolve_path(cfg.test_labels)),
                          cfg.test_count);
  }
  if (cfg.pad_to > 0) {
    out.train = pad_dataset(out.train, cfg.pad_to);
    out.test = pad_dataset(out.test, cfg.pad_to);
  }
  return out;
}

}  // namespace sovnet
