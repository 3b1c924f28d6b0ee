#pragma once

// Datasets: IDX-format readers/writers, the synthetic four-class shapes
// corpus, and the random affine perturbations used to build transformed
// train/test splits. Pixel data is kept as float in [0,1]; images are
// materialized as tensors on demand.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sovnet/config.hpp"
#include "sovnet/tensor.hpp"

namespace sovnet {

struct Dataset {
  int count = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // count * height * width, row-major, [0,1]
  std::vector<int> labels;    // count

  template <typename T>
  Tensor<T> image(int i) const {
    if (i < 0 || i >= count) throw IndexOutOfRange("Dataset::image: index " + std::to_string(i));
    std::size_t n = static_cast<std::size_t>(height) * width;
    std::vector<T> v(n);
    const float* src = pixels.data() + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) v[j] = static_cast<T>(src[j]);
    return Tensor<T>::from_data({1, static_cast<std::size_t>(height), static_cast<std::size_t>(width)},
                                std::move(v), false);
  }
};

// IDX (big-endian magic 0x00000803 for images, 0x00000801 for labels).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// Four rotation-distinguishable classes: 0 bar, 1 L, 2 T, 3 cross. Shapes are
// drawn at random positions/orientations with mild intensity jitter and
// low-amplitude background noise.
Dataset synthetic_shapes(int count, int image_size, unsigned long long seed);

// Zero-pad every image up to (target x target), centered; target >= current.
Dataset pad_dataset(const Dataset& ds, int target);

// Rotate by `degrees` about the image center, then translate by (dx, dy)
// pixels (dx right, dy down). Quarter-turn angles with integer offsets take
// an exact permutation path; everything else is bilinear.
std::vector<float> affine_transform(const std::vector<float>& img, int h, int w, double degrees,
                                    double dx, double dy);

// Independent uniform draws per image: rotation in [-max_degrees, max_degrees],
// translation components in [-max_translate, max_translate].
Dataset perturb_dataset(const Dataset& ds, double max_translate, double max_degrees,
                        unsigned long long seed);

// Materialize the configured dataset. "shapes" synthesizes train+test with
// the config seed; "idx" loads the four files, resolving relative paths
// against $SOVNET_DATA_DIR when it is set. Applies pad_to if nonzero.
struct SplitDatasets {
  Dataset train, test;
};
SplitDatasets make_datasets(const DataConfig& cfg);

// Directory from $SOVNET_DATA_DIR, when set and non-empty.
std::optional<std::string> data_dir_from_env();

}  // namespace sovnet
