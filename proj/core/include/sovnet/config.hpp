#pragma once

#include <string>
#include <vector>

#include "sovnet/errors.hpp"
#include "sovnet/group.hpp"

namespace sovnet {

// Architecture hyperparameters. image_size is the spatial extent the model
// consumes (after any dataset padding); odd extents keep stride-2 layers
// exactly rotation-equivariant.
struct ModelConfig {
  GroupKind group = GroupKind::p4;
  int in_channels = 1;
  int image_size = 15;
  int stem_channels = 8;
  int num_types = 2;              // capsule types per hidden layer
  int pose_dim = 4;               // pose dimension, all layers
  int hidden_layers = 2;
  std::vector<int> strides = {2, 2};  // per hidden layer
  int primary_stride = 1;
  int classes = 4;
  int kernel = 3;
  std::vector<int> decoder_hidden = {32, 64};

  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 1e-3;
  double lr_decay = 0.95;          // multiplicative, per epoch
  double recon_weight = 5e-4;
  bool reconstruction = true;
  unsigned long long seed = 1;
  double target_accuracy = 0.0;    // stop early once validation reaches this (0 = never)
};

struct DataConfig {
  std::string dataset = "shapes";  // shapes | idx
  int train_count = 2000;
  int test_count = 500;
  int image_size = 15;
  int pad_to = 0;                  // zero-pad images up to this extent (0 = keep)
  unsigned long long seed = 7;
  std::string train_images, train_labels, test_images, test_labels;  // idx paths
};

// Plain-text key=value configuration with [model] / [training] / [data]
// sections. Unknown keys are an error.
struct RunConfig {
  ModelConfig model;
  TrainConfig training;
  DataConfig data;

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text);
  // Apply one "section.key=value" override (CLI flags beat file values).
  void set(const std::string& dotted_key, const std::string& value);
};

}  // namespace sovnet
