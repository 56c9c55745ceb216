#pragma once

#include <cstdint>
#include <string>

#include "data/image.hpp"
#include "model/params.hpp"

namespace anca {

// Flat key = value config ('#' comments). Unknown keys are errors. Defaults
// reproduce the full training recipe.
struct TrainConfig {
  int input_size = 64;
  int channels = 128;
  int steps = 64;
  int hidden = 128;
  float fire_rate = 0.5f;
  PoolMode pool_mode = PoolMode::attention;
  float top_q = 0.10f;
  float gamma = 2.0f;
  bool class_weights = false;
  double lr0 = 0.0004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double decay = 0.9999;
  int batch_size = 16;
  int epochs = 32;
  int folds = 5;
  uint64_t seed = 0;
  AugmentMode augment = AugmentMode::rot90_flip;
  int checkpoint_interval = 0;  // epochs between periodic saves; 0 = final only
  bool bptt_checkpoint = false;  // recompute sqrt(T) rollout segments in backward
  int threads = 0;               // 0 = hardware concurrency

  void set(const std::string& key, const std::string& value);
  void validate() const;

  // Canonical serialization: fixed key order, shortest round-trip numerals.
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text, const std::string& source);
  static TrainConfig load(const std::string& path);
  void save(const std::string& path) const;

  ModelDims dims(int num_classes) const;

  // Fields that shape the training trajectory; resuming requires them equal.
  bool trajectory_equal(const TrainConfig& other) const;
};

}  // namespace anca
