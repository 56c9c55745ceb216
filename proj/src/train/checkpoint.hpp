#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "opt/adam.hpp"
#include "train/config.hpp"

namespace anca {

// Binary snapshot of a training run. Magic "ANCA", version, the config text,
// class names, normalization stats, parameter tensors (little-endian f32 with
// name/rank/extents), optional optimizer moments, the step counter, and the
// last logged metrics. save(load(x)) is byte-identical.
struct Checkpoint {
  TrainConfig config;
  std::vector<std::string> class_names;
  ChannelStats stats;
  ParamSet params;
  bool has_adam = false;
  AdamState adam;
  int64_t step = 0;
  int32_t epochs_completed = 0;
  double last_loss = 0.0;
  double last_accuracy = 0.0;
  double last_balanced_accuracy = 0.0;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace anca
