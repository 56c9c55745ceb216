#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace anca {

enum class PoolMode { attention, conv_attention, max };

const char* pool_mode_name(PoolMode m);
PoolMode pool_mode_from(std::string_view name);

struct ModelDims {
  int input_size = 64;
  int channels = 128;
  int hidden = 128;
  int num_classes = 2;
  PoolMode pool_mode = PoolMode::attention;
};

// Named parameter tensors in a fixed canonical order (initialization draw
// order, checkpoint layout, and gradient reduction order all follow it).
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool has(std::string_view name) const;
  int64_t count() const;
};

// Gradient accumulator mirroring a ParamSet, kept in double until the
// optimizer consumes it.
struct GradSet {
  std::vector<std::pair<std::string, std::vector<double>>> items;

  static GradSet zeros_like(const ParamSet& ps);
  void add(const GradSet& other);
  void scale(double s);
  ParamSet to_f32(const ParamSet& shapes) const;
  const std::vector<double>& at(std::string_view name) const;
};

// Uniform fan-in init for the perception and head weights; the update output
// layer, its bias, and the attention parameters start at zero so the first
// rollout is an identity map.
ParamSet init_params(const ModelDims& dims, Rng rng);

int64_t nca_param_count(int channels, int hidden);
int64_t param_count(const ModelDims& dims);

}  // namespace anca
