#pragma once

#include <cstdint>

#include "model/params.hpp"

namespace anca {

struct AdamConfig {
  double lr0 = 0.0004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.9999;  // per-step multiplicative learning-rate factor
};

// First/second moment tensors mirror the parameter list; t counts completed
// optimizer steps.
struct AdamState {
  std::vector<std::pair<std::string, Tensor>> m;
  std::vector<std::pair<std::string, Tensor>> u;
  int64_t t = 0;

  static AdamState init(const ParamSet& params);
};

double lr_at(int64_t step, double lr0, double decay);

// One bias-corrected update. `grads` must mirror `params` name for name and
// shape for shape. Moment math runs in double and is stored back to float.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace anca
