#pragma once

#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "model/params.hpp"

namespace anca {

// Cellular-automaton feature extractor parameters: two fixed-size depthwise
// perception kernels and a two-layer per-cell update network.
struct NcaParams {
  Tensor kappa1, kappa2;  // [n,3,3]
  Tensor w1, b1;          // [h,3n], [h]
  Tensor w2, b2;          // [n,h], [n]

  static NcaParams from(const ParamSet& ps);
  void into(ParamSet& ps) const;
  int64_t count() const;
};

Tensor seed_state(const Tensor& image, int channels);

// concat(state, conv(state, kappa1), conv(state, kappa2)) -> [H,W,3n].
Tensor perceive(const Tensor& state, const NcaParams& p);

// One asynchronous update: cells with a set mask byte receive the residual
// update, all others are copied bitwise.
Tensor nca_step(const Tensor& state, const NcaParams& p, const std::vector<uint8_t>& mask);

struct RolloutConfig {
  int steps = 64;
  float fire_rate = 0.5f;
};

// Runs `steps` updates with per-step Bernoulli masks drawn from `masks`.
// If trajectory is given it receives steps+1 grids including the seed state.
Tensor rollout(const Tensor& image, const NcaParams& p, const RolloutConfig& cfg,
               const MaskStream& masks, std::vector<Tensor>* trajectory = nullptr);

}  // namespace anca
