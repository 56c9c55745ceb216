#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"

namespace anca {

// Selection size for the top-q mean over `cells` values.
int top_q_count(float q, int64_t cells);

// Mean of the k largest entries of `values` (any shape, flattened row-major;
// ties prefer the lower flat index). Selected indices, ascending, go to
// `selected` when given.
float top_q_mean(const Tensor& values, float q, std::vector<int32_t>* selected = nullptr);

// Gated spatial pooling: per channel, mean of the top-q values of
// state[:,:,c] * sigmoid(theta). Returns [n]; `selected` receives k indices
// per channel, channel-major.
Tensor attention_pool(const Tensor& state, const Tensor& theta, float q,
                      std::vector<int32_t>* selected = nullptr);

// Content-based score map: theta[i,j] = sum_c state[i,j,c] * wc[c] + bc.
Tensor conv_attention_map(const Tensor& state, const Tensor& wc, float bc);

// Per-channel spatial maximum; `argmax` receives one flat index per channel.
Tensor max_pool(const Tensor& state, std::vector<int32_t>* argmax = nullptr);

}  // namespace anca
