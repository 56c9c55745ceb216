#include "model/pooling.hpp"

#include "core/kernels.hpp"

namespace anca {

int top_q_count(float q, int64_t cells) { return kernels::top_q_count(q, cells); }

float top_q_mean(const Tensor& values, float q, std::vector<int32_t>* selected) {
  Tensor flat({1, static_cast<int>(values.numel()), 1}, values.data);
  Tensor out = kernels::top_q_mean_channels(flat, q, selected);
  return out.data[0];
}

Tensor attention_pool(const Tensor& state, const Tensor& theta, float q,
                      std::vector<int32_t>* selected) {
  if (theta.rank() != 2 || state.rank() != 3 || theta.dim(0) != state.dim(0) ||
      theta.dim(1) != state.dim(1))
    throw Error(ErrorCode::shape, "attention_pool: theta " + shape_str(theta.shape) +
                                      " does not match state " + shape_str(state.shape));
  Tensor gate = kernels::sigmoid(theta);
  Tensor prod = kernels::mul_gate(state, gate);
  return kernels::top_q_mean_channels(prod, q, selected);
}

Tensor conv_attention_map(const Tensor& state, const Tensor& wc, float bc) {
  if (state.rank() != 3) throw Error(ErrorCode::shape, "conv_attention_map: state must be [H,W,n]");
  Tensor w = wc.rank() == 2 ? wc : Tensor({1, static_cast<int>(wc.numel())}, wc.data);
  Tensor b({1}, {bc});
  Tensor score = kernels::dense_last(state, w, b);  // [H,W,1]
  return Tensor({state.dim(0), state.dim(1)}, std::move(score.data));
}

Tensor max_pool(const Tensor& state, std::vector<int32_t>* argmax) {
  return kernels::max_channels(state, argmax);
}

}  // namespace anca
