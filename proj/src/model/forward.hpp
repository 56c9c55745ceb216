#pragma once

#include <string_view>
#include <vector>

#include "core/engine.hpp"
#include "core/rng.hpp"
#include "model/params.hpp"

// The full pipeline (seed -> rollout -> pooling -> head -> loss) written once
// over the engine surface. The trainer instantiates it with TapeEngine, the
// evaluator with EvalEngine<float>, the gradient checker with
// EvalEngine<double>.
namespace anca {

// [H,W,3] normalized image into an n-channel grid: RGB in the first three
// channels, zeros elsewhere.
inline Tensor seed_state_tensor(const Tensor& image, int channels) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw Error(ErrorCode::shape, "seed_state: image must be [H,W,3], got " + shape_str(image.shape));
  if (channels < 3) throw Error(ErrorCode::shape, "seed_state: need at least 3 channels");
  const int h = image.dim(0), w = image.dim(1);
  Tensor state({h, w, channels});
  for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
    for (int c = 0; c < 3; ++c)
      state.data[static_cast<size_t>(p) * channels + c] = image.data[static_cast<size_t>(p) * 3 + c];
  return state;
}

template <class E>
struct BoundParams {
  std::vector<std::pair<std::string, typename E::V>> leaves;

  typename E::V at(std::string_view name) const {
    for (const auto& [k, v] : leaves)
      if (k == name) return v;
    throw Error(ErrorCode::internal, "no bound parameter named '" + std::string(name) + "'");
  }
};

template <class E>
BoundParams<E> bind_params(E& eng, const ParamSet& ps, bool trainable) {
  BoundParams<E> b;
  b.leaves.reserve(ps.items.size());
  for (const auto& [name, t] : ps.items) b.leaves.emplace_back(name, eng.leaf(t, trainable));
  return b;
}

template <class E>
typename E::V nca_step_e(E& eng, const BoundParams<E>& p, typename E::V state,
                         std::vector<uint8_t> mask) {
  auto c1 = eng.conv3x3_dw(state, p.at("nca.kappa1"));
  auto c2 = eng.conv3x3_dw(state, p.at("nca.kappa2"));
  auto perception = eng.concat3_ch(state, c1, c2);
  auto hidden = eng.relu(eng.dense_last(perception, p.at("nca.w1"), p.at("nca.b1")));
  auto update = eng.dense_last(hidden, p.at("nca.w2"), p.at("nca.b2"));
  return eng.masked_add(state, update, std::move(mask));
}

template <class E>
typename E::V rollout_e(E& eng, const BoundParams<E>& p, typename E::V state, int steps,
                        float fire_rate, const MaskStream& masks,
                        std::vector<typename E::V>* trajectory = nullptr) {
  const Shape s = eng.shape_of(state);
  if (trajectory) trajectory->push_back(state);
  for (int t = 0; t < steps; ++t) {
    Rng r = masks.at(static_cast<uint64_t>(t));
    state = nca_step_e(eng, p, state, bernoulli_mask(r, s[0], s[1], fire_rate));
    if (trajectory) trajectory->push_back(state);
  }
  return state;
}

template <class E>
typename E::V pooled_embedding_e(E& eng, const BoundParams<E>& p, PoolMode mode, float q,
                                 typename E::V state) {
  if (mode == PoolMode::max) return eng.max_ch(state);
  typename E::V gate;
  if (mode == PoolMode::attention) {
    gate = eng.sigmoid(p.at("pool.theta"));
  } else {
    auto score = eng.dense_last(state, p.at("pool.wc"), p.at("pool.bc"));  // [H,W,1]
    const Shape s = eng.shape_of(state);
    gate = eng.sigmoid(eng.reshape(score, {s[0], s[1]}));
  }
  return eng.top_q_mean_ch(eng.mul_gate(state, gate), q);
}

template <class E>
typename E::V class_probs_e(E& eng, const BoundParams<E>& p, typename E::V embedding) {
  auto hidden = eng.relu(eng.dense_last(embedding, p.at("head.w1"), p.at("head.b1")));
  auto logits = eng.dense_last(hidden, p.at("head.w2"), p.at("head.b2"));
  return eng.softmax_last(logits);
}

struct ForwardSpec {
  int steps = 64;
  float fire_rate = 0.5f;
  PoolMode pool_mode = PoolMode::attention;
  float top_q = 0.10f;
  float gamma = 2.0f;
};

// Probability vector for one normalized image.
template <class E>
typename E::V forward_probs_e(E& eng, const BoundParams<E>& p, const Tensor& image, int channels,
                              const ForwardSpec& spec, const MaskStream& masks) {
  auto state = eng.leaf(seed_state_tensor(image, channels));
  state = rollout_e(eng, p, state, spec.steps, spec.fire_rate, masks);
  auto v = pooled_embedding_e(eng, p, spec.pool_mode, spec.top_q, state);
  return class_probs_e(eng, p, v);
}

template <class E>
typename E::V forward_loss_e(E& eng, const BoundParams<E>& p, const Tensor& image, int channels,
                             int label, float alpha, const ForwardSpec& spec,
                             const MaskStream& masks) {
  auto probs = forward_probs_e(eng, p, image, channels, spec, masks);
  return eng.focal_loss(probs, label, spec.gamma, alpha);
}

}  // namespace anca
