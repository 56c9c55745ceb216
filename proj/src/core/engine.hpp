#pragma once

#include <cstdint>
#include <vector>

#include "core/kernels.hpp"
#include "core/tape.hpp"
#include "core/tensor.hpp"

// The model pipeline is written once against this engine surface and then
// instantiated three ways: TapeEngine (records for the backward sweep),
// EvalEngine<float> (fast inference), EvalEngine<double> (reference forward
// for finite-difference checks). All three share the kernels, so a value
// computed by TapeEngine matches EvalEngine<float> bitwise.
//
// Every engine folds data-dependent branch decisions (top-q selections, max
// arguments) into selection_hash; two forward passes agree on control flow
// iff their hashes agree.
namespace anca {

inline uint64_t hash_accumulate(uint64_t h, uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

// relu's active set is a data-dependent branch decision like a top-q
// selection; folding its sign pattern lets gradient checks detect (and skip)
// finite-difference steps that straddle the kink.
template <class T>
uint64_t hash_sign_pattern(uint64_t h, const std::vector<T>& xs) {
  uint64_t word = 0;
  int bits = 0;
  for (const T& v : xs) {
    word = (word << 1) | (v > T(0) ? 1u : 0u);
    if (++bits == 64) {
      h = hash_accumulate(h, word);
      word = 0;
      bits = 0;
    }
  }
  if (bits) h = hash_accumulate(h, word);
  return h;
}

template <class T>
class EvalEngine {
 public:
  using V = TensorT<T>;

  V leaf(const Tensor& v, bool /*trainable*/ = false) const { return tensor_cast<T>(v); }
  V conv3x3_dw(const V& x, const V& k) const { return kernels::conv3x3_depthwise(x, k); }
  V dense_last(const V& x, const V& w, const V& b) const { return kernels::dense_last(x, w, b); }
  V relu(const V& x) {
    sel_hash_ = hash_sign_pattern(sel_hash_, x.data);
    return kernels::relu(x);
  }
  V sigmoid(const V& x) const { return kernels::sigmoid(x); }
  V softmax_last(const V& x) const { return kernels::softmax_last(x); }
  V concat3_ch(const V& a, const V& b, const V& c) const { return kernels::concat3_channels(a, b, c); }
  V masked_add(const V& s, const V& u, const std::vector<uint8_t>& m) const {
    return kernels::masked_add(s, u, m);
  }
  V mul_gate(const V& s, const V& g) const { return kernels::mul_gate(s, g); }
  V top_q_mean_ch(const V& x, float q) {
    std::vector<int32_t> sel;
    V out = kernels::top_q_mean_channels(x, q, &sel);
    absorb(sel);
    return out;
  }
  V max_ch(const V& x) {
    std::vector<int32_t> sel;
    V out = kernels::max_channels(x, &sel);
    absorb(sel);
    return out;
  }
  V reshape(const V& x, Shape s) const { return V(std::move(s), x.data); }
  V focal_loss(const V& probs, int label, float gamma, float alpha) const {
    return kernels::focal_loss_term(probs, label, gamma, alpha);
  }

  const Shape& shape_of(const V& v) const { return v.shape; }
  double scalar_of(const V& v) const { return static_cast<double>(v.data.at(0)); }

  uint64_t selection_hash() const { return sel_hash_; }
  const std::vector<int32_t>& last_selection() const { return last_sel_; }

 private:
  void absorb(const std::vector<int32_t>& sel) {
    for (int32_t s : sel) sel_hash_ = hash_accumulate(sel_hash_, static_cast<uint64_t>(s));
    last_sel_ = sel;
  }
  uint64_t sel_hash_ = 0;
  std::vector<int32_t> last_sel_;
};

class TapeEngine {
 public:
  using V = int;

  explicit TapeEngine(Tape& tape) : tape_(tape) {}

  V leaf(const Tensor& v, bool trainable = false) { return tape_.leaf(v, trainable); }
  V conv3x3_dw(V x, V k) { return tape_.conv3x3_dw(x, k); }
  V dense_last(V x, V w, V b) { return tape_.dense_last(x, w, b); }
  V relu(V x) {
    sel_hash_ = hash_sign_pattern(sel_hash_, tape_.value(x).data);
    return tape_.relu(x);
  }
  V sigmoid(V x) { return tape_.sigmoid(x); }
  V softmax_last(V x) { return tape_.softmax_last(x); }
  V concat3_ch(V a, V b, V c) { return tape_.concat3_ch(a, b, c); }
  V masked_add(V s, V u, std::vector<uint8_t> m) { return tape_.masked_add(s, u, std::move(m)); }
  V mul_gate(V s, V g) { return tape_.mul_gate(s, g); }
  V top_q_mean_ch(V x, float q) {
    V id = tape_.top_q_mean_ch(x, q);
    absorb(tape_.node(id).sel);
    return id;
  }
  V max_ch(V x) {
    V id = tape_.max_ch(x);
    absorb(tape_.node(id).sel);
    return id;
  }
  V reshape(V x, Shape s) { return tape_.reshape(x, std::move(s)); }
  V focal_loss(V probs, int label, float gamma, float alpha) {
    return tape_.focal_loss(probs, label, gamma, alpha);
  }

  const Shape& shape_of(V v) const { return tape_.value(v).shape; }
  double scalar_of(V v) const { return static_cast<double>(tape_.value(v).data.at(0)); }
  const Tensor& value_of(V v) const { return tape_.value(v); }
  Tape& tape() { return tape_; }

  uint64_t selection_hash() const { return sel_hash_; }
  const std::vector<int32_t>& last_selection() const { return last_sel_; }

 private:
  void absorb(const std::vector<int32_t>& sel) {
    for (int32_t s : sel) sel_hash_ = hash_accumulate(sel_hash_, static_cast<uint64_t>(s));
    last_sel_ = sel;
  }
  Tape& tape_;
  uint64_t sel_hash_ = 0;
  std::vector<int32_t> last_sel_;
};

}  // namespace anca
