#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/tensor.hpp"

namespace anca {

enum class Op : uint8_t {
  leaf,
  conv3x3_dw,
  dense_last,
  relu,
  sigmoid,
  softmax_last,
  concat3_ch,
  masked_add,
  mul_gate,
  top_q_mean_ch,
  max_ch,
  reshape,
  focal_loss,
};

struct TapeNode {
  Op op = Op::leaf;
  int in0 = -1, in1 = -1, in2 = -1;
  bool requires_grad = false;
  Tensor value;
  // Per-op payloads recorded at forward time so the backward sweep never
  // recomputes a decision (mask bytes, selected cells, loss constants).
  std::vector<uint8_t> mask;
  std::vector<int32_t> sel;
  int32_t sel_k = 0;
  int32_t label = -1;
  float gamma = 0.0f, alpha = 1.0f;
};

// Reverse-mode tape. Forward values are float; the backward sweep accumulates
// into double buffers in reverse node order, so replaying it is bitwise
// reproducible.
class Tape {
 public:
  int leaf(Tensor v, bool requires_grad = false);
  int conv3x3_dw(int input, int kernels);
  int dense_last(int input, int weight, int bias);
  int relu(int x);
  int sigmoid(int x);
  int softmax_last(int x);
  int concat3_ch(int a, int b, int c);
  int masked_add(int state, int update, std::vector<uint8_t> mask);
  int mul_gate(int state, int gate);
  int top_q_mean_ch(int x, float q);
  int max_ch(int x);
  int reshape(int x, Shape s);
  int focal_loss(int probs, int label, float gamma, float alpha);

  size_t size() const { return nodes_.size(); }
  const Tensor& value(int id) const { return at(id).value; }
  const TapeNode& node(int id) const { return at(id); }

  // Seeds the root gradient and sweeps to the leaves. The scalar overload
  // requires a single-element root. Gradient buffers are reset per call.
  void backward(int root);
  void backward(int root, std::span<const double> seed);

  // Accumulated gradient of a node; empty if the node needs no gradient.
  std::span<const double> grad(int id) const;
  Tensor grad_f32(int id) const;

 private:
  const TapeNode& at(int id) const;
  int push(TapeNode n);
  std::vector<double>& ensure_grad(int id);

  std::vector<TapeNode> nodes_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace anca
