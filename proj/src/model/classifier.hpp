#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"
#include "model/params.hpp"

namespace anca {

// Two-layer softmax head over the pooled embedding.
struct HeadParams {
  Tensor w1, b1;  // [h,n], [h]
  Tensor w2, b2;  // [C,h], [C]

  static HeadParams from(const ParamSet& ps);
};

// softmax(w2 * relu(w1 * v + b1) + b2) -> [C].
Tensor head_probs(const Tensor& embedding, const HeadParams& p);

// -alpha * (1-p_y)^gamma * log(p_y); gamma = 0 gives weighted cross-entropy.
double focal_loss(const Tensor& probs, int label, float gamma, float alpha = 1.0f);

struct Metrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [true][pred]
  std::vector<double> recall;                   // NaN-free; absent classes skipped in the mean
};

Metrics compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                        int num_classes);

// argmax with the lowest index winning ties.
int argmax_class(const Tensor& probs);

}  // namespace anca
