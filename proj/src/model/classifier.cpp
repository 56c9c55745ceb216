#include "model/classifier.hpp"

#include "core/kernels.hpp"

namespace anca {

HeadParams HeadParams::from(const ParamSet& ps) {
  HeadParams p;
  p.w1 = ps.at("head.w1");
  p.b1 = ps.at("head.b1");
  p.w2 = ps.at("head.w2");
  p.b2 = ps.at("head.b2");
  return p;
}

Tensor head_probs(const Tensor& embedding, const HeadParams& p) {
  Tensor hidden = kernels::relu(kernels::dense_last(embedding, p.w1, p.b1));
  Tensor logits = kernels::dense_last(hidden, p.w2, p.b2);
  return kernels::softmax_last(logits);
}

double focal_loss(const Tensor& probs, int label, float gamma, float alpha) {
  // widen first so the term is computed and returned in double
  return kernels::focal_loss_term(tensor_cast<double>(probs), label, gamma, alpha).data[0];
}

Metrics compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                        int num_classes) {
  if (preds.size() != labels.size())
    throw Error(ErrorCode::contract, "compute_metrics: preds and labels differ in length");
  if (num_classes < 1) throw Error(ErrorCode::contract, "compute_metrics: num_classes < 1");
  Metrics m;
  m.confusion.assign(static_cast<size_t>(num_classes),
                     std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
  int64_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const int t = labels[i], p = preds[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw Error(ErrorCode::contract, "compute_metrics: class index out of range");
    m.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)]++;
    if (t == p) ++correct;
  }
  m.accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / preds.size();
  double recall_sum = 0.0;
  int present = 0;
  m.recall.assign(static_cast<size_t>(num_classes), 0.0);
  for (int c = 0; c < num_classes; ++c) {
    int64_t row = 0;
    for (int j = 0; j < num_classes; ++j) row += m.confusion[static_cast<size_t>(c)][static_cast<size_t>(j)];
    if (row == 0) continue;  // class absent from this split
    m.recall[static_cast<size_t>(c)] =
        static_cast<double>(m.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)]) / row;
    recall_sum += m.recall[static_cast<size_t>(c)];
    ++present;
  }
  m.balanced_accuracy = present ? recall_sum / present : 0.0;
  return m;
}

int argmax_class(const Tensor& probs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.numel()); ++i)
    if (probs.data[static_cast<size_t>(i)] > probs.data[static_cast<size_t>(best)]) best = i;
  return best;
}

}  // namespace anca
