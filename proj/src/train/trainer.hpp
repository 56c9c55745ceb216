#pragma once

#include <string>
#include <vector>

#include "core/gradcheck.hpp"
#include "model/forward.hpp"
#include "train/checkpoint.hpp"

namespace anca {

struct EpochRow {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRow& row);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRow> log;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Trains on the complement of `fold`, evaluating the held-out fold each
// epoch. `resume_path` continues from a saved checkpoint whose
// trajectory-shaping fields match `cfg`.
TrainResult train_run(const TrainConfig& cfg, const std::string& data_root, int fold,
                      const std::string& out_dir, const std::string& resume_path = {});

struct EvalReport {
  double loss = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<double> per_class_recall;
  std::vector<std::vector<int64_t>> confusion;
  int64_t count = 0;
};

// Evaluates the checkpoint on the held-out fold (fold < 0: every record).
// When out_dir is nonempty writes eval_metrics.csv and confusion.csv.
EvalReport evaluate_run(const Checkpoint& ck, const std::string& data_root, int fold,
                        const std::string& out_dir);

struct CvResult {
  std::vector<double> fold_accuracy;
  std::vector<double> fold_balanced;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_balanced = 0.0, std_balanced = 0.0;
};

// Population mean/std over per-fold final validation metrics; writes
// cv_summary.csv under out_dir with per-fold rows plus the summary.
CvResult run_cv(const TrainConfig& cfg, const std::string& data_root, const std::string& out_dir);

struct AblationRow {
  std::string variant;
  int64_t param_count = 0;
  CvResult cv;
};

// The five pooling variants (q at 5/10/20/50% plus the content-based map),
// each cross-validated; writes ablation.csv.
std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const std::string& data_root,
                                      const std::string& out_dir);

// Gate map as <prefix>_gate.pgm, per-channel selection bitmap as
// <prefix>_selection.pgm (channel c occupies rows [c*H,(c+1)*H)), pooled
// embedding as <prefix>_embedding.txt.
void export_attention(const Checkpoint& ck, const std::string& image_path,
                      const std::string& out_prefix);

// frame_<t>.ppm for t = 0..steps: channels 0-2 denormalized to bytes.
void export_trajectory(const Checkpoint& ck, const std::string& image_path,
                       const std::string& out_dir);

// Finite-difference check of the full pipeline (rollout, pooling, head, focal
// loss) at randomized parameters on config-sized dims with frozen masks.
GradCheckReport model_grad_check(const TrainConfig& cfg, int num_classes, int coords, double eps);

// Two-class synthetic set (bright disks vs bright thin bars on a dark noisy
// background), written as <out_dir>/{disk,bar}/NNNN.ppm (or .png).
void generate_toy_dataset(const std::string& out_dir, int count, int size, uint64_t seed,
                          bool as_png = false);

// Per-sample loss + gradient, exposed for tests: full-tape by default,
// sqrt(T)-segment recomputation when segmented is true.
struct SampleGrad {
  double loss = 0.0;
  int pred = -1;
  GradSet grads;
};
SampleGrad backward_sample(const ParamSet& params, int channels, const ForwardSpec& spec,
                           const Tensor& image, int label, float alpha, const MaskStream& masks,
                           bool segmented);

}  // namespace anca
