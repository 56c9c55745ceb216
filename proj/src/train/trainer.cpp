#include "train/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "core/kernels.hpp"
#include "model/classifier.hpp"
#include "model/pooling.hpp"

namespace fs = std::filesystem;

namespace anca {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void run_indexed(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
  threads = static_cast<int>(std::min<int64_t>(std::max(threads, 1), std::max<int64_t>(n, 1)));
  if (threads <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

int effective_threads(const TrainConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

ForwardSpec forward_spec(const TrainConfig& cfg) {
  ForwardSpec s;
  s.steps = cfg.steps;
  s.fire_rate = cfg.fire_rate;
  s.pool_mode = cfg.pool_mode;
  s.top_q = cfg.top_q;
  s.gamma = cfg.gamma;
  return s;
}

// Decoded, resized, normalized images; datasets small enough to fit are
// prefetched once so worker threads only read.
class ImageStore {
 public:
  ImageStore(const DatasetIndex& ds, const ChannelStats& stats, int size)
      : ds_(ds), stats_(stats), size_(size) {}

  void prefill(const std::vector<int>& record_ids) {
    if (record_ids.size() > kCacheLimit) return;
    cache_.assign(ds_.records.size(), Tensor());
    cached_.assign(ds_.records.size(), 0);
    for (int id : record_ids) {
      cache_[static_cast<size_t>(id)] = load(id);
      cached_[static_cast<size_t>(id)] = 1;
    }
  }

  Tensor get(int id) const {
    if (!cached_.empty() && cached_[static_cast<size_t>(id)]) return cache_[static_cast<size_t>(id)];
    return load(id);
  }

 private:
  static constexpr size_t kCacheLimit = 4096;

  Tensor load(int id) const {
    const auto& rec = ds_.records.at(static_cast<size_t>(id));
    Tensor t = resize_bilinear(to_float01(load_image(rec.path)), size_, size_);
    return normalize(t, stats_.mean, stats_.stddev);
  }

  const DatasetIndex& ds_;
  ChannelStats stats_;
  int size_;
  std::vector<Tensor> cache_;
  std::vector<uint8_t> cached_;
};

std::vector<int> fold_assignment(const DatasetIndex& ds, const TrainConfig& cfg, int* fold_count) {
  std::vector<int> folds;
  folds.reserve(ds.records.size());
  if (ds.has_folds) {
    int mx = 0;
    for (const auto& r : ds.records) {
      if (r.fold < 0) throw Error(ErrorCode::data, "manifest is missing a fold for '" + r.path + "'");
      mx = std::max(mx, r.fold);
      folds.push_back(r.fold);
    }
    *fold_count = mx + 1;
    return folds;
  }
  *fold_count = cfg.folds;
  return stratified_folds(ds.labels(), cfg.folds, Rng::stream(cfg.seed, "folds"));
}

void accumulate_leaf_grads(GradSet& total, const Tape& tape,
                           const BoundParams<TapeEngine>& bound) {
  for (size_t i = 0; i < bound.leaves.size(); ++i) {
    auto g = tape.grad(bound.leaves[i].second);
    if (g.empty()) continue;
    auto& dst = total.items[i].second;
    for (size_t e = 0; e < dst.size(); ++e) dst[e] += g[e];
  }
}

SampleGrad backward_full(const ParamSet& params, int channels, const ForwardSpec& spec,
                         const Tensor& image, int label, float alpha, const MaskStream& masks) {
  Tape tape;
  TapeEngine eng(tape);
  auto bound = bind_params(eng, params, true);
  const int probs = forward_probs_e(eng, bound, image, channels, spec, masks);
  const int loss = eng.focal_loss(probs, label, spec.gamma, alpha);
  tape.backward(loss);
  SampleGrad out;
  out.loss = eng.scalar_of(loss);
  out.pred = argmax_class(tape.value(probs));
  out.grads = GradSet::zeros_like(params);
  accumulate_leaf_grads(out.grads, tape, bound);
  return out;
}

SampleGrad backward_segments(const ParamSet& params, int channels, const ForwardSpec& spec,
                             const Tensor& image, int label, float alpha,
                             const MaskStream& masks) {
  const int steps = spec.steps;
  const int seg_len = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(steps)))));

  // forward sweep, keeping only segment-boundary states
  EvalEngine<float> fe;
  auto fb = bind_params(fe, params, false);
  Tensor state = seed_state_tensor(image, channels);
  const int h = state.dim(0), w = state.dim(1);
  std::vector<Tensor> boundary;
  std::vector<int> seg_start;
  for (int t = 0; t < steps; ++t) {
    if (t % seg_len == 0) {
      boundary.push_back(state);
      seg_start.push_back(t);
    }
    Rng r = masks.at(static_cast<uint64_t>(t));
    state = nca_step_e(fe, fb, state, bernoulli_mask(r, h, w, spec.fire_rate));
  }

  SampleGrad out;
  out.grads = GradSet::zeros_like(params);
  std::vector<double> dstate;

  {  // tail segment: remaining steps plus pooling, head, and loss
    Tape tape;
    TapeEngine eng(tape);
    auto bound = bind_params(eng, params, true);
    const int start = seg_start.empty() ? 0 : seg_start.back();
    int st = eng.leaf(seg_start.empty() ? state : boundary.back(), true);
    const int st_leaf = st;
    for (int t = start; t < steps; ++t) {
      Rng r = masks.at(static_cast<uint64_t>(t));
      st = nca_step_e(eng, bound, st, bernoulli_mask(r, h, w, spec.fire_rate));
    }
    const int v = pooled_embedding_e(eng, bound, spec.pool_mode, spec.top_q, st);
    const int probs = class_probs_e(eng, bound, v);
    const int loss = eng.focal_loss(probs, label, spec.gamma, alpha);
    tape.backward(loss);
    out.loss = eng.scalar_of(loss);
    out.pred = argmax_class(tape.value(probs));
    accumulate_leaf_grads(out.grads, tape, bound);
    auto ds0 = tape.grad(st_leaf);
    dstate.assign(ds0.begin(), ds0.end());
  }

  for (int s = static_cast<int>(seg_start.size()) - 2; s >= 0; --s) {
    Tape tape;
    TapeEngine eng(tape);
    auto bound = bind_params(eng, params, true);
    int st = eng.leaf(boundary[static_cast<size_t>(s)], true);
    const int st_leaf = st;
    for (int t = seg_start[static_cast<size_t>(s)]; t < seg_start[static_cast<size_t>(s) + 1]; ++t) {
      Rng r = masks.at(static_cast<uint64_t>(t));
      st = nca_step_e(eng, bound, st, bernoulli_mask(r, h, w, spec.fire_rate));
    }
    tape.backward(st, dstate);
    accumulate_leaf_grads(out.grads, tape, bound);
    auto ds0 = tape.grad(st_leaf);
    dstate.assign(ds0.begin(), ds0.end());
  }
  return out;
}

struct SampleEval {
  double loss = 0.0;
  int pred = -1;
};

SampleEval eval_sample(const ParamSet& params, int channels, const ForwardSpec& spec,
                       const Tensor& image, int label, const MaskStream& masks) {
  EvalEngine<float> eng;
  auto bound = bind_params(eng, params, false);
  auto probs = forward_probs_e(eng, bound, image, channels, spec, masks);
  SampleEval out;
  out.pred = argmax_class(probs);
  if (label >= 0) out.loss = kernels::focal_loss_term(probs, label, spec.gamma, 1.0f).data[0];
  return out;
}

struct SplitEval {
  double loss = 0.0;
  Metrics metrics;
  std::vector<int> preds;
};

SplitEval evaluate_split(const ParamSet& params, const TrainConfig& cfg, const ImageStore& store,
                         const DatasetIndex& ds, const std::vector<int>& ids, int num_classes) {
  const ForwardSpec spec = forward_spec(cfg);
  std::vector<SampleEval> results(ids.size());
  run_indexed(static_cast<int64_t>(ids.size()), effective_threads(cfg), [&](int64_t i) {
    const int rec = ids[static_cast<size_t>(i)];
    const MaskStream masks{cfg.seed, "eval", 0, static_cast<uint64_t>(rec)};
    results[static_cast<size_t>(i)] = eval_sample(params, cfg.channels, spec, store.get(rec),
                                                  ds.records[static_cast<size_t>(rec)].label, masks);
  });
  SplitEval out;
  std::vector<int> labels;
  for (size_t i = 0; i < ids.size(); ++i) {
    out.loss += results[i].loss;
    out.preds.push_back(results[i].pred);
    labels.push_back(ds.records[static_cast<size_t>(ids[i])].label);
  }
  if (!ids.empty()) out.loss /= static_cast<double>(ids.size());
  out.metrics = compute_metrics(out.preds, labels, num_classes);
  return out;
}

std::string param_norm_dump(const ParamSet& params) {
  std::string msg;
  for (const auto& [name, t] : params.items) {
    double sq = 0.0;
    for (float v : t.data) sq += static_cast<double>(v) * v;
    msg += " ||" + name + "||=" + fmt(std::sqrt(sq));
  }
  return msg;
}

double population_std(const std::vector<double>& xs, double mean) {
  if (xs.empty()) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

std::string metrics_csv_header() {
  return "epoch,split,loss,accuracy,balanced_accuracy,lr,wall_seconds";
}

std::string metrics_csv_row(const EpochRow& r) {
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_seconds);
  return std::to_string(r.epoch) + "," + r.split + "," + fmt(r.loss) + "," + fmt(r.accuracy) +
         "," + fmt(r.balanced_accuracy) + "," + fmt(r.lr) + "," + wall;
}

SampleGrad backward_sample(const ParamSet& params, int channels, const ForwardSpec& spec,
                           const Tensor& image, int label, float alpha, const MaskStream& masks,
                           bool segmented) {
  if (segmented && spec.steps > 1)
    return backward_segments(params, channels, spec, image, label, alpha, masks);
  return backward_full(params, channels, spec, image, label, alpha, masks);
}

TrainResult train_run(const TrainConfig& cfg, const std::string& data_root, int fold,
                      const std::string& out_dir, const std::string& resume_path) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  fs::create_directories(out_dir);
  DatasetIndex ds = load_dataset(data_root);
  const int num_classes = static_cast<int>(ds.class_names.size());
  if (num_classes < 2) throw Error(ErrorCode::data, "training needs at least 2 classes");

  int fold_count = 0;
  const std::vector<int> folds = fold_assignment(ds, cfg, &fold_count);
  if (fold < 0 || fold >= fold_count)
    throw Error(ErrorCode::config,
                "fold " + std::to_string(fold) + " out of range (k=" + std::to_string(fold_count) + ")");
  std::vector<int> train_ids, val_ids;
  for (size_t i = 0; i < folds.size(); ++i)
    (folds[i] == fold ? val_ids : train_ids).push_back(static_cast<int>(i));
  if (train_ids.empty() || val_ids.empty())
    throw Error(ErrorCode::data, "fold " + std::to_string(fold) + " leaves an empty split");

  // resume state
  ParamSet params;
  AdamState adam;
  ChannelStats stats;
  int start_epoch = 0;
  EpochRow resumed_val;
  if (!resume_path.empty()) {
    Checkpoint ck = Checkpoint::load(resume_path);
    if (!ck.config.trajectory_equal(cfg))
      throw Error(ErrorCode::config,
                  "resume checkpoint was trained with different trajectory-shaping settings");
    if (ck.class_names != ds.class_names)
      throw Error(ErrorCode::data, "resume checkpoint classes do not match the dataset");
    if (!ck.has_adam)
      throw Error(ErrorCode::data, "resume checkpoint carries no optimizer state");
    params = std::move(ck.params);
    adam = std::move(ck.adam);
    stats = ck.stats;
    start_epoch = ck.epochs_completed;
    resumed_val = {start_epoch, "val", ck.last_loss, ck.last_accuracy, ck.last_balanced_accuracy,
                   lr_at(adam.t, cfg.lr0, cfg.decay), 0.0};
  } else {
    stats = compute_mean_std(ds, train_ids);
    for (int c = 0; c < 3; ++c)
      if (stats.stddev[c] < 1e-6f)
        std::fprintf(stderr, "warning: channel %d std below 1e-6, normalizing with 1\n", c);
    params = init_params(cfg.dims(num_classes), Rng::stream(cfg.seed, "init"));
    adam = AdamState::init(params);
  }

  std::vector<float> alphas(static_cast<size_t>(num_classes), 1.0f);
  if (cfg.class_weights) {
    std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
    for (int id : train_ids) counts[static_cast<size_t>(ds.records[static_cast<size_t>(id)].label)]++;
    for (int c = 0; c < num_classes; ++c) {
      if (counts[static_cast<size_t>(c)] == 0)
        throw Error(ErrorCode::data, "class_weights: class '" + ds.class_names[static_cast<size_t>(c)] +
                                         "' is absent from the training split");
      alphas[static_cast<size_t>(c)] =
          static_cast<float>(static_cast<double>(train_ids.size()) /
                             (static_cast<double>(num_classes) * counts[static_cast<size_t>(c)]));
    }
  }

  ImageStore store(ds, stats, cfg.input_size);
  {
    std::vector<int> all = train_ids;
    all.insert(all.end(), val_ids.begin(), val_ids.end());
    store.prefill(all);
  }

  const ForwardSpec spec = forward_spec(cfg);
  const AdamConfig acfg{cfg.lr0, cfg.beta1, cfg.beta2, 1e-8, cfg.decay};
  const int threads = effective_threads(cfg);

  TrainResult result;
  result.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream csv(result.metrics_path, std::ios::trunc);
  if (!csv) throw Error(ErrorCode::io, "cannot create '" + result.metrics_path + "'");
  csv << metrics_csv_header() << "\n";
  auto emit = [&](const EpochRow& row) {
    result.log.push_back(row);
    csv << metrics_csv_row(row) << "\n";
    csv.flush();
  };

  EpochRow last_val = resumed_val;
  auto eval_epoch = [&](int epoch) {
    SplitEval ev = evaluate_split(params, cfg, store, ds, val_ids, num_classes);
    EpochRow row{epoch, "val", ev.loss, ev.metrics.accuracy, ev.metrics.balanced_accuracy,
                 lr_at(adam.t, cfg.lr0, cfg.decay), wall()};
    emit(row);
    last_val = row;
  };

  if (start_epoch == 0) eval_epoch(0);

  auto save_checkpoint = [&](const std::string& path, int epochs_done) {
    Checkpoint ck;
    ck.config = cfg;
    ck.class_names = ds.class_names;
    ck.stats = stats;
    ck.params = params;
    ck.has_adam = true;
    ck.adam = adam;
    ck.step = adam.t;
    ck.epochs_completed = epochs_done;
    ck.last_loss = last_val.loss;
    ck.last_accuracy = last_val.accuracy;
    ck.last_balanced_accuracy = last_val.balanced_accuracy;
    ck.save(path);
    return ck;
  };

  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = train_ids;
    Rng::stream(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)).shuffle(order);

    double loss_sum = 0.0;
    std::vector<int> preds, labels;
    preds.reserve(order.size());
    labels.reserve(order.size());

    for (size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<size_t>(cfg.batch_size)) {
      const size_t bsize = std::min(static_cast<size_t>(cfg.batch_size), order.size() - batch_start);
      std::vector<SampleGrad> results(bsize);
      run_indexed(static_cast<int64_t>(bsize), threads, [&](int64_t i) {
        const int rec = order[batch_start + static_cast<size_t>(i)];
        const auto& record = ds.records[static_cast<size_t>(rec)];
        Tensor img = store.get(rec);
        Rng aug = Rng::stream(cfg.seed, "augment", static_cast<uint64_t>(epoch), 0,
                              static_cast<uint64_t>(rec));
        img = apply_augment(img, aug, cfg.augment);
        const MaskStream masks{cfg.seed, "mask", static_cast<uint64_t>(epoch),
                               static_cast<uint64_t>(rec)};
        results[static_cast<size_t>(i)] =
            backward_sample(params, cfg.channels, spec, img, record.label,
                            alphas[static_cast<size_t>(record.label)], masks, cfg.bptt_checkpoint);
      });

      GradSet batch_grad = GradSet::zeros_like(params);
      double batch_loss = 0.0;
      for (size_t i = 0; i < bsize; ++i) {
        batch_grad.add(results[i].grads);
        batch_loss += results[i].loss;
        preds.push_back(results[i].pred);
        labels.push_back(ds.records[static_cast<size_t>(order[batch_start + i])].label);
      }
      batch_loss /= static_cast<double>(bsize);
      loss_sum += batch_loss * static_cast<double>(bsize);
      if (!std::isfinite(batch_loss))
        throw Error(ErrorCode::numeric,
                    "non-finite loss in epoch " + std::to_string(epoch) + " batch " +
                        std::to_string(batch_start / static_cast<size_t>(cfg.batch_size)) + ";" +
                        param_norm_dump(params));
      batch_grad.scale(1.0 / static_cast<double>(bsize));
      adam_step(params, batch_grad.to_f32(params), adam, acfg);
    }

    Metrics train_metrics = compute_metrics(preds, labels, num_classes);
    emit({epoch, "train", loss_sum / static_cast<double>(order.size()), train_metrics.accuracy,
          train_metrics.balanced_accuracy, lr_at(adam.t, cfg.lr0, cfg.decay), wall()});
    eval_epoch(epoch);

    if (cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0 && epoch != cfg.epochs)
      save_checkpoint((fs::path(out_dir) / ("checkpoint_epoch" + std::to_string(epoch) + ".anca")).string(),
                      epoch);
  }

  result.checkpoint_path = (fs::path(out_dir) / "checkpoint_final.anca").string();
  result.checkpoint = save_checkpoint(result.checkpoint_path, cfg.epochs);
  return result;
}

EvalReport evaluate_run(const Checkpoint& ck, const std::string& data_root, int fold,
                        const std::string& out_dir) {
  const TrainConfig& cfg = ck.config;
  DatasetIndex ds = load_dataset(data_root);
  if (ds.class_names != ck.class_names)
    throw Error(ErrorCode::data, "dataset classes do not match the checkpoint");
  const int num_classes = static_cast<int>(ds.class_names.size());

  std::vector<int> ids;
  if (fold < 0) {
    for (size_t i = 0; i < ds.records.size(); ++i) ids.push_back(static_cast<int>(i));
  } else {
    int fold_count = 0;
    const std::vector<int> folds = fold_assignment(ds, cfg, &fold_count);
    if (fold >= fold_count)
      throw Error(ErrorCode::config,
                  "fold " + std::to_string(fold) + " out of range (k=" + std::to_string(fold_count) + ")");
    for (size_t i = 0; i < folds.size(); ++i)
      if (folds[i] == fold) ids.push_back(static_cast<int>(i));
  }
  if (ids.empty()) throw Error(ErrorCode::data, "no records selected for evaluation");

  ImageStore store(ds, ck.stats, cfg.input_size);
  store.prefill(ids);
  SplitEval ev = evaluate_split(ck.params, cfg, store, ds, ids, num_classes);

  EvalReport rep;
  rep.loss = ev.loss;
  rep.accuracy = ev.metrics.accuracy;
  rep.balanced_accuracy = ev.metrics.balanced_accuracy;
  rep.per_class_recall = ev.metrics.recall;
  rep.confusion = ev.metrics.confusion;
  rep.count = static_cast<int64_t>(ids.size());

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream m((fs::path(out_dir) / "eval_metrics.csv").string(), std::ios::trunc);
    m << "metric,value\n";
    m << "loss," << fmt(rep.loss) << "\n";
    m << "accuracy," << fmt(rep.accuracy) << "\n";
    m << "balanced_accuracy," << fmt(rep.balanced_accuracy) << "\n";
    m << "count," << rep.count << "\n";
    for (int c = 0; c < num_classes; ++c)
      m << "recall_" << ds.class_names[static_cast<size_t>(c)] << ","
        << fmt(rep.per_class_recall[static_cast<size_t>(c)]) << "\n";
    std::ofstream conf((fs::path(out_dir) / "confusion.csv").string(), std::ios::trunc);
    conf << "true\\pred";
    for (const auto& n : ds.class_names) conf << "," << n;
    conf << "\n";
    for (int t = 0; t < num_classes; ++t) {
      conf << ds.class_names[static_cast<size_t>(t)];
      for (int p = 0; p < num_classes; ++p) conf << "," << rep.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)];
      conf << "\n";
    }
  }
  return rep;
}

CvResult run_cv(const TrainConfig& cfg, const std::string& data_root, const std::string& out_dir) {
  DatasetIndex ds = load_dataset(data_root);
  int fold_count = 0;
  fold_assignment(ds, cfg, &fold_count);
  if (fold_count < 2) throw Error(ErrorCode::config, "cross-validation needs k >= 2");

  fs::create_directories(out_dir);
  CvResult cv;
  for (int f = 0; f < fold_count; ++f) {
    TrainResult r =
        train_run(cfg, data_root, f, (fs::path(out_dir) / ("fold" + std::to_string(f))).string());
    cv.fold_accuracy.push_back(r.checkpoint.last_accuracy);
    cv.fold_balanced.push_back(r.checkpoint.last_balanced_accuracy);
  }
  auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
  };
  cv.mean_accuracy = mean(cv.fold_accuracy);
  cv.std_accuracy = population_std(cv.fold_accuracy, cv.mean_accuracy);
  cv.mean_balanced = mean(cv.fold_balanced);
  cv.std_balanced = population_std(cv.fold_balanced, cv.mean_balanced);

  std::ofstream f((fs::path(out_dir) / "cv_summary.csv").string(), std::ios::trunc);
  f << "fold,accuracy,balanced_accuracy\n";
  for (size_t i = 0; i < cv.fold_accuracy.size(); ++i)
    f << i << "," << fmt(cv.fold_accuracy[i]) << "," << fmt(cv.fold_balanced[i]) << "\n";
  f << "mean," << fmt(cv.mean_accuracy) << "," << fmt(cv.mean_balanced) << "\n";
  f << "std," << fmt(cv.std_accuracy) << "," << fmt(cv.std_balanced) << "\n";
  return cv;
}

std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const std::string& data_root,
                                      const std::string& out_dir) {
  DatasetIndex ds = load_dataset(data_root);
  const int num_classes = static_cast<int>(ds.class_names.size());
  fs::create_directories(out_dir);

  struct Variant {
    const char* name;
    PoolMode mode;
    float q;
  };
  const Variant variants[] = {
      {"q05", PoolMode::attention, 0.05f},      {"q10", PoolMode::attention, 0.10f},
      {"q20", PoolMode::attention, 0.20f},      {"q50", PoolMode::attention, 0.50f},
      {"conv", PoolMode::conv_attention, 0.10f},
  };

  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    TrainConfig vc = cfg;
    vc.pool_mode = v.mode;
    vc.top_q = v.q;
    AblationRow row;
    row.variant = v.name;
    row.param_count = param_count(vc.dims(num_classes));
    row.cv = run_cv(vc, data_root, (fs::path(out_dir) / v.name).string());
    rows.push_back(std::move(row));
  }

  std::ofstream f((fs::path(out_dir) / "ablation.csv").string(), std::ios::trunc);
  f << "variant,param_count,mean_accuracy,std_accuracy,mean_balanced_accuracy,std_balanced_accuracy\n";
  for (const auto& r : rows)
    f << r.variant << "," << r.param_count << "," << fmt(r.cv.mean_accuracy) << ","
      << fmt(r.cv.std_accuracy) << "," << fmt(r.cv.mean_balanced) << "," << fmt(r.cv.std_balanced)
      << "\n";
  return rows;
}

namespace {

Tensor preprocessed_input(const Checkpoint& ck, const std::string& image_path) {
  Tensor t = resize_bilinear(to_float01(load_image(image_path)), ck.config.input_size,
                             ck.config.input_size);
  return normalize(t, ck.stats.mean, ck.stats.stddev);
}

Tensor export_rollout(const Checkpoint& ck, const Tensor& input, std::vector<Tensor>* trajectory) {
  EvalEngine<float> eng;
  auto bound = bind_params(eng, ck.params, false);
  Tensor state = seed_state_tensor(input, ck.config.channels);
  const MaskStream masks{ck.config.seed, "export", 0, 0};
  return rollout_e(eng, bound, state, ck.config.steps, ck.config.fire_rate, masks, trajectory);
}

uint8_t to_byte(float v) {
  const long q = std::lround(static_cast<double>(v) * 255.0);
  return static_cast<uint8_t>(std::clamp<long>(q, 0, 255));
}

}  // namespace

void export_attention(const Checkpoint& ck, const std::string& image_path,
                      const std::string& out_prefix) {
  if (ck.config.pool_mode == PoolMode::max)
    throw Error(ErrorCode::contract, "max-pool checkpoint has no attention map to export");
  const Tensor input = preprocessed_input(ck, image_path);
  const Tensor state = export_rollout(ck, input, nullptr);

  Tensor theta;
  if (ck.config.pool_mode == PoolMode::attention) {
    theta = ck.params.at("pool.theta");
  } else {
    theta = conv_attention_map(state, ck.params.at("pool.wc"), ck.params.at("pool.bc").data[0]);
  }
  const Tensor gate = kernels::sigmoid(theta);

  const int h = gate.dim(0), w = gate.dim(1);
  std::vector<uint8_t> gray(static_cast<size_t>(h) * w);
  for (size_t i = 0; i < gray.size(); ++i) gray[i] = to_byte(gate.data[i]);
  save_pgm(out_prefix + "_gate.pgm", w, h, gray);

  std::vector<int32_t> sel;
  int k = 0;
  const Tensor prod = kernels::mul_gate(state, gate);
  const Tensor embedding = kernels::top_q_mean_channels(prod, ck.config.top_q, &sel, &k);

  const int n = state.dim(2);
  std::vector<uint8_t> bitmap(static_cast<size_t>(n) * h * w, 0);
  for (int c = 0; c < n; ++c)
    for (int t = 0; t < k; ++t) {
      const int32_t cell = sel[static_cast<size_t>(c) * k + t];
      bitmap[static_cast<size_t>(c) * h * w + static_cast<size_t>(cell)] = 255;
    }
  save_pgm(out_prefix + "_selection.pgm", w, n * h, bitmap);

  std::ofstream f(out_prefix + "_embedding.txt", std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot create '" + out_prefix + "_embedding.txt'");
  char buf[64];
  for (float v : embedding.data) {
    std::snprintf(buf, sizeof buf, "%.9g\n", static_cast<double>(v));
    f << buf;
  }
}

void export_trajectory(const Checkpoint& ck, const std::string& image_path,
                       const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Tensor input = preprocessed_input(ck, image_path);
  std::vector<Tensor> trajectory;
  export_rollout(ck, input, &trajectory);

  const int size = ck.config.input_size;
  for (size_t t = 0; t < trajectory.size(); ++t) {
    const Tensor& st = trajectory[t];
    Image8 frame;
    frame.width = size;
    frame.height = size;
    frame.rgb.resize(static_cast<size_t>(size) * size * 3);
    const int n = st.dim(2);
    for (int64_t p = 0; p < static_cast<int64_t>(size) * size; ++p)
      for (int c = 0; c < 3; ++c) {
        const float denorm = st.data[static_cast<size_t>(p) * n + c] *
                                 (ck.stats.stddev[c] < 1e-6f ? 1.0f : ck.stats.stddev[c]) +
                             ck.stats.mean[c];
        frame.rgb[static_cast<size_t>(p) * 3 + c] = to_byte(denorm);
      }
    save_ppm((fs::path(out_dir) / ("frame_" + std::to_string(t) + ".ppm")).string(), frame);
  }
}

GradCheckReport model_grad_check(const TrainConfig& cfg, int num_classes, int coords, double eps) {
  cfg.validate();
  const ModelDims dims = cfg.dims(num_classes);
  ParamSet base = init_params(dims, Rng::stream(cfg.seed, "init"));

  // The default init zeroes the update output layer and the attention map;
  // re-draw everything so no gradient path is trivially zero.
  Rng pr = Rng::stream(cfg.seed, "gradcheck_params");
  for (auto& [name, t] : base.items) {
    float bound;
    if (name == "pool.theta") bound = 1.0f;
    else if (name.rfind("nca.kappa", 0) == 0) bound = 1.0f / 3.0f;
    else if (t.rank() == 2) bound = 1.0f / std::sqrt(static_cast<float>(t.dim(1)));
    else bound = 0.25f;
    for (auto& v : t.data) v = pr.uniform(-bound, bound);
  }

  const int sample_count = 2;
  Rng ir = Rng::stream(cfg.seed, "gradcheck_data");
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<MaskStream> masks;
  for (int s = 0; s < sample_count; ++s) {
    Tensor img({cfg.input_size, cfg.input_size, 3});
    for (auto& v : img.data) v = ir.uniform(-1.0f, 1.0f);
    images.push_back(std::move(img));
    labels.push_back(static_cast<int>(ir.next_below(static_cast<uint64_t>(num_classes))));
    masks.push_back(MaskStream{cfg.seed, "gradcheck_mask", 0, static_cast<uint64_t>(s)});
  }

  const ForwardSpec spec = forward_spec(cfg);
  GradCheckProbe probe;
  probe.loss = [&](const ParamSet& at, uint64_t& sig) {
    double acc = 0.0;
    uint64_t h = 0;
    for (int s = 0; s < sample_count; ++s) {
      EvalEngine<double> eng;
      auto bound = bind_params(eng, at, false);
      auto loss = forward_loss_e(eng, bound, images[static_cast<size_t>(s)], cfg.channels,
                                 labels[static_cast<size_t>(s)], 1.0f, spec,
                                 masks[static_cast<size_t>(s)]);
      acc += eng.scalar_of(loss);
      h = hash_accumulate(h, eng.selection_hash());
    }
    sig = h;
    return acc / sample_count;
  };
  probe.gradient = [&](const ParamSet& at) {
    GradSet total = GradSet::zeros_like(at);
    for (int s = 0; s < sample_count; ++s) {
      SampleGrad sg = backward_sample(at, cfg.channels, spec, images[static_cast<size_t>(s)],
                                      labels[static_cast<size_t>(s)], 1.0f,
                                      masks[static_cast<size_t>(s)], cfg.bptt_checkpoint);
      total.add(sg.grads);
    }
    total.scale(1.0 / sample_count);
    return total;
  };

  // the float pipeline must agree with the double reference on every selection
  {
    uint64_t dsig = 0;
    probe.loss(base, dsig);
    uint64_t fsig = 0;
    for (int s = 0; s < sample_count; ++s) {
      EvalEngine<float> eng;
      auto bound = bind_params(eng, base, false);
      forward_loss_e(eng, bound, images[static_cast<size_t>(s)], cfg.channels,
                     labels[static_cast<size_t>(s)], 1.0f, spec, masks[static_cast<size_t>(s)]);
      fsig = hash_accumulate(fsig, eng.selection_hash());
    }
    if (fsig != dsig)
      throw Error(ErrorCode::contract,
                  "gradcheck fixture: top-q selection differs between float and double forward; "
                  "re-run with a different seed");
  }

  return grad_check(probe, base, coords, eps, Rng::stream(cfg.seed, "gradcheck_coords"));
}

void generate_toy_dataset(const std::string& out_dir, int count, int size, uint64_t seed,
                          bool as_png) {
  if (count < 2 || size < 8) throw Error(ErrorCode::config, "toy dataset needs count >= 2, size >= 8");
  fs::create_directories(fs::path(out_dir) / "disk");
  fs::create_directories(fs::path(out_dir) / "bar");

  for (int i = 0; i < count; ++i) {
    Rng r = Rng::stream(seed, "toy", 0, 0, static_cast<uint64_t>(i));
    const bool is_disk = (i % 2) == 0;
    const float bg = r.uniform(15.0f, 45.0f);
    const float fg = r.uniform(190.0f, 235.0f);

    float cy = 0, cx = 0, radius = 0, half_th = 0, half_len = 0;
    bool horizontal = false;
    const float s = static_cast<float>(size);
    if (is_disk) {
      cy = s * 0.5f + r.uniform(-0.08f, 0.08f) * s;
      cx = s * 0.5f + r.uniform(-0.08f, 0.08f) * s;
      radius = r.uniform(0.26f, 0.36f) * s;
    } else {
      horizontal = r.bernoulli(0.5f);
      cy = s * 0.5f + r.uniform(-0.08f, 0.08f) * s;
      cx = s * 0.5f + r.uniform(-0.08f, 0.08f) * s;
      half_th = r.uniform(0.05f, 0.08f) * s * 0.5f;
      half_len = r.uniform(0.65f, 0.9f) * s * 0.5f;
    }

    Image8 img;
    img.width = size;
    img.height = size;
    img.rgb.resize(static_cast<size_t>(size) * size * 3);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const float py = y + 0.5f, px = x + 0.5f;
        bool inside;
        if (is_disk) {
          inside = (py - cy) * (py - cy) + (px - cx) * (px - cx) <= radius * radius;
        } else if (horizontal) {
          inside = std::abs(py - cy) <= half_th && std::abs(px - cx) <= half_len;
        } else {
          inside = std::abs(px - cx) <= half_th && std::abs(py - cy) <= half_len;
        }
        const float noise = r.uniform(-12.0f, 12.0f);
        const float v = std::clamp((inside ? fg : bg) + noise, 0.0f, 255.0f);
        const uint8_t byte = static_cast<uint8_t>(std::lround(v));
        for (int c = 0; c < 3; ++c)
          img.rgb[(static_cast<size_t>(y) * size + x) * 3 + static_cast<size_t>(c)] = byte;
      }

    char name[32];
    std::snprintf(name, sizeof name, "%04d.%s", i / 2, as_png ? "png" : "ppm");
    const fs::path dir = fs::path(out_dir) / (is_disk ? "disk" : "bar");
    if (as_png)
      save_png((dir / name).string(), img);
    else
      save_ppm((dir / name).string(), img);
  }
}

}  // namespace anca
