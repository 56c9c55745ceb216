#include "anca/anca.h"

#include <cstring>
#include <new>
#include <string>

#include "core/error.hpp"
#include "data/dataset.hpp"
#include "data/image.hpp"
#include "model/classifier.hpp"
#include "model/forward.hpp"
#include "train/trainer.hpp"

using namespace anca;

struct anca_config {
  TrainConfig cfg;
};

struct anca_model {
  Checkpoint ck;
};

namespace {

thread_local std::string g_last_error;

int code_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::ok: return ANCA_OK;
    case ErrorCode::config: return ANCA_E_CONFIG;
    case ErrorCode::io: return ANCA_E_IO;
    case ErrorCode::data: return ANCA_E_DATA;
    case ErrorCode::shape: return ANCA_E_SHAPE;
    case ErrorCode::contract: return ANCA_E_CONTRACT;
    case ErrorCode::numeric: return ANCA_E_NUMERIC;
    case ErrorCode::internal: return ANCA_E_INTERNAL;
  }
  return ANCA_E_INTERNAL;
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ANCA_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return code_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ANCA_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ANCA_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ANCA_E_INTERNAL;
  }
}

int require_arg(bool ok, const char* what) {
  if (ok) return ANCA_OK;
  g_last_error = std::string("null or invalid argument: ") + what;
  return ANCA_E_CONTRACT;
}

int write_string(const std::string& s, char* buf, size_t cap) {
  if (buf == nullptr || cap < s.size() + 1) {
    g_last_error = "buffer too small (" + std::to_string(s.size() + 1) + " bytes needed)";
    return ANCA_E_CONTRACT;
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return ANCA_OK;
}

}  // namespace

extern "C" {

const char* anca_version(void) { return "1.0.0"; }

const char* anca_last_error(void) { return g_last_error.c_str(); }

anca_config* anca_config_new(void) { return new (std::nothrow) anca_config(); }

void anca_config_free(anca_config* cfg) { delete cfg; }

int anca_config_set(anca_config* cfg, const char* key, const char* value) {
  if (int rc = require_arg(cfg && key && value, "anca_config_set")) return rc;
  return guarded([&] {
    TrainConfig trial = cfg->cfg;
    trial.set(key, value);
    trial.validate();
    cfg->cfg = trial;
  });
}

int anca_config_get(const anca_config* cfg, const char* key, char* buf, size_t cap) {
  if (int rc = require_arg(cfg && key, "anca_config_get")) return rc;
  std::string value;
  int rc = guarded([&] {
    const std::string text = cfg->cfg.to_text();
    const std::string want = std::string(key) + " = ";
    size_t pos = 0;
    while (pos < text.size()) {
      size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      if (line.rfind(want, 0) == 0) {
        value = line.substr(want.size());
        return;
      }
      pos = end + 1;
    }
    throw Error(ErrorCode::config, "unknown config key '" + std::string(key) + "'");
  });
  if (rc != ANCA_OK) return rc;
  return write_string(value, buf, cap);
}

int anca_config_load(const char* path, anca_config** out) {
  if (int rc = require_arg(path && out, "anca_config_load")) return rc;
  return guarded([&] {
    auto* cfg = new anca_config();
    try {
      cfg->cfg = TrainConfig::load(path);
    } catch (...) {
      delete cfg;
      throw;
    }
    *out = cfg;
  });
}

int anca_config_save(const anca_config* cfg, const char* path) {
  if (int rc = require_arg(cfg && path, "anca_config_save")) return rc;
  return guarded([&] { cfg->cfg.save(path); });
}

int anca_param_count(const anca_config* cfg, int num_classes, int64_t* out) {
  if (int rc = require_arg(cfg && out, "anca_param_count")) return rc;
  return guarded([&] {
    if (num_classes < 2) throw Error(ErrorCode::config, "num_classes must be at least 2");
    *out = param_count(cfg->cfg.dims(num_classes));
  });
}

int anca_train(const anca_config* cfg, const char* data_root, int fold, const char* out_dir,
               const char* resume_path) {
  if (int rc = require_arg(cfg && data_root && out_dir, "anca_train")) return rc;
  return guarded([&] {
    train_run(cfg->cfg, data_root, fold, out_dir, resume_path ? resume_path : "");
  });
}

int anca_evaluate(const char* checkpoint_path, const char* data_root, int fold,
                  const char* out_dir, double* loss, double* accuracy,
                  double* balanced_accuracy) {
  if (int rc = require_arg(checkpoint_path && data_root, "anca_evaluate")) return rc;
  return guarded([&] {
    const Checkpoint ck = Checkpoint::load(checkpoint_path);
    const EvalReport rep = evaluate_run(ck, data_root, fold, out_dir ? out_dir : "");
    if (loss) *loss = rep.loss;
    if (accuracy) *accuracy = rep.accuracy;
    if (balanced_accuracy) *balanced_accuracy = rep.balanced_accuracy;
  });
}

int anca_cross_validate(const anca_config* cfg, const char* data_root, const char* out_dir,
                        double* mean_accuracy, double* std_accuracy,
                        double* mean_balanced_accuracy, double* std_balanced_accuracy) {
  if (int rc = require_arg(cfg && data_root && out_dir, "anca_cross_validate")) return rc;
  return guarded([&] {
    const CvResult cv = run_cv(cfg->cfg, data_root, out_dir);
    if (mean_accuracy) *mean_accuracy = cv.mean_accuracy;
    if (std_accuracy) *std_accuracy = cv.std_accuracy;
    if (mean_balanced_accuracy) *mean_balanced_accuracy = cv.mean_balanced;
    if (std_balanced_accuracy) *std_balanced_accuracy = cv.std_balanced;
  });
}

int anca_ablation(const anca_config* cfg, const char* data_root, const char* out_dir) {
  if (int rc = require_arg(cfg && data_root && out_dir, "anca_ablation")) return rc;
  return guarded([&] { run_ablation(cfg->cfg, data_root, out_dir); });
}

int anca_export_attention(const char* checkpoint_path, const char* image_path,
                          const char* out_prefix) {
  if (int rc = require_arg(checkpoint_path && image_path && out_prefix, "anca_export_attention"))
    return rc;
  return guarded([&] {
    export_attention(Checkpoint::load(checkpoint_path), image_path, out_prefix);
  });
}

int anca_export_trajectory(const char* checkpoint_path, const char* image_path,
                           const char* out_dir) {
  if (int rc = require_arg(checkpoint_path && image_path && out_dir, "anca_export_trajectory"))
    return rc;
  return guarded([&] {
    export_trajectory(Checkpoint::load(checkpoint_path), image_path, out_dir);
  });
}

int anca_grad_check(const anca_config* cfg, int num_classes, int coords, double eps,
                    double* max_rel_err) {
  if (int rc = require_arg(cfg != nullptr, "anca_grad_check")) return rc;
  return guarded([&] {
    const GradCheckReport rep = model_grad_check(cfg->cfg, num_classes, coords, eps);
    if (max_rel_err) *max_rel_err = rep.max_rel_err;
  });
}

int anca_compute_stats(const char* data_root, const char* out_path) {
  if (int rc = require_arg(data_root && out_path, "anca_compute_stats")) return rc;
  return guarded([&] {
    const DatasetIndex ds = load_dataset(data_root);
    std::vector<int> ids;
    for (size_t i = 0; i < ds.records.size(); ++i) ids.push_back(static_cast<int>(i));
    save_stats(out_path, compute_mean_std(ds, ids));
  });
}

int anca_generate_toy(const char* out_dir, int count, int size, uint64_t seed, int as_png) {
  if (int rc = require_arg(out_dir != nullptr, "anca_generate_toy")) return rc;
  return guarded([&] { generate_toy_dataset(out_dir, count, size, seed, as_png != 0); });
}

int anca_model_load(const char* checkpoint_path, anca_model** out) {
  if (int rc = require_arg(checkpoint_path && out, "anca_model_load")) return rc;
  return guarded([&] {
    auto* m = new anca_model();
    try {
      m->ck = Checkpoint::load(checkpoint_path);
    } catch (...) {
      delete m;
      throw;
    }
    *out = m;
  });
}

void anca_model_free(anca_model* model) { delete model; }

int anca_model_num_classes(const anca_model* model, int* out) {
  if (int rc = require_arg(model && out, "anca_model_num_classes")) return rc;
  *out = static_cast<int>(model->ck.class_names.size());
  g_last_error.clear();
  return ANCA_OK;
}

int anca_model_class_name(const anca_model* model, int index, char* buf, size_t cap) {
  if (int rc = require_arg(model != nullptr, "anca_model_class_name")) return rc;
  if (index < 0 || index >= static_cast<int>(model->ck.class_names.size())) {
    g_last_error = "class index out of range";
    return ANCA_E_CONTRACT;
  }
  return write_string(model->ck.class_names[static_cast<size_t>(index)], buf, cap);
}

int anca_model_predict(const anca_model* model, const char* image_path, double* probs,
                       int* label) {
  if (int rc = require_arg(model && image_path, "anca_model_predict")) return rc;
  return guarded([&] {
    const Checkpoint& ck = model->ck;
    const TrainConfig& cfg = ck.config;
    Tensor img = resize_bilinear(to_float01(load_image(image_path)), cfg.input_size,
                                 cfg.input_size);
    img = normalize(img, ck.stats.mean, ck.stats.stddev);
    EvalEngine<float> eng;
    auto bound = bind_params(eng, ck.params, false);
    ForwardSpec spec;
    spec.steps = cfg.steps;
    spec.fire_rate = cfg.fire_rate;
    spec.pool_mode = cfg.pool_mode;
    spec.top_q = cfg.top_q;
    spec.gamma = cfg.gamma;
    const MaskStream masks{cfg.seed, "predict", 0, 0};
    const Tensor p = forward_probs_e(eng, bound, img, cfg.channels, spec, masks);
    if (probs)
      for (int64_t i = 0; i < p.numel(); ++i) probs[i] = static_cast<double>(p.data[static_cast<size_t>(i)]);
    if (label) *label = argmax_class(p);
  });
}

}  // extern "C"
