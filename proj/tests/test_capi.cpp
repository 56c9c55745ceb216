#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <anca/anca.h>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("anca_capi_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct ConfigHandle {
  anca_config* cfg = anca_config_new();
  ~ConfigHandle() { anca_config_free(cfg); }
};

}  // namespace

TEST_CASE("capi: version and error state") {
  CHECK(std::string(anca_version()) == "1.0.0");
  CHECK(anca_last_error() != nullptr);
}

TEST_CASE("capi: config set and get round trip") {
  ConfigHandle h;
  REQUIRE(h.cfg != nullptr);
  char buf[64];

  CHECK(anca_config_get(h.cfg, "channels", buf, sizeof buf) == ANCA_OK);
  CHECK(std::string(buf) == "128");

  CHECK(anca_config_set(h.cfg, "channels", "32") == ANCA_OK);
  CHECK(anca_config_get(h.cfg, "channels", buf, sizeof buf) == ANCA_OK);
  CHECK(std::string(buf) == "32");

  CHECK(anca_config_set(h.cfg, "pool_mode", "conv_attention") == ANCA_OK);
  CHECK(anca_config_get(h.cfg, "pool_mode", buf, sizeof buf) == ANCA_OK);
  CHECK(std::string(buf) == "conv_attention");
}

TEST_CASE("capi: bad keys and values set the thread error message") {
  ConfigHandle h;
  CHECK(anca_config_set(h.cfg, "no_such_key", "1") == ANCA_E_CONFIG);
  CHECK(std::strlen(anca_last_error()) > 0);
  CHECK(anca_config_set(h.cfg, "steps", "banana") == ANCA_E_CONFIG);
  char buf[8];
  CHECK(anca_config_get(h.cfg, "no_such_key", buf, sizeof buf) == ANCA_E_CONFIG);
  // a failed set must not corrupt the config
  char val[64];
  CHECK(anca_config_get(h.cfg, "steps", val, sizeof val) == ANCA_OK);
  CHECK(std::string(val) == "64");
}

TEST_CASE("capi: a too-small buffer is reported, not truncated") {
  ConfigHandle h;
  char tiny[2];
  CHECK(anca_config_get(h.cfg, "channels", tiny, sizeof tiny) == ANCA_E_CONTRACT);
}

TEST_CASE("capi: null arguments are contract errors") {
  ConfigHandle h;
  char buf[16];
  CHECK(anca_config_set(nullptr, "channels", "8") == ANCA_E_CONTRACT);
  CHECK(anca_config_set(h.cfg, nullptr, "8") == ANCA_E_CONTRACT);
  CHECK(anca_config_get(h.cfg, "channels", nullptr, 16) == ANCA_E_CONTRACT);
  CHECK(anca_param_count(h.cfg, 2, nullptr) == ANCA_E_CONTRACT);
  (void)buf;
}

TEST_CASE("capi: config file round trip") {
  TempDir td;
  ConfigHandle h;
  REQUIRE(anca_config_set(h.cfg, "epochs", "3") == ANCA_OK);
  const std::string p = (td.path / "api.cfg").string();
  REQUIRE(anca_config_save(h.cfg, p.c_str()) == ANCA_OK);

  anca_config* loaded = nullptr;
  REQUIRE(anca_config_load(p.c_str(), &loaded) == ANCA_OK);
  char buf[16];
  CHECK(anca_config_get(loaded, "epochs", buf, sizeof buf) == ANCA_OK);
  CHECK(std::string(buf) == "3");
  anca_config_free(loaded);

  anca_config* missing = nullptr;
  CHECK(anca_config_load((td.path / "ghost.cfg").string().c_str(), &missing) == ANCA_E_IO);
  CHECK(missing == nullptr);
}

TEST_CASE("capi: parameter counts match the module arithmetic") {
  ConfigHandle h;
  int64_t n = 0;
  REQUIRE(anca_param_count(h.cfg, 2, &n) == ANCA_OK);
  CHECK(n == 88962);
  REQUIRE(anca_param_count(h.cfg, 8, &n) == ANCA_OK);
  CHECK(n == 89736);

  CHECK(anca_config_set(h.cfg, "pool_mode", "max") == ANCA_OK);
  REQUIRE(anca_param_count(h.cfg, 15, &n) == ANCA_OK);
  CHECK(n == 86543);

  CHECK(anca_param_count(h.cfg, 0, &n) == ANCA_E_CONFIG);
}

TEST_CASE("capi: missing files surface io errors") {
  double loss = 0;
  CHECK(anca_evaluate("/nonexistent/ck.anca", "/nonexistent/data", -1, nullptr, &loss, nullptr,
                      nullptr) == ANCA_E_IO);
  anca_model* m = nullptr;
  CHECK(anca_model_load("/nonexistent/ck.anca", &m) == ANCA_E_IO);
  CHECK(m == nullptr);
}

TEST_CASE("capi: toy data, training, evaluation, and prediction end to end") {
  TempDir td;
  const std::string data = (td.path / "data").string();
  REQUIRE(anca_generate_toy(data.c_str(), 8, 8, 11, 0) == ANCA_OK);

  ConfigHandle h;
  REQUIRE(anca_config_set(h.cfg, "input_size", "8") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "channels", "8") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "hidden", "8") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "steps", "2") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "batch_size", "4") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "epochs", "1") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "folds", "2") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "threads", "1") == ANCA_OK);

  const std::string out = (td.path / "run").string();
  REQUIRE(anca_train(h.cfg, data.c_str(), 0, out.c_str(), nullptr) == ANCA_OK);
  const std::string ck = out + "/checkpoint_final.anca";
  REQUIRE(fs::exists(ck));
  CHECK(fs::exists(out + "/metrics.csv"));

  double loss = -1, acc = -1, bal = -1;
  REQUIRE(anca_evaluate(ck.c_str(), data.c_str(), 0, nullptr, &loss, &acc, &bal) == ANCA_OK);
  CHECK(loss >= 0.0);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(bal >= 0.0);
  CHECK(bal <= 1.0);

  anca_model* model = nullptr;
  REQUIRE(anca_model_load(ck.c_str(), &model) == ANCA_OK);
  int classes = 0;
  REQUIRE(anca_model_num_classes(model, &classes) == ANCA_OK);
  REQUIRE(classes == 2);
  char name[32];
  REQUIRE(anca_model_class_name(model, 0, name, sizeof name) == ANCA_OK);
  CHECK(std::string(name) == "bar");
  REQUIRE(anca_model_class_name(model, 1, name, sizeof name) == ANCA_OK);
  CHECK(std::string(name) == "disk");
  CHECK(anca_model_class_name(model, 2, name, sizeof name) == ANCA_E_CONTRACT);

  std::vector<double> probs(2, -1.0);
  int label = -1;
  const std::string img = data + "/disk/0000.ppm";
  REQUIRE(anca_model_predict(model, img.c_str(), probs.data(), &label) == ANCA_OK);
  CHECK(label >= 0);
  CHECK(label < 2);
  CHECK(probs[0] >= 0.0);
  CHECK(probs[1] >= 0.0);
  CHECK(std::abs(probs[0] + probs[1] - 1.0) <= 1e-6);
  // the argmax out-parameter matches the probabilities
  CHECK(label == (probs[1] > probs[0] ? 1 : 0));

  // repeat prediction is deterministic
  std::vector<double> probs2(2, -1.0);
  int label2 = -1;
  REQUIRE(anca_model_predict(model, img.c_str(), probs2.data(), &label2) == ANCA_OK);
  CHECK(probs2 == probs);
  CHECK(label2 == label);
  anca_model_free(model);

  // exports work through the C surface too
  const std::string prefix = (td.path / "viz").string();
  REQUIRE(anca_export_attention(ck.c_str(), img.c_str(), prefix.c_str()) == ANCA_OK);
  CHECK(fs::exists(prefix + "_gate.pgm"));
  CHECK(fs::exists(prefix + "_selection.pgm"));
  CHECK(fs::exists(prefix + "_embedding.txt"));
  const std::string traj = (td.path / "traj").string();
  REQUIRE(anca_export_trajectory(ck.c_str(), img.c_str(), traj.c_str()) == ANCA_OK);
  CHECK(fs::exists(traj + "/frame_0.ppm"));
  CHECK(fs::exists(traj + "/frame_2.ppm"));
}

TEST_CASE("capi: gradient check reports its worst error") {
  ConfigHandle h;
  REQUIRE(anca_config_set(h.cfg, "input_size", "8") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "channels", "8") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "hidden", "8") == ANCA_OK);
  REQUIRE(anca_config_set(h.cfg, "steps", "2") == ANCA_OK);
  double worst = -1.0;
  REQUIRE(anca_grad_check(h.cfg, 2, 32, 1e-3, &worst) == ANCA_OK);
  CHECK(worst >= 0.0);
  CHECK(worst <= 1e-3);
}

TEST_CASE("capi: stats file lands in the two-line format") {
  TempDir td;
  const std::string data = (td.path / "data").string();
  REQUIRE(anca_generate_toy(data.c_str(), 4, 8, 5, 0) == ANCA_OK);
  const std::string out = (td.path / "stats.txt").string();
  REQUIRE(anca_compute_stats(data.c_str(), out.c_str()) == ANCA_OK);
  std::ifstream in(out);
  std::string l1, l2, l3;
  REQUIRE(std::getline(in, l1));
  REQUIRE(std::getline(in, l2));
  CHECK_FALSE(std::getline(in, l3));
  CHECK(l1.rfind("mean ", 0) == 0);
  CHECK(l2.rfind("std ", 0) == 0);
}
