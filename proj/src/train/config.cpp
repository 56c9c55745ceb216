#include "train/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace anca {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& value, const std::string& key) {
  T out{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw Error(ErrorCode::config, "bad value '" + value + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorCode::config, "bad value '" + value + "' for key '" + key + "' (expected true/false)");
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(float v) { return fmt(static_cast<double>(v)); }

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "input_size") input_size = parse_number<int>(value, key);
  else if (key == "channels") channels = parse_number<int>(value, key);
  else if (key == "steps") steps = parse_number<int>(value, key);
  else if (key == "hidden") hidden = parse_number<int>(value, key);
  else if (key == "fire_rate") fire_rate = parse_number<float>(value, key);
  else if (key == "pool_mode") pool_mode = pool_mode_from(value);
  else if (key == "top_q") top_q = parse_number<float>(value, key);
  else if (key == "gamma") gamma = parse_number<float>(value, key);
  else if (key == "class_weights") class_weights = parse_bool(value, key);
  else if (key == "lr0") lr0 = parse_number<double>(value, key);
  else if (key == "beta1") beta1 = parse_number<double>(value, key);
  else if (key == "beta2") beta2 = parse_number<double>(value, key);
  else if (key == "decay") decay = parse_number<double>(value, key);
  else if (key == "batch_size") batch_size = parse_number<int>(value, key);
  else if (key == "epochs") epochs = parse_number<int>(value, key);
  else if (key == "folds") folds = parse_number<int>(value, key);
  else if (key == "seed") seed = parse_number<uint64_t>(value, key);
  else if (key == "augment") augment = augment_mode_from(value);
  else if (key == "checkpoint_interval") checkpoint_interval = parse_number<int>(value, key);
  else if (key == "bptt_checkpoint") bptt_checkpoint = parse_bool(value, key);
  else if (key == "threads") threads = parse_number<int>(value, key);
  else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorCode::config, msg);
  };
  need(input_size >= 3, "input_size must be >= 3");
  need(channels >= 3, "channels must be >= 3 (the RGB seed occupies three)");
  need(steps >= 0, "steps must be >= 0");
  need(hidden >= 1, "hidden must be >= 1");
  need(fire_rate > 0.0f && fire_rate <= 1.0f, "fire_rate must be in (0,1]");
  need(top_q > 0.0f && top_q <= 1.0f, "top_q must be in (0,1]");
  need(gamma >= 0.0f, "gamma must be >= 0");
  need(lr0 > 0.0, "lr0 must be positive");
  need(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0,1)");
  need(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0,1)");
  need(decay > 0.0 && decay <= 1.0, "decay must be in (0,1]");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(epochs >= 0, "epochs must be >= 0");
  need(folds >= 2, "folds must be >= 2");
  need(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
  need(threads >= 0, "threads must be >= 0");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "input_size = " << input_size << "\n";
  os << "channels = " << channels << "\n";
  os << "steps = " << steps << "\n";
  os << "hidden = " << hidden << "\n";
  os << "fire_rate = " << fmt(fire_rate) << "\n";
  os << "pool_mode = " << pool_mode_name(pool_mode) << "\n";
  os << "top_q = " << fmt(top_q) << "\n";
  os << "gamma = " << fmt(gamma) << "\n";
  os << "class_weights = " << (class_weights ? "true" : "false") << "\n";
  os << "lr0 = " << fmt(lr0) << "\n";
  os << "beta1 = " << fmt(beta1) << "\n";
  os << "beta2 = " << fmt(beta2) << "\n";
  os << "decay = " << fmt(decay) << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "epochs = " << epochs << "\n";
  os << "folds = " << folds << "\n";
  os << "seed = " << seed << "\n";
  os << "augment = " << augment_mode_name(augment) << "\n";
  os << "checkpoint_interval = " << checkpoint_interval << "\n";
  os << "bptt_checkpoint = " << (bptt_checkpoint ? "true" : "false") << "\n";
  os << "threads = " << threads << "\n";
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text, const std::string& source) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::config,
                  source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error(ErrorCode::config,
                  source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      cfg.set(key, value);
    } catch (const Error& e) {
      throw Error(e.code(), source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::io, "cannot open config '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return from_text(os.str(), path);
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot create '" + path + "'");
  f << to_text();
  if (!f) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

ModelDims TrainConfig::dims(int num_classes) const {
  ModelDims d;
  d.input_size = input_size;
  d.channels = channels;
  d.hidden = hidden;
  d.num_classes = num_classes;
  d.pool_mode = pool_mode;
  return d;
}

bool TrainConfig::trajectory_equal(const TrainConfig& o) const {
  return input_size == o.input_size && channels == o.channels && steps == o.steps &&
         hidden == o.hidden && fire_rate == o.fire_rate && pool_mode == o.pool_mode &&
         top_q == o.top_q && gamma == o.gamma && class_weights == o.class_weights &&
         lr0 == o.lr0 && beta1 == o.beta1 && beta2 == o.beta2 && decay == o.decay &&
         batch_size == o.batch_size && folds == o.folds && seed == o.seed &&
         augment == o.augment && bptt_checkpoint == o.bptt_checkpoint;
}

}  // namespace anca
