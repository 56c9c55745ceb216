#include "train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace anca {

namespace {

constexpr char kMagic[4] = {'A', 'N', 'C', 'A'};
constexpr uint32_t kVersion = 1;

struct Writer {
  std::string buf;

  void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf.append(s);
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<uint32_t>(t.rank()));
    for (int d : t.shape) u32(static_cast<uint32_t>(d));
    for (float v : t.data) f32(v);
  }
  void tensor_list(const std::vector<std::pair<std::string, Tensor>>& list) {
    u32(static_cast<uint32_t>(list.size()));
    for (const auto& [name, t] : list) tensor(name, t);
  }
};

struct Reader {
  const uint8_t* data;
  size_t size;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) {
    if (size - pos < n) throw Error(ErrorCode::data, "'" + path + "': truncated checkpoint");
  }
  uint8_t u8() {
    need(1);
    return data[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint64_t n = u64();
    if (n > size - pos) throw Error(ErrorCode::data, "'" + path + "': truncated checkpoint");
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const uint32_t rank = u32();
    if (rank > 8) throw Error(ErrorCode::data, "'" + path + "': absurd tensor rank");
    Shape shape;
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = u32();
      if (d > (1u << 24)) throw Error(ErrorCode::data, "'" + path + "': absurd tensor extent");
      shape.push_back(static_cast<int>(d));
      numel *= d;
    }
    need(static_cast<size_t>(numel) * 4);
    Tensor t(shape);
    for (int64_t i = 0; i < numel; ++i) t.data[static_cast<size_t>(i)] = f32();
    return {std::move(name), std::move(t)};
  }
  std::vector<std::pair<std::string, Tensor>> tensor_list() {
    const uint32_t n = u32();
    if (n > 4096) throw Error(ErrorCode::data, "'" + path + "': absurd tensor count");
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(n);
    for (uint32_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }
};

}  // namespace

void Checkpoint::save(const std::string& path) const {
  Writer w;
  w.buf.append(kMagic, 4);
  w.u32(kVersion);
  w.str(config.to_text());
  w.u32(static_cast<uint32_t>(class_names.size()));
  for (const auto& n : class_names) w.str(n);
  for (float v : stats.mean) w.f32(v);
  for (float v : stats.stddev) w.f32(v);
  w.tensor_list(params.items);
  w.u8(has_adam ? 1 : 0);
  if (has_adam) {
    w.tensor_list(adam.m);
    w.tensor_list(adam.u);
  }
  w.u64(static_cast<uint64_t>(step));
  w.u32(static_cast<uint32_t>(epochs_completed));
  w.f64(last_loss);
  w.f64(last_accuracy);
  w.f64(last_balanced_accuracy);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot create '" + path + "'");
  f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!f) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::data, "'" + path + "' is not a checkpoint (bad magic)");
  Reader r{reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size(), 4, path};
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw Error(ErrorCode::data, "'" + path + "': unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = TrainConfig::from_text(r.str(), path + "#config");
  const uint32_t nclasses = r.u32();
  if (nclasses > 1u << 16) throw Error(ErrorCode::data, "'" + path + "': absurd class count");
  for (uint32_t i = 0; i < nclasses; ++i) ck.class_names.push_back(r.str());
  for (float& v : ck.stats.mean) v = r.f32();
  for (float& v : ck.stats.stddev) v = r.f32();
  ck.params.items = r.tensor_list();
  ck.has_adam = r.u8() != 0;
  if (ck.has_adam) {
    ck.adam.m = r.tensor_list();
    ck.adam.u = r.tensor_list();
  }
  ck.step = static_cast<int64_t>(r.u64());
  ck.adam.t = ck.step;
  ck.epochs_completed = static_cast<int32_t>(r.u32());
  ck.last_loss = r.f64();
  ck.last_accuracy = r.f64();
  ck.last_balanced_accuracy = r.f64();

  // shape validation against the config
  const ModelDims d = ck.config.dims(static_cast<int>(ck.class_names.size()));
  if (!ck.class_names.empty()) {
    const ParamSet expect = init_params(d, Rng::stream(0, "shape"));
    if (expect.items.size() != ck.params.items.size())
      throw Error(ErrorCode::data, "'" + path + "': parameter list does not match config");
    for (size_t i = 0; i < expect.items.size(); ++i) {
      if (expect.items[i].first != ck.params.items[i].first ||
          expect.items[i].second.shape != ck.params.items[i].second.shape)
        throw Error(ErrorCode::data, "'" + path + "': tensor '" + ck.params.items[i].first +
                                         "' does not match config shapes");
    }
  }
  return ck;
}

}  // namespace anca
