#include "model/params.hpp"

#include <cmath>

#include "core/error.hpp"

namespace anca {

const char* pool_mode_name(PoolMode m) {
  switch (m) {
    case PoolMode::attention: return "attention";
    case PoolMode::conv_attention: return "conv_attention";
    case PoolMode::max: return "max";
  }
  return "attention";
}

PoolMode pool_mode_from(std::string_view name) {
  if (name == "attention") return PoolMode::attention;
  if (name == "conv_attention") return PoolMode::conv_attention;
  if (name == "max") return PoolMode::max;
  throw Error(ErrorCode::config, "unknown pool_mode '" + std::string(name) +
                                     "' (expected attention, conv_attention, or max)");
}

Tensor& ParamSet::at(std::string_view name) {
  for (auto& [k, v] : items)
    if (k == name) return v;
  throw Error(ErrorCode::internal, "no parameter named '" + std::string(name) + "'");
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& [k, v] : items)
    if (k == name) return v;
  throw Error(ErrorCode::internal, "no parameter named '" + std::string(name) + "'");
}

bool ParamSet::has(std::string_view name) const {
  for (const auto& [k, v] : items)
    if (k == name) return true;
  return false;
}

int64_t ParamSet::count() const {
  int64_t n = 0;
  for (const auto& [k, v] : items) n += v.numel();
  return n;
}

GradSet GradSet::zeros_like(const ParamSet& ps) {
  GradSet g;
  for (const auto& [name, t] : ps.items)
    g.items.emplace_back(name, std::vector<double>(static_cast<size_t>(t.numel()), 0.0));
  return g;
}

void GradSet::add(const GradSet& other) {
  if (items.size() != other.items.size())
    throw Error(ErrorCode::contract, "GradSet::add: layouts differ");
  for (size_t i = 0; i < items.size(); ++i) {
    auto& dst = items[i].second;
    const auto& src = other.items[i].second;
    if (items[i].first != other.items[i].first || dst.size() != src.size())
      throw Error(ErrorCode::contract, "GradSet::add: layouts differ at '" + items[i].first + "'");
    for (size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
  }
}

void GradSet::scale(double s) {
  for (auto& [name, v] : items)
    for (auto& e : v) e *= s;
}

ParamSet GradSet::to_f32(const ParamSet& shapes) const {
  if (shapes.items.size() != items.size())
    throw Error(ErrorCode::contract, "GradSet::to_f32: layouts differ");
  ParamSet out;
  for (size_t i = 0; i < items.size(); ++i) {
    Tensor t(shapes.items[i].second.shape);
    const auto& src = items[i].second;
    if (shapes.items[i].first != items[i].first || static_cast<size_t>(t.numel()) != src.size())
      throw Error(ErrorCode::contract, "GradSet::to_f32: layout mismatch at '" + items[i].first + "'");
    for (size_t e = 0; e < src.size(); ++e) t.data[e] = static_cast<float>(src[e]);
    out.items.emplace_back(items[i].first, std::move(t));
  }
  return out;
}

const std::vector<double>& GradSet::at(std::string_view name) const {
  for (const auto& [k, v] : items)
    if (k == name) return v;
  throw Error(ErrorCode::internal, "no gradient named '" + std::string(name) + "'");
}

namespace {

void fill_uniform(Tensor& t, float bound, Rng& rng) {
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

}  // namespace

ParamSet init_params(const ModelDims& d, Rng rng) {
  if (d.channels < 3) throw Error(ErrorCode::config, "channels must be >= 3 to hold the RGB seed");
  if (d.hidden < 1 || d.num_classes < 2 || d.input_size < 1)
    throw Error(ErrorCode::config, "invalid model dimensions");
  const int n = d.channels, h = d.hidden, c = d.num_classes, s = d.input_size;
  ParamSet ps;
  auto add = [&ps](std::string name, Shape shape) -> Tensor& {
    ps.items.emplace_back(std::move(name), Tensor(std::move(shape)));
    return ps.items.back().second;
  };

  const float conv_bound = 1.0f / 3.0f;  // 9 inputs per depthwise tap
  const float w1_bound = 1.0f / std::sqrt(static_cast<float>(3 * n));
  fill_uniform(add("nca.kappa1", {n, 3, 3}), conv_bound, rng);
  fill_uniform(add("nca.kappa2", {n, 3, 3}), conv_bound, rng);
  fill_uniform(add("nca.w1", {h, 3 * n}), w1_bound, rng);
  fill_uniform(add("nca.b1", {h}), w1_bound, rng);
  add("nca.w2", {n, h});  // zero: residual updates start as identity
  add("nca.b2", {n});

  switch (d.pool_mode) {
    case PoolMode::attention:
      add("pool.theta", {s, s});
      break;
    case PoolMode::conv_attention:
      add("pool.wc", {1, n});
      add("pool.bc", {1});
      break;
    case PoolMode::max:
      break;
  }

  const float h1_bound = 1.0f / std::sqrt(static_cast<float>(n));
  const float h2_bound = 1.0f / std::sqrt(static_cast<float>(h));
  fill_uniform(add("head.w1", {h, n}), h1_bound, rng);
  fill_uniform(add("head.b1", {h}), h1_bound, rng);
  fill_uniform(add("head.w2", {c, h}), h2_bound, rng);
  fill_uniform(add("head.b2", {c}), h2_bound, rng);
  return ps;
}

int64_t nca_param_count(int n, int h) {
  return 2LL * 9 * n + static_cast<int64_t>(h) * 3 * n + h + static_cast<int64_t>(n) * h + n;
}

int64_t param_count(const ModelDims& d) {
  int64_t total = nca_param_count(d.channels, d.hidden);
  switch (d.pool_mode) {
    case PoolMode::attention:
      total += static_cast<int64_t>(d.input_size) * d.input_size;
      break;
    case PoolMode::conv_attention:
      total += d.channels + 1;
      break;
    case PoolMode::max:
      break;
  }
  total += static_cast<int64_t>(d.hidden) * d.channels + d.hidden;
  total += static_cast<int64_t>(d.num_classes) * d.hidden + d.num_classes;
  return total;
}

}  // namespace anca
