#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "core/error.hpp"
#include "core/tensor.hpp"

// Forward math shared by the recording tape (float) and the plain evaluation
// engines (float or double). Loop order and accumulation order are fixed;
// running the same kernel twice on the same inputs is bitwise reproducible.
namespace anca::kernels {

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

// Selection size for the top-q mean: round(q*cells) half-up, clamped to [1, cells].
inline int top_q_count(float q, int64_t cells) {
  require(q > 0.0f && q <= 1.0f, ErrorCode::contract, "top_q must be in (0,1]");
  require(cells > 0, ErrorCode::shape, "top_q_count: empty grid");
  int64_t k = static_cast<int64_t>(std::floor(static_cast<double>(q) * static_cast<double>(cells) + 0.5));
  return static_cast<int>(std::clamp<int64_t>(k, 1, cells));
}

// Depthwise 3x3 convolution over [H,W,n] with zero padding; kernels [n,3,3].
template <class T>
TensorT<T> conv3x3_depthwise(const TensorT<T>& x, const TensorT<T>& k) {
  require(x.rank() == 3, ErrorCode::shape, "conv3x3: input must be [H,W,n], got " + shape_str(x.shape));
  require(k.rank() == 3 && k.dim(1) == 3 && k.dim(2) == 3, ErrorCode::shape,
          "conv3x3: kernels must be [n,3,3], got " + shape_str(k.shape));
  require(k.dim(0) == x.dim(2), ErrorCode::shape,
          "conv3x3: kernel count " + std::to_string(k.dim(0)) + " does not match channels " +
              std::to_string(x.dim(2)));
  const int h = x.dim(0), w = x.dim(1), n = x.dim(2);
  // Tap-major copy of the kernels so the channel loop is contiguous.
  std::vector<T> kt(static_cast<size_t>(9) * n);
  for (int c = 0; c < n; ++c)
    for (int o = 0; o < 9; ++o) kt[static_cast<size_t>(o) * n + c] = k.data[static_cast<size_t>(c) * 9 + o];
  TensorT<T> out(x.shape);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      T* orow = &out.data[(static_cast<size_t>(i) * w + j) * n];
      for (int di = -1; di <= 1; ++di) {
        const int ii = i + di;
        if (ii < 0 || ii >= h) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          const int jj = j + dj;
          if (jj < 0 || jj >= w) continue;
          const T* xrow = &x.data[(static_cast<size_t>(ii) * w + jj) * n];
          const T* krow = &kt[static_cast<size_t>((di + 1) * 3 + (dj + 1)) * n];
          for (int c = 0; c < n; ++c) orow[c] += xrow[c] * krow[c];
        }
      }
    }
  }
  return out;
}

// Affine map over the last axis: x [...,m] * w[k,m]^T + b[k] -> [...,k].
template <class T>
TensorT<T> dense_last(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  require(x.rank() >= 1, ErrorCode::shape, "dense: input must have at least one axis");
  require(w.rank() == 2, ErrorCode::shape, "dense: weight must be [k,m], got " + shape_str(w.shape));
  const int m = x.dim(x.rank() - 1);
  const int kk = w.dim(0);
  require(w.dim(1) == m, ErrorCode::shape,
          "dense: weight " + shape_str(w.shape) + " does not accept input " + shape_str(x.shape));
  require(b.rank() == 1 && b.dim(0) == kk, ErrorCode::shape,
          "dense: bias must be [" + std::to_string(kk) + "], got " + shape_str(b.shape));
  const int64_t rows = m > 0 ? x.numel() / m : 0;
  Shape oshape = x.shape;
  oshape.back() = kk;
  TensorT<T> out(oshape);
  // Input-major transpose of the weights so the k loop is contiguous.
  std::vector<T> wt(static_cast<size_t>(m) * kk);
  for (int r = 0; r < kk; ++r)
    for (int c = 0; c < m; ++c) wt[static_cast<size_t>(c) * kk + r] = w.data[static_cast<size_t>(r) * m + c];
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = &x.data[static_cast<size_t>(r) * m];
    T* orow = &out.data[static_cast<size_t>(r) * kk];
    for (int o = 0; o < kk; ++o) orow[o] = b.data[static_cast<size_t>(o)];
    for (int c = 0; c < m; ++c) {
      const T xv = xrow[c];
      const T* wrow = &wt[static_cast<size_t>(c) * kk];
      for (int o = 0; o < kk; ++o) orow[o] += xv * wrow[o];
    }
  }
  return out;
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return out;
}

template <class T>
T sigmoid_scalar(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  TensorT<T> out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = sigmoid_scalar(x.data[i]);
  return out;
}

// Softmax over the last axis, max-shifted per row.
template <class T>
TensorT<T> softmax_last(const TensorT<T>& x) {
  require(x.rank() >= 1 && x.dim(x.rank() - 1) > 0, ErrorCode::shape, "softmax: empty last axis");
  const int m = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / m;
  TensorT<T> out(x.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = &x.data[static_cast<size_t>(r) * m];
    T* orow = &out.data[static_cast<size_t>(r) * m];
    T mx = xrow[0];
    for (int i = 1; i < m; ++i) mx = std::max(mx, xrow[i]);
    T sum = T(0);
    for (int i = 0; i < m; ++i) {
      orow[i] = std::exp(xrow[i] - mx);
      sum += orow[i];
    }
    for (int i = 0; i < m; ++i) orow[i] /= sum;
  }
  return out;
}

// Concatenate three grids along the channel axis.
template <class T>
TensorT<T> concat3_channels(const TensorT<T>& a, const TensorT<T>& b, const TensorT<T>& c) {
  require(a.rank() == 3 && b.rank() == 3 && c.rank() == 3, ErrorCode::shape, "concat: inputs must be [H,W,c]");
  require(a.dim(0) == b.dim(0) && a.dim(1) == b.dim(1) && a.dim(0) == c.dim(0) && a.dim(1) == c.dim(1),
          ErrorCode::shape, "concat: grid sizes differ");
  const int64_t cells = static_cast<int64_t>(a.dim(0)) * a.dim(1);
  const int na = a.dim(2), nb = b.dim(2), nc = c.dim(2);
  TensorT<T> out({a.dim(0), a.dim(1), na + nb + nc});
  for (int64_t p = 0; p < cells; ++p) {
    T* orow = &out.data[static_cast<size_t>(p) * (na + nb + nc)];
    std::copy_n(&a.data[static_cast<size_t>(p) * na], na, orow);
    std::copy_n(&b.data[static_cast<size_t>(p) * nb], nb, orow + na);
    std::copy_n(&c.data[static_cast<size_t>(p) * nc], nc, orow + na + nb);
  }
  return out;
}

// state + update on cells whose mask byte is set; other cells are copied
// verbatim (bitwise, so negative zeros and denormals survive).
template <class T>
TensorT<T> masked_add(const TensorT<T>& state, const TensorT<T>& update,
                      const std::vector<uint8_t>& mask) {
  require(state.shape == update.shape && state.rank() == 3, ErrorCode::shape,
          "masked_add: state " + shape_str(state.shape) + " vs update " + shape_str(update.shape));
  const int64_t cells = static_cast<int64_t>(state.dim(0)) * state.dim(1);
  require(static_cast<int64_t>(mask.size()) == cells, ErrorCode::shape, "masked_add: mask size mismatch");
  const int n = state.dim(2);
  TensorT<T> out(state.shape);
  for (int64_t p = 0; p < cells; ++p) {
    const T* s = &state.data[static_cast<size_t>(p) * n];
    T* o = &out.data[static_cast<size_t>(p) * n];
    if (mask[static_cast<size_t>(p)]) {
      const T* u = &update.data[static_cast<size_t>(p) * n];
      for (int c = 0; c < n; ++c) o[c] = s[c] + u[c];
    } else {
      std::copy_n(s, n, o);
    }
  }
  return out;
}

// Per-cell scaling of every channel by a [H,W] gate.
template <class T>
TensorT<T> mul_gate(const TensorT<T>& state, const TensorT<T>& gate) {
  require(state.rank() == 3, ErrorCode::shape, "mul_gate: state must be [H,W,n]");
  require(gate.rank() == 2 && gate.dim(0) == state.dim(0) && gate.dim(1) == state.dim(1),
          ErrorCode::shape, "mul_gate: gate " + shape_str(gate.shape) + " vs state " + shape_str(state.shape));
  const int64_t cells = static_cast<int64_t>(state.dim(0)) * state.dim(1);
  const int n = state.dim(2);
  TensorT<T> out(state.shape);
  for (int64_t p = 0; p < cells; ++p) {
    const T g = gate.data[static_cast<size_t>(p)];
    const T* s = &state.data[static_cast<size_t>(p) * n];
    T* o = &out.data[static_cast<size_t>(p) * n];
    for (int c = 0; c < n; ++c) o[c] = s[c] * g;
  }
  return out;
}

// Selects, per channel, the k = top_q_count(q, H*W) largest cells (ties break
// toward the lower row-major index) and returns their mean. Selected flat cell
// indices are appended to sel_out channel by channel, ascending within each
// channel. Accumulation happens in double regardless of T.
template <class T>
TensorT<T> top_q_mean_channels(const TensorT<T>& x, float q,
                               std::vector<int32_t>* sel_out = nullptr, int* k_out = nullptr) {
  require(x.rank() == 3, ErrorCode::shape, "top_q_mean: input must be [H,W,n]");
  const int64_t cells = static_cast<int64_t>(x.dim(0)) * x.dim(1);
  const int n = x.dim(2);
  const int k = top_q_count(q, cells);
  if (k_out) *k_out = k;
  TensorT<T> out({n});
  std::vector<T> vals(static_cast<size_t>(cells));
  std::vector<int32_t> idx(static_cast<size_t>(cells));
  for (int c = 0; c < n; ++c) {
    for (int64_t p = 0; p < cells; ++p) {
      const T v = x.data[static_cast<size_t>(p) * n + c];
      if (std::isnan(static_cast<double>(v)))
        throw Error(ErrorCode::numeric, "top_q_mean: NaN in channel " + std::to_string(c));
      vals[static_cast<size_t>(p)] = v;
    }
    std::iota(idx.begin(), idx.end(), 0);
    auto precedes = [&vals](int32_t a, int32_t b) {
      if (vals[static_cast<size_t>(a)] != vals[static_cast<size_t>(b)])
        return vals[static_cast<size_t>(a)] > vals[static_cast<size_t>(b)];
      return a < b;
    };
    if (k < cells) std::nth_element(idx.begin(), idx.begin() + k, idx.end(), precedes);
    std::sort(idx.begin(), idx.begin() + k);
    double sum = 0.0;
    for (int t = 0; t < k; ++t) sum += static_cast<double>(vals[static_cast<size_t>(idx[t])]);
    out.data[static_cast<size_t>(c)] = static_cast<T>(sum / k);
    if (sel_out) sel_out->insert(sel_out->end(), idx.begin(), idx.begin() + k);
  }
  return out;
}

// Per-channel spatial maximum; arg_out receives one flat cell index per
// channel (first maximum in row-major order).
template <class T>
TensorT<T> max_channels(const TensorT<T>& x, std::vector<int32_t>* arg_out = nullptr) {
  require(x.rank() == 3, ErrorCode::shape, "max_channels: input must be [H,W,n]");
  const int64_t cells = static_cast<int64_t>(x.dim(0)) * x.dim(1);
  require(cells > 0, ErrorCode::shape, "max_channels: empty grid");
  const int n = x.dim(2);
  TensorT<T> out({n});
  for (int c = 0; c < n; ++c) {
    T best = x.data[static_cast<size_t>(c)];
    int32_t arg = 0;
    for (int64_t p = 1; p < cells; ++p) {
      const T v = x.data[static_cast<size_t>(p) * n + c];
      if (v > best) {
        best = v;
        arg = static_cast<int32_t>(p);
      }
    }
    out.data[static_cast<size_t>(c)] = best;
    if (arg_out) arg_out->push_back(arg);
  }
  return out;
}

// -alpha * (1-p)^gamma * log(p) for the true-class probability, p clamped to
// at least 1e-12. gamma = 0 reduces to weighted cross-entropy.
template <class T>
TensorT<T> focal_loss_term(const TensorT<T>& probs, int label, float gamma, float alpha) {
  require(probs.rank() == 1, ErrorCode::shape, "focal_loss: probs must be [C]");
  require(label >= 0 && label < probs.dim(0), ErrorCode::contract,
          "focal_loss: label " + std::to_string(label) + " out of range for C=" + std::to_string(probs.dim(0)));
  require(gamma >= 0.0f, ErrorCode::contract, "focal_loss: gamma must be >= 0");
  const double p = std::max(static_cast<double>(probs.data[static_cast<size_t>(label)]), 1e-12);
  const double om = 1.0 - p;
  double mod = 1.0;
  if (gamma != 0.0f) mod = om <= 0.0 ? 0.0 : std::pow(om, static_cast<double>(gamma));
  TensorT<T> out({1});
  out.data[0] = static_cast<T>(-static_cast<double>(alpha) * mod * std::log(p));
  return out;
}

}  // namespace anca::kernels
