#include "core/tape.hpp"

#include <cmath>

#include "core/kernels.hpp"

namespace anca {

const TapeNode& Tape::at(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw Error(ErrorCode::internal, "tape: bad node id " + std::to_string(id));
  return nodes_[static_cast<size_t>(id)];
}

int Tape::push(TapeNode n) {
  auto needs = [this](int id) { return id >= 0 && nodes_[static_cast<size_t>(id)].requires_grad; };
  if (n.op != Op::leaf)
    n.requires_grad = needs(n.in0) || needs(n.in1) || needs(n.in2);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor v, bool requires_grad) {
  TapeNode n;
  n.op = Op::leaf;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

int Tape::conv3x3_dw(int input, int kernels) {
  TapeNode n;
  n.op = Op::conv3x3_dw;
  n.in0 = input;
  n.in1 = kernels;
  n.value = kernels::conv3x3_depthwise(at(input).value, at(kernels).value);
  return push(std::move(n));
}

int Tape::dense_last(int input, int weight, int bias) {
  TapeNode n;
  n.op = Op::dense_last;
  n.in0 = input;
  n.in1 = weight;
  n.in2 = bias;
  n.value = kernels::dense_last(at(input).value, at(weight).value, at(bias).value);
  return push(std::move(n));
}

int Tape::relu(int x) {
  TapeNode n;
  n.op = Op::relu;
  n.in0 = x;
  n.value = kernels::relu(at(x).value);
  return push(std::move(n));
}

int Tape::sigmoid(int x) {
  TapeNode n;
  n.op = Op::sigmoid;
  n.in0 = x;
  n.value = kernels::sigmoid(at(x).value);
  return push(std::move(n));
}

int Tape::softmax_last(int x) {
  TapeNode n;
  n.op = Op::softmax_last;
  n.in0 = x;
  n.value = kernels::softmax_last(at(x).value);
  return push(std::move(n));
}

int Tape::concat3_ch(int a, int b, int c) {
  TapeNode n;
  n.op = Op::concat3_ch;
  n.in0 = a;
  n.in1 = b;
  n.in2 = c;
  n.value = kernels::concat3_channels(at(a).value, at(b).value, at(c).value);
  return push(std::move(n));
}

int Tape::masked_add(int state, int update, std::vector<uint8_t> mask) {
  TapeNode n;
  n.op = Op::masked_add;
  n.in0 = state;
  n.in1 = update;
  n.value = kernels::masked_add(at(state).value, at(update).value, mask);
  n.mask = std::move(mask);
  return push(std::move(n));
}

int Tape::mul_gate(int state, int gate) {
  TapeNode n;
  n.op = Op::mul_gate;
  n.in0 = state;
  n.in1 = gate;
  n.value = kernels::mul_gate(at(state).value, at(gate).value);
  return push(std::move(n));
}

int Tape::top_q_mean_ch(int x, float q) {
  TapeNode n;
  n.op = Op::top_q_mean_ch;
  n.in0 = x;
  int k = 0;
  n.value = kernels::top_q_mean_channels(at(x).value, q, &n.sel, &k);
  n.sel_k = k;
  return push(std::move(n));
}

int Tape::max_ch(int x) {
  TapeNode n;
  n.op = Op::max_ch;
  n.in0 = x;
  n.value = kernels::max_channels(at(x).value, &n.sel);
  return push(std::move(n));
}

int Tape::reshape(int x, Shape s) {
  if (shape_numel(s) != at(x).value.numel())
    throw Error(ErrorCode::shape, "reshape: element count mismatch " + shape_str(at(x).value.shape) +
                                      " -> " + shape_str(s));
  TapeNode n;
  n.op = Op::reshape;
  n.in0 = x;
  n.value = Tensor(std::move(s), at(x).value.data);
  return push(std::move(n));
}

int Tape::focal_loss(int probs, int label, float gamma, float alpha) {
  TapeNode n;
  n.op = Op::focal_loss;
  n.in0 = probs;
  n.label = label;
  n.gamma = gamma;
  n.alpha = alpha;
  n.value = kernels::focal_loss_term(at(probs).value, label, gamma, alpha);
  return push(std::move(n));
}

std::vector<double>& Tape::ensure_grad(int id) {
  auto& g = grads_[static_cast<size_t>(id)];
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(id)].value.numel()), 0.0);
  return g;
}

std::span<const double> Tape::grad(int id) const {
  at(id);
  if (grads_.size() != nodes_.size()) return {};
  return grads_[static_cast<size_t>(id)];
}

Tensor Tape::grad_f32(int id) const {
  const TapeNode& n = at(id);
  Tensor out(n.value.shape);
  auto g = grad(id);
  for (size_t i = 0; i < g.size(); ++i) out.data[i] = static_cast<float>(g[i]);
  return out;
}

void Tape::backward(int root) {
  if (at(root).value.numel() != 1)
    throw Error(ErrorCode::contract, "backward: root is not scalar; pass an explicit seed");
  const double one = 1.0;
  backward(root, std::span<const double>(&one, 1));
}

void Tape::backward(int root, std::span<const double> seed) {
  const TapeNode& rn = at(root);
  if (static_cast<int64_t>(seed.size()) != rn.value.numel())
    throw Error(ErrorCode::shape, "backward: seed size does not match root value");
  grads_.assign(nodes_.size(), {});
  if (!rn.requires_grad) return;
  auto& rg = ensure_grad(root);
  for (size_t i = 0; i < seed.size(); ++i) rg[i] = seed[i];

  auto wants = [this](int id) { return id >= 0 && nodes_[static_cast<size_t>(id)].requires_grad; };

  for (int id = root; id >= 0; --id) {
    const TapeNode& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || grads_[static_cast<size_t>(id)].empty()) continue;
    const std::vector<double>& dout = grads_[static_cast<size_t>(id)];
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::conv3x3_dw: {
        const Tensor& x = nodes_[static_cast<size_t>(n.in0)].value;
        const Tensor& k = nodes_[static_cast<size_t>(n.in1)].value;
        const int h = x.dim(0), w = x.dim(1), nc = x.dim(2);
        std::vector<double>* dx = wants(n.in0) ? &ensure_grad(n.in0) : nullptr;
        std::vector<double>* dk = wants(n.in1) ? &ensure_grad(n.in1) : nullptr;
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) {
            const double* drow = &dout[(static_cast<size_t>(i) * w + j) * nc];
            for (int di = -1; di <= 1; ++di) {
              const int ii = i + di;
              if (ii < 0 || ii >= h) continue;
              for (int dj = -1; dj <= 1; ++dj) {
                const int jj = j + dj;
                if (jj < 0 || jj >= w) continue;
                const int o = (di + 1) * 3 + (dj + 1);
                const size_t cell = (static_cast<size_t>(ii) * w + jj) * nc;
                if (dx) {
                  double* dxrow = &(*dx)[cell];
                  for (int c = 0; c < nc; ++c)
                    dxrow[c] += static_cast<double>(k.data[static_cast<size_t>(c) * 9 + o]) * drow[c];
                }
                if (dk) {
                  const float* xrow = &x.data[cell];
                  for (int c = 0; c < nc; ++c)
                    (*dk)[static_cast<size_t>(c) * 9 + o] += static_cast<double>(xrow[c]) * drow[c];
                }
              }
            }
          }
        }
        break;
      }
      case Op::dense_last: {
        const Tensor& x = nodes_[static_cast<size_t>(n.in0)].value;
        const Tensor& wm = nodes_[static_cast<size_t>(n.in1)].value;
        const int m = x.dim(x.rank() - 1);
        const int kk = wm.dim(0);
        const int64_t rows = m > 0 ? x.numel() / m : 0;
        std::vector<double>* dx = wants(n.in0) ? &ensure_grad(n.in0) : nullptr;
        std::vector<double>* dwacc = nullptr;
        std::vector<double> dwt;  // input-major scratch, folded back afterwards
        if (wants(n.in1)) {
          dwacc = &ensure_grad(n.in1);
          dwt.assign(static_cast<size_t>(m) * kk, 0.0);
        }
        std::vector<double>* db = wants(n.in2) ? &ensure_grad(n.in2) : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
          const double* drow = &dout[static_cast<size_t>(r) * kk];
          const float* xrow = &x.data[static_cast<size_t>(r) * m];
          if (db)
            for (int o = 0; o < kk; ++o) (*db)[static_cast<size_t>(o)] += drow[o];
          if (dwacc) {
            for (int c = 0; c < m; ++c) {
              const double xv = xrow[c];
              double* dwrow = &dwt[static_cast<size_t>(c) * kk];
              for (int o = 0; o < kk; ++o) dwrow[o] += xv * drow[o];
            }
          }
          if (dx) {
            double* dxrow = &(*dx)[static_cast<size_t>(r) * m];
            for (int o = 0; o < kk; ++o) {
              const double dv = drow[o];
              const float* wrow = &wm.data[static_cast<size_t>(o) * m];
              for (int c = 0; c < m; ++c) dxrow[c] += dv * static_cast<double>(wrow[c]);
            }
          }
        }
        if (dwacc)
          for (int o = 0; o < kk; ++o)
            for (int c = 0; c < m; ++c)
              (*dwacc)[static_cast<size_t>(o) * m + c] += dwt[static_cast<size_t>(c) * kk + o];
        break;
      }
      case Op::relu: {
        if (!wants(n.in0)) break;
        auto& dx = ensure_grad(n.in0);
        const Tensor& y = n.value;
        for (size_t i = 0; i < dx.size(); ++i)
          if (y.data[i] > 0.0f) dx[i] += dout[i];
        break;
      }
      case Op::sigmoid: {
        if (!wants(n.in0)) break;
        auto& dx = ensure_grad(n.in0);
        const Tensor& y = n.value;
        for (size_t i = 0; i < dx.size(); ++i) {
          const double s = y.data[i];
          dx[i] += dout[i] * s * (1.0 - s);
        }
        break;
      }
      case Op::softmax_last: {
        if (!wants(n.in0)) break;
        auto& dx = ensure_grad(n.in0);
        const Tensor& p = n.value;
        const int m = p.dim(p.rank() - 1);
        const int64_t rows = p.numel() / m;
        for (int64_t r = 0; r < rows; ++r) {
          const size_t off = static_cast<size_t>(r) * m;
          double dot = 0.0;
          for (int i = 0; i < m; ++i) dot += static_cast<double>(p.data[off + i]) * dout[off + i];
          for (int i = 0; i < m; ++i)
            dx[off + i] += static_cast<double>(p.data[off + i]) * (dout[off + i] - dot);
        }
        break;
      }
      case Op::concat3_ch: {
        const Tensor& a = nodes_[static_cast<size_t>(n.in0)].value;
        const Tensor& b = nodes_[static_cast<size_t>(n.in1)].value;
        const Tensor& c = nodes_[static_cast<size_t>(n.in2)].value;
        const int na = a.dim(2), nb = b.dim(2), ncc = c.dim(2);
        const int total = na + nb + ncc;
        const int64_t cells = static_cast<int64_t>(a.dim(0)) * a.dim(1);
        std::vector<double>* da = wants(n.in0) ? &ensure_grad(n.in0) : nullptr;
        std::vector<double>* dbv = wants(n.in1) ? &ensure_grad(n.in1) : nullptr;
        std::vector<double>* dc = wants(n.in2) ? &ensure_grad(n.in2) : nullptr;
        for (int64_t p = 0; p < cells; ++p) {
          const double* drow = &dout[static_cast<size_t>(p) * total];
          if (da)
            for (int i = 0; i < na; ++i) (*da)[static_cast<size_t>(p) * na + i] += drow[i];
          if (dbv)
            for (int i = 0; i < nb; ++i) (*dbv)[static_cast<size_t>(p) * nb + i] += drow[na + i];
          if (dc)
            for (int i = 0; i < ncc; ++i) (*dc)[static_cast<size_t>(p) * ncc + i] += drow[na + nb + i];
        }
        break;
      }
      case Op::masked_add: {
        const int nc = n.value.dim(2);
        const int64_t cells = static_cast<int64_t>(n.value.dim(0)) * n.value.dim(1);
        if (wants(n.in0)) {
          auto& ds = ensure_grad(n.in0);
          for (size_t i = 0; i < ds.size(); ++i) ds[i] += dout[i];
        }
        if (wants(n.in1)) {
          auto& du = ensure_grad(n.in1);
          for (int64_t p = 0; p < cells; ++p) {
            if (!n.mask[static_cast<size_t>(p)]) continue;
            const size_t off = static_cast<size_t>(p) * nc;
            for (int c = 0; c < nc; ++c) du[off + c] += dout[off + c];
          }
        }
        break;
      }
      case Op::mul_gate: {
        const Tensor& s = nodes_[static_cast<size_t>(n.in0)].value;
        const Tensor& g = nodes_[static_cast<size_t>(n.in1)].value;
        const int nc = s.dim(2);
        const int64_t cells = static_cast<int64_t>(s.dim(0)) * s.dim(1);
        std::vector<double>* ds = wants(n.in0) ? &ensure_grad(n.in0) : nullptr;
        std::vector<double>* dg = wants(n.in1) ? &ensure_grad(n.in1) : nullptr;
        for (int64_t p = 0; p < cells; ++p) {
          const size_t off = static_cast<size_t>(p) * nc;
          const double gv = g.data[static_cast<size_t>(p)];
          if (ds)
            for (int c = 0; c < nc; ++c) (*ds)[off + c] += gv * dout[off + c];
          if (dg) {
            double acc = 0.0;
            for (int c = 0; c < nc; ++c) acc += static_cast<double>(s.data[off + c]) * dout[off + c];
            (*dg)[static_cast<size_t>(p)] += acc;
          }
        }
        break;
      }
      case Op::top_q_mean_ch: {
        if (!wants(n.in0)) break;
        auto& dx = ensure_grad(n.in0);
        const int nc = n.value.dim(0);
        const int k = n.sel_k;
        for (int c = 0; c < nc; ++c) {
          const double share = dout[static_cast<size_t>(c)] / k;
          for (int t = 0; t < k; ++t) {
            const int32_t cell = n.sel[static_cast<size_t>(c) * k + t];
            dx[static_cast<size_t>(cell) * nc + c] += share;
          }
        }
        break;
      }
      case Op::max_ch: {
        if (!wants(n.in0)) break;
        auto& dx = ensure_grad(n.in0);
        const int nc = n.value.dim(0);
        for (int c = 0; c < nc; ++c)
          dx[static_cast<size_t>(n.sel[static_cast<size_t>(c)]) * nc + c] += dout[static_cast<size_t>(c)];
        break;
      }
      case Op::reshape: {
        if (!wants(n.in0)) break;
        auto& dx = ensure_grad(n.in0);
        for (size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i];
        break;
      }
      case Op::focal_loss: {
        if (!wants(n.in0)) break;
        auto& dp = ensure_grad(n.in0);
        const Tensor& probs = nodes_[static_cast<size_t>(n.in0)].value;
        const double p = probs.data[static_cast<size_t>(n.label)];
        if (p < 1e-12) break;  // inside the clamp the loss is constant in p
        const double pc = p;
        const double om = 1.0 - pc;
        const double gamma = n.gamma;
        const double alpha = n.alpha;
        double dppart;
        if (n.gamma == 0.0f) {
          dppart = -alpha / pc;
        } else if (om <= 0.0) {
          dppart = 0.0;
        } else {
          dppart = alpha * (gamma * std::pow(om, gamma - 1.0) * std::log(pc) - std::pow(om, gamma) / pc);
        }
        dp[static_cast<size_t>(n.label)] += dout[0] * dppart;
        break;
      }
    }
  }
}

}  // namespace anca
