#include "opt/adam.hpp"

#include <cmath>

#include "core/error.hpp"

namespace anca {

AdamState AdamState::init(const ParamSet& params) {
  AdamState s;
  for (const auto& [name, t] : params.items) {
    s.m.emplace_back(name, Tensor(t.shape));
    s.u.emplace_back(name, Tensor(t.shape));
  }
  return s;
}

double lr_at(int64_t step, double lr0, double decay) {
  if (step < 0) throw Error(ErrorCode::contract, "lr_at: negative step");
  return lr0 * std::pow(decay, static_cast<double>(step));
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg) {
  if (params.items.size() != grads.items.size() || params.items.size() != state.m.size())
    throw Error(ErrorCode::contract, "adam_step: parameter, gradient, and state lists differ");
  const double lr = lr_at(state.t, cfg.lr0, cfg.decay);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.items.size(); ++i) {
    auto& [pname, p] = params.items[i];
    const auto& [gname, g] = grads.items[i];
    if (pname != gname || p.shape != g.shape)
      throw Error(ErrorCode::contract, "adam_step: gradient mismatch for '" + pname + "'");
    auto& m = state.m[i].second;
    auto& u = state.u[i].second;
    for (size_t e = 0; e < p.data.size(); ++e) {
      const double gv = g.data[e];
      const double mv = cfg.beta1 * static_cast<double>(m.data[e]) + (1.0 - cfg.beta1) * gv;
      const double uv = cfg.beta2 * static_cast<double>(u.data[e]) + (1.0 - cfg.beta2) * gv * gv;
      m.data[e] = static_cast<float>(mv);
      u.data[e] = static_cast<float>(uv);
      const double mhat = mv / bc1;
      const double uhat = uv / bc2;
      p.data[e] = static_cast<float>(static_cast<double>(p.data[e]) -
                                     lr * mhat / (std::sqrt(uhat) + cfg.eps));
    }
  }
}

}  // namespace anca
