#include "model/backbone.hpp"

#include "core/engine.hpp"
#include "core/kernels.hpp"
#include "model/forward.hpp"

namespace anca {

NcaParams NcaParams::from(const ParamSet& ps) {
  NcaParams p;
  p.kappa1 = ps.at("nca.kappa1");
  p.kappa2 = ps.at("nca.kappa2");
  p.w1 = ps.at("nca.w1");
  p.b1 = ps.at("nca.b1");
  p.w2 = ps.at("nca.w2");
  p.b2 = ps.at("nca.b2");
  return p;
}

void NcaParams::into(ParamSet& ps) const {
  ps.at("nca.kappa1") = kappa1;
  ps.at("nca.kappa2") = kappa2;
  ps.at("nca.w1") = w1;
  ps.at("nca.b1") = b1;
  ps.at("nca.w2") = w2;
  ps.at("nca.b2") = b2;
}

int64_t NcaParams::count() const {
  return kappa1.numel() + kappa2.numel() + w1.numel() + b1.numel() + w2.numel() + b2.numel();
}

namespace {

// Minimal ParamSet so the concrete entry points run the exact engine pipeline.
ParamSet wrap(const NcaParams& p) {
  ParamSet ps;
  ps.items = {{"nca.kappa1", p.kappa1}, {"nca.kappa2", p.kappa2}, {"nca.w1", p.w1},
              {"nca.b1", p.b1},         {"nca.w2", p.w2},         {"nca.b2", p.b2}};
  return ps;
}

}  // namespace

Tensor seed_state(const Tensor& image, int channels) { return seed_state_tensor(image, channels); }

Tensor perceive(const Tensor& state, const NcaParams& p) {
  auto c1 = kernels::conv3x3_depthwise(state, p.kappa1);
  auto c2 = kernels::conv3x3_depthwise(state, p.kappa2);
  return kernels::concat3_channels(state, c1, c2);
}

Tensor nca_step(const Tensor& state, const NcaParams& p, const std::vector<uint8_t>& mask) {
  EvalEngine<float> eng;
  auto bound = bind_params(eng, wrap(p), false);
  return nca_step_e(eng, bound, state, mask);
}

Tensor rollout(const Tensor& image, const NcaParams& p, const RolloutConfig& cfg,
               const MaskStream& masks, std::vector<Tensor>* trajectory) {
  if (cfg.steps < 0) throw Error(ErrorCode::contract, "rollout: negative step count");
  if (!(cfg.fire_rate > 0.0f && cfg.fire_rate <= 1.0f))
    throw Error(ErrorCode::contract, "rollout: fire_rate must be in (0,1]");
  EvalEngine<float> eng;
  auto bound = bind_params(eng, wrap(p), false);
  auto state = eng.leaf(seed_state_tensor(image, p.kappa1.dim(0)));
  return rollout_e(eng, bound, state, cfg.steps, cfg.fire_rate, masks, trajectory);
}

}  // namespace anca
