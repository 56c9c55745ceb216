#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "core/rng.hpp"
#include "model/params.hpp"

namespace anca {

// Scalar loss with a control-flow signature (hash of every data-dependent
// selection made during the forward pass), and the analytic gradient at the
// same point. The loss must be evaluated in double precision end to end;
// coordinates whose perturbation flips the signature are skipped instead of
// compared.
struct GradCheckProbe {
  std::function<double(const ParamSet& at, uint64_t& signature)> loss;
  std::function<GradSet(const ParamSet& at)> gradient;
};

struct GradCheckReport {
  int checked = 0;
  int skipped = 0;  // selection changed under perturbation
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool pass(double tol) const { return checked > 0 && max_rel_err <= tol; }
};

// Central-difference check of `coords` coordinates spread across all tensors
// proportionally to size (at least one per tensor). Perturbations are applied
// in float, but slopes use the exactly-achieved step, so parameter
// quantization does not pollute the estimate. Throws contract_violation if
// two evaluations at the same point disagree.
GradCheckReport grad_check(const GradCheckProbe& probe, const ParamSet& at, int coords, double eps,
                           Rng rng);

}  // namespace anca
