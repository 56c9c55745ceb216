#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace anca {

GradCheckReport grad_check(const GradCheckProbe& probe, const ParamSet& at, int coords, double eps,
                           Rng rng) {
  if (coords < 1) throw Error(ErrorCode::contract, "grad_check: coords must be >= 1");
  if (!(eps > 0.0)) throw Error(ErrorCode::contract, "grad_check: eps must be positive");

  uint64_t sig0 = 0, sig1 = 0;
  const double f0 = probe.loss(at, sig0);
  const double f1 = probe.loss(at, sig1);
  if (f0 != f1 || sig0 != sig1)
    throw Error(ErrorCode::contract,
                "grad_check: loss is not deterministic at the evaluation point");

  const GradSet analytic = probe.gradient(at);

  const int64_t total = at.count();
  if (total == 0) throw Error(ErrorCode::contract, "grad_check: no parameters");

  ParamSet work = at;
  GradCheckReport rep;
  for (size_t ti = 0; ti < work.items.size(); ++ti) {
    auto& [name, tensor] = work.items[ti];
    const int64_t numel = tensor.numel();
    if (numel == 0) continue;
    int64_t want = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(static_cast<double>(coords) * numel / total)));
    want = std::min(want, numel);
    // distinct coordinate sample
    std::vector<int64_t> offs;
    if (want * 2 >= numel) {
      offs.resize(static_cast<size_t>(numel));
      for (int64_t i = 0; i < numel; ++i) offs[static_cast<size_t>(i)] = i;
      rng.shuffle(offs);
      offs.resize(static_cast<size_t>(want));
    } else {
      std::vector<uint8_t> seen(static_cast<size_t>(numel), 0);
      while (static_cast<int64_t>(offs.size()) < want) {
        int64_t o = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(numel)));
        if (!seen[static_cast<size_t>(o)]) {
          seen[static_cast<size_t>(o)] = 1;
          offs.push_back(o);
        }
      }
    }
    std::sort(offs.begin(), offs.end());

    const auto& grad_vec = analytic.at(name);
    for (int64_t o : offs) {
      const float orig = tensor.data[static_cast<size_t>(o)];
      const float vp = static_cast<float>(static_cast<double>(orig) + eps);
      const float vm = static_cast<float>(static_cast<double>(orig) - eps);
      const double hp = static_cast<double>(vp) - static_cast<double>(orig);
      const double hm = static_cast<double>(vm) - static_cast<double>(orig);
      if (hp - hm == 0.0) {  // parameter too large for this eps to register
        ++rep.skipped;
        continue;
      }
      uint64_t sp = 0, sm = 0;
      tensor.data[static_cast<size_t>(o)] = vp;
      const double fp = probe.loss(work, sp);
      tensor.data[static_cast<size_t>(o)] = vm;
      const double fm = probe.loss(work, sm);
      tensor.data[static_cast<size_t>(o)] = orig;
      if (sp != sig0 || sm != sig0) {  // selection flipped: subgradient point
        ++rep.skipped;
        continue;
      }
      const double fd = (fp - fm) / (hp - hm);
      const double g = grad_vec[static_cast<size_t>(o)];
      const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = o;
        rep.worst_analytic = g;
        rep.worst_numeric = fd;
      }
    }
  }
  return rep;
}

}  // namespace anca
