#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace anca {

// Counter-based splittable generator (splitmix64 over a keyed state).
// A stream is addressed by (seed, purpose, epoch, batch, sample, step), so any
// consumer can re-create exactly the draws it needs without replaying history.
// Draw sequences are independent of thread count by construction.
class Rng {
 public:
  Rng() = default;

  static Rng stream(uint64_t seed, std::string_view purpose, uint64_t epoch = 0,
                    uint64_t batch = 0, uint64_t sample = 0, uint64_t step = 0);

  uint64_t next_u64();
  // Unbiased draw in [0, bound), bound > 0.
  uint64_t next_below(uint64_t bound);
  float next_float();    // [0, 1)
  double next_double();  // [0, 1)
  float uniform(float lo, float hi);
  bool bernoulli(float p);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  explicit Rng(uint64_t key) : state_(key) {}
  uint64_t state_ = 0;
};

// Per-step Bernoulli mask over an H*W grid, row-major, one byte per cell.
std::vector<uint8_t> bernoulli_mask(Rng& rng, int height, int width, float rate);

// Addressing for the per-step masks of one rollout; tests and exports can
// re-create the exact masks a rollout consumed.
struct MaskStream {
  uint64_t seed = 0;
  std::string_view purpose = "mask";
  uint64_t epoch = 0;
  uint64_t sample = 0;

  Rng at(uint64_t step) const { return Rng::stream(seed, purpose, epoch, 0, sample, step); }
};

}  // namespace anca
