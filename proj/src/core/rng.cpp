#include "core/rng.hpp"

#include "core/error.hpp"

namespace anca {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

uint64_t fold(uint64_t h, uint64_t v) { return mix64(h + kGolden + v); }

uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Rng Rng::stream(uint64_t seed, std::string_view purpose, uint64_t epoch,
                uint64_t batch, uint64_t sample, uint64_t step) {
  uint64_t h = fold(0, seed);
  h = fold(h, hash_str(purpose));
  h = fold(h, epoch);
  h = fold(h, batch);
  h = fold(h, sample);
  h = fold(h, step);
  return Rng(h);
}

uint64_t Rng::next_u64() {
  uint64_t z = (state_ += kGolden);
  return mix64(z);
}

uint64_t Rng::next_below(uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::contract, "next_below: zero bound");
  // Rejection sampling over the largest multiple of bound.
  uint64_t limit = ~uint64_t(0) - (~uint64_t(0) % bound + 1) % bound;
  for (;;) {
    uint64_t v = next_u64();
    if (v <= limit) return v % bound;
  }
}

float Rng::next_float() {
  return static_cast<float>(next_u64() >> 40) * 0x1p-24f;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1p-53;
}

float Rng::uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

bool Rng::bernoulli(float p) { return next_float() < p; }

std::vector<uint8_t> bernoulli_mask(Rng& rng, int height, int width, float rate) {
  std::vector<uint8_t> mask(static_cast<size_t>(height) * width);
  for (auto& m : mask) m = rng.bernoulli(rate) ? 1 : 0;
  return mask;
}

}  // namespace anca
