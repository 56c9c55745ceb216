#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace anca {

// 8-bit RGB, row-major, 3 bytes per pixel.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;
};

// Dispatches on the file's magic bytes: PNG or binary PPM (P6).
Image8 load_image(const std::string& path);

Image8 load_png(const std::string& path);
void save_png(const std::string& path, const Image8& img);
Image8 load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Image8& img);
std::vector<uint8_t> load_pgm(const std::string& path, int* width, int* height);
void save_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& gray);

// [H,W,3] floats in [0,1] (value / 255).
Tensor to_float01(const Image8& img);

// Half-pixel-center sampling with edge clamp; works for up- and downscaling
// (no anti-aliasing).
Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);

// (x - mean) / std per channel; std entries below 1e-6 are treated as 1.
Tensor normalize(const Tensor& x, const float mean[3], const float stddev[3]);

enum class AugmentMode { none, rot90_flip, rotate_any };
const char* augment_mode_name(AugmentMode m);
AugmentMode augment_mode_from(std::string_view name);

Tensor rotate90(const Tensor& x, int quarter_turns);
Tensor flip_horizontal(const Tensor& x);  // mirrors columns
Tensor flip_vertical(const Tensor& x);    // mirrors rows
// Counterclockwise rotation about the image center, bilinear, zero fill.
Tensor rotate_arbitrary(const Tensor& x, float degrees);

// Draw order is pinned: rotation draw first (k or angle), then horizontal
// flip at p=0.5, then vertical flip at p=0.5.
Tensor apply_augment(const Tensor& x, Rng& rng, AugmentMode mode);

}  // namespace anca
