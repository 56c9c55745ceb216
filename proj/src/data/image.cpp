#include "data/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace anca {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw Error(ErrorCode::io, "read failed for '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, const void* data, size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot create '" + path + "'");
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

// Whitespace- and comment-aware token scanner for the netpbm headers.
struct PnmScanner {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  void skip_space() {
    while (pos < bytes.size()) {
      const uint8_t c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::string token() {
    skip_space();
    size_t start = pos;
    while (pos < bytes.size() && !isspace(bytes[pos]) && bytes[pos] != '#') ++pos;
    return std::string(bytes.begin() + static_cast<ptrdiff_t>(start),
                       bytes.begin() + static_cast<ptrdiff_t>(pos));
  }

  int number(const std::string& what, const std::string& path) {
    const std::string t = token();
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
      throw Error(ErrorCode::data, "bad " + what + " in '" + path + "'");
    long v = std::strtol(t.c_str(), nullptr, 10);
    if (v <= 0 || v > 1 << 20) throw Error(ErrorCode::data, "bad " + what + " in '" + path + "'");
    return static_cast<int>(v);
  }
};

Image8 parse_ppm(const std::vector<uint8_t>& bytes, const std::string& path) {
  PnmScanner s{bytes};
  if (s.token() != "P6") throw Error(ErrorCode::data, "'" + path + "' is not a binary PPM (P6)");
  Image8 img;
  img.width = s.number("width", path);
  img.height = s.number("height", path);
  const int maxval = s.number("maxval", path);
  if (maxval != 255)
    throw Error(ErrorCode::data, "'" + path + "': only 8-bit PPM supported (maxval 255)");
  ++s.pos;  // single whitespace byte after the header
  const size_t need = static_cast<size_t>(img.width) * img.height * 3;
  if (bytes.size() - s.pos < need)
    throw Error(ErrorCode::data, "'" + path + "': truncated pixel data");
  img.rgb.assign(bytes.begin() + static_cast<ptrdiff_t>(s.pos),
                 bytes.begin() + static_cast<ptrdiff_t>(s.pos + need));
  return img;
}

struct PngReadCtx {
  const uint8_t* data;
  size_t size;
  size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t count) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + count > ctx->size) png_error(png, "truncated PNG");
  std::memcpy(out, ctx->data + ctx->pos, count);
  ctx->pos += count;
}

}  // namespace

Image8 load_png(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw Error(ErrorCode::data, "'" + path + "' is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::internal, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::internal, "png_create_info_struct failed");
  }

  Image8 img;
  std::vector<png_bytep> rows;
  PngReadCtx ctx{bytes.data(), bytes.size(), 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::data, "'" + path + "': PNG decode failed");
  }
  png_set_read_fn(png, &ctx, png_mem_read);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  png_set_expand(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<size_t>(img.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::data, "'" + path + "': unsupported PNG layout");
  }
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  rows.resize(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = img.rgb.data() + static_cast<size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const std::string& path, const Image8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw Error(ErrorCode::shape, "save_png: inconsistent image");
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(ErrorCode::io, "cannot create '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(f);
    throw Error(ErrorCode::internal, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw Error(ErrorCode::io, "'" + path + "': PNG encode failed");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.rgb.data() + static_cast<size_t>(y) * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(f) != 0) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

Image8 load_ppm(const std::string& path) { return parse_ppm(read_file(path), path); }

void save_ppm(const std::string& path, const Image8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw Error(ErrorCode::shape, "save_ppm: inconsistent image");
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::string out = header;
  out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
  write_file(path, out.data(), out.size());
}

std::vector<uint8_t> load_pgm(const std::string& path, int* width, int* height) {
  const std::vector<uint8_t> bytes = read_file(path);
  PnmScanner s{bytes};
  if (s.token() != "P5") throw Error(ErrorCode::data, "'" + path + "' is not a binary PGM (P5)");
  const int w = s.number("width", path);
  const int h = s.number("height", path);
  const int maxval = s.number("maxval", path);
  if (maxval != 255) throw Error(ErrorCode::data, "'" + path + "': only 8-bit PGM supported");
  ++s.pos;
  const size_t need = static_cast<size_t>(w) * h;
  if (bytes.size() - s.pos < need) throw Error(ErrorCode::data, "'" + path + "': truncated pixel data");
  if (width) *width = w;
  if (height) *height = h;
  return std::vector<uint8_t>(bytes.begin() + static_cast<ptrdiff_t>(s.pos),
                              bytes.begin() + static_cast<ptrdiff_t>(s.pos + need));
}

void save_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& gray) {
  if (width <= 0 || height <= 0 || gray.size() != static_cast<size_t>(width) * height)
    throw Error(ErrorCode::shape, "save_pgm: inconsistent image");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(gray.data()), gray.size());
  write_file(path, out.data(), out.size());
}

Image8 load_image(const std::string& path) {
  const std::vector<uint8_t> head = read_file(path);
  if (head.size() >= 8 && png_sig_cmp(head.data(), 0, 8) == 0) return load_png(path);
  if (head.size() >= 2 && head[0] == 'P' && head[1] == '6') return parse_ppm(head, path);
  throw Error(ErrorCode::data, "'" + path + "': unsupported image format (need 8-bit PNG or P6 PPM)");
}

Tensor to_float01(const Image8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw Error(ErrorCode::shape, "to_float01: inconsistent image");
  Tensor out({img.height, img.width, 3});
  for (size_t i = 0; i < img.rgb.size(); ++i) out.data[i] = img.rgb[i] * (1.0f / 255.0f);
  return out;
}

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
  if (src.rank() != 3) throw Error(ErrorCode::shape, "resize: input must be [H,W,c]");
  if (out_h < 1 || out_w < 1) throw Error(ErrorCode::shape, "resize: bad output size");
  const int h = src.dim(0), w = src.dim(1), c = src.dim(2);
  if (h == out_h && w == out_w) return src;
  Tensor out({out_h, out_w, c});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    const double fy = (i + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const float wy = static_cast<float>(fy - y0);
    const int y0c = std::clamp(y0, 0, h - 1);
    const int y1c = std::clamp(y0 + 1, 0, h - 1);
    for (int j = 0; j < out_w; ++j) {
      const double fx = (j + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const float wx = static_cast<float>(fx - x0);
      const int x0c = std::clamp(x0, 0, w - 1);
      const int x1c = std::clamp(x0 + 1, 0, w - 1);
      const float* p00 = &src.data[(static_cast<size_t>(y0c) * w + x0c) * c];
      const float* p01 = &src.data[(static_cast<size_t>(y0c) * w + x1c) * c];
      const float* p10 = &src.data[(static_cast<size_t>(y1c) * w + x0c) * c];
      const float* p11 = &src.data[(static_cast<size_t>(y1c) * w + x1c) * c];
      float* o = &out.data[(static_cast<size_t>(i) * out_w + j) * c];
      for (int ch = 0; ch < c; ++ch) {
        const float top = p00[ch] + (p01[ch] - p00[ch]) * wx;
        const float bot = p10[ch] + (p11[ch] - p10[ch]) * wx;
        o[ch] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

Tensor normalize(const Tensor& x, const float mean[3], const float stddev[3]) {
  if (x.rank() != 3 || x.dim(2) != 3)
    throw Error(ErrorCode::shape, "normalize: input must be [H,W,3]");
  Tensor out(x.shape);
  float inv[3];
  for (int c = 0; c < 3; ++c) inv[c] = 1.0f / (stddev[c] < 1e-6f ? 1.0f : stddev[c]);
  const int64_t pixels = x.numel() / 3;
  for (int64_t p = 0; p < pixels; ++p)
    for (int c = 0; c < 3; ++c) {
      const size_t i = static_cast<size_t>(p) * 3 + static_cast<size_t>(c);
      out.data[i] = (x.data[i] - mean[c]) * inv[c];
    }
  return out;
}

const char* augment_mode_name(AugmentMode m) {
  switch (m) {
    case AugmentMode::none: return "none";
    case AugmentMode::rot90_flip: return "rot90_flip";
    case AugmentMode::rotate_any: return "rotate_any";
  }
  return "none";
}

AugmentMode augment_mode_from(std::string_view name) {
  if (name == "none") return AugmentMode::none;
  if (name == "rot90_flip") return AugmentMode::rot90_flip;
  if (name == "rotate_any") return AugmentMode::rotate_any;
  throw Error(ErrorCode::config,
              "unknown augment mode '" + std::string(name) + "' (expected none, rot90_flip, or rotate_any)");
}

Tensor rotate90(const Tensor& x, int quarter_turns) {
  if (x.rank() != 3) throw Error(ErrorCode::shape, "rotate90: input must be [H,W,c]");
  int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return x;
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const int oh = (k % 2 == 0) ? h : w;
  const int ow = (k % 2 == 0) ? w : h;
  Tensor out({oh, ow, c});
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      int si = 0, sj = 0;  // counterclockwise rotation source coordinates
      switch (k) {
        case 1: si = j; sj = w - 1 - i; break;
        case 2: si = h - 1 - i; sj = w - 1 - j; break;
        case 3: si = h - 1 - j; sj = i; break;
      }
      const float* s = &x.data[(static_cast<size_t>(si) * w + sj) * c];
      std::copy_n(s, c, &out.data[(static_cast<size_t>(i) * ow + j) * c]);
    }
  return out;
}

Tensor flip_horizontal(const Tensor& x) {
  if (x.rank() != 3) throw Error(ErrorCode::shape, "flip: input must be [H,W,c]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out(x.shape);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      std::copy_n(&x.data[(static_cast<size_t>(i) * w + (w - 1 - j)) * c], c,
                  &out.data[(static_cast<size_t>(i) * w + j) * c]);
  return out;
}

Tensor flip_vertical(const Tensor& x) {
  if (x.rank() != 3) throw Error(ErrorCode::shape, "flip: input must be [H,W,c]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out(x.shape);
  for (int i = 0; i < h; ++i)
    std::copy_n(&x.data[(static_cast<size_t>(h - 1 - i) * w) * c], static_cast<size_t>(w) * c,
                &out.data[(static_cast<size_t>(i) * w) * c]);
  return out;
}

Tensor rotate_arbitrary(const Tensor& x, float degrees) {
  if (x.rank() != 3) throw Error(ErrorCode::shape, "rotate: input must be [H,W,c]");
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const double rad = static_cast<double>(degrees) * (3.14159265358979323846 / 180.0);
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double cy = (h - 1) * 0.5, cx = (w - 1) * 0.5;
  Tensor out(x.shape);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      // inverse-rotate the output coordinate into the source frame
      const double dy = i - cy, dx = j - cx;
      const double sy = cy + (ca * dy + sa * dx);
      const double sx = cx + (-sa * dy + ca * dx);
      float* o = &out.data[(static_cast<size_t>(i) * w + j) * c];
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      if (y0 < -1 || y0 >= h || x0 < -1 || x0 >= w) continue;  // fully outside: zero fill
      const float wy = static_cast<float>(sy - y0);
      const float wx = static_cast<float>(sx - x0);
      auto sample = [&](int yy, int xx, int ch) -> float {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0f;
        return x.data[(static_cast<size_t>(yy) * w + xx) * c + ch];
      };
      for (int ch = 0; ch < c; ++ch) {
        const float top = sample(y0, x0, ch) + (sample(y0, x0 + 1, ch) - sample(y0, x0, ch)) * wx;
        const float bot =
            sample(y0 + 1, x0, ch) + (sample(y0 + 1, x0 + 1, ch) - sample(y0 + 1, x0, ch)) * wx;
        o[ch] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

Tensor apply_augment(const Tensor& x, Rng& rng, AugmentMode mode) {
  if (mode == AugmentMode::none) return x;
  Tensor out;
  if (mode == AugmentMode::rot90_flip) {
    const int k = static_cast<int>(rng.next_below(4));
    out = rotate90(x, k);
  } else {
    out = rotate_arbitrary(x, rng.uniform(0.0f, 360.0f));
  }
  if (rng.bernoulli(0.5f)) out = flip_horizontal(out);
  if (rng.bernoulli(0.5f)) out = flip_vertical(out);
  return out;
}

}  // namespace anca
