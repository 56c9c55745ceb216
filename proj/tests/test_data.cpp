#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unistd.h>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "data/dataset.hpp"
#include "data/image.hpp"

using namespace anca;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("anca_data_test_" + std::to_string(Rng::stream(::getpid(), "tmpdir").next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Image8 solid(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
  Image8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  for (int i = 0; i < w * h; ++i) {
    img.rgb[3 * i + 0] = r;
    img.rgb[3 * i + 1] = g;
    img.rgb[3 * i + 2] = b;
  }
  return img;
}

}  // namespace

TEST_CASE("dataset: directory layout yields sorted classes and labels") {
  TempDir td;
  fs::create_directories(td.path / "b");
  fs::create_directories(td.path / "a");
  for (int i = 0; i < 3; ++i)
    save_ppm((td.path / "a" / ("img" + std::to_string(i) + ".ppm")).string(), solid(4, 4, 10, 20, 30));
  for (int i = 0; i < 2; ++i)
    save_ppm((td.path / "b" / ("img" + std::to_string(i) + ".ppm")).string(), solid(4, 4, 40, 50, 60));

  const DatasetIndex ds = load_dataset(td.path.string());
  REQUIRE(ds.records.size() == 5);
  REQUIRE(ds.class_names == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(ds.has_folds);
  CHECK(ds.labels() == std::vector<int>{0, 0, 0, 1, 1});
  for (const auto& r : ds.records) CHECK(r.fold == -1);
}

TEST_CASE("dataset: empty class directory is a data error") {
  TempDir td;
  fs::create_directories(td.path / "a");
  fs::create_directories(td.path / "empty");
  save_ppm((td.path / "a" / "img.ppm").string(), solid(4, 4, 1, 2, 3));
  CHECK_THROWS_AS(load_dataset(td.path.string()), Error);
}

TEST_CASE("dataset: csv manifest carries folds through verbatim") {
  TempDir td;
  save_ppm((td.path / "x0.ppm").string(), solid(4, 4, 1, 1, 1));
  save_ppm((td.path / "x1.ppm").string(), solid(4, 4, 2, 2, 2));
  save_ppm((td.path / "x2.ppm").string(), solid(4, 4, 3, 3, 3));
  {
    std::ofstream out(td.path / "index.csv");
    out << "path,label,fold\n";
    out << "x0.ppm,cat,2\n";
    out << "x1.ppm,dog,0\n";
    out << "x2.ppm,cat,1\n";
  }
  const DatasetIndex ds = load_dataset((td.path / "index.csv").string());
  REQUIRE(ds.records.size() == 3);
  CHECK(ds.has_folds);
  CHECK(ds.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(ds.records[0].label == 0);
  CHECK(ds.records[1].label == 1);
  CHECK(ds.records[0].fold == 2);
  CHECK(ds.records[1].fold == 0);
  CHECK(ds.records[2].fold == 1);
}

TEST_CASE("dataset: csv manifest without fold column leaves folds unset") {
  TempDir td;
  save_ppm((td.path / "x0.ppm").string(), solid(4, 4, 1, 1, 1));
  {
    std::ofstream out(td.path / "index.csv");
    out << "path,label\n";
    out << "x0.ppm,only\n";
  }
  const DatasetIndex ds = load_dataset((td.path / "index.csv").string());
  CHECK_FALSE(ds.has_folds);
  CHECK(ds.records[0].fold == -1);
}

TEST_CASE("dataset: csv header must name path and label") {
  TempDir td;
  {
    std::ofstream out(td.path / "index.csv");
    out << "file,class\n";
    out << "x0.ppm,only\n";
  }
  CHECK_THROWS_AS(load_dataset((td.path / "index.csv").string()), Error);
}

TEST_CASE("dataset: csv row referencing a missing file names the path") {
  TempDir td;
  {
    std::ofstream out(td.path / "index.csv");
    out << "path,label\n";
    out << "ghost.ppm,only\n";
  }
  try {
    load_dataset((td.path / "index.csv").string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ghost.ppm") != std::string::npos);
  }
}

TEST_CASE("image: ppm round trip preserves bytes") {
  TempDir td;
  Image8 img = solid(5, 3, 0, 0, 0);
  Rng rng = Rng::stream(1, "imgbytes");
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.next_below(256));
  const std::string p = (td.path / "roundtrip.ppm").string();
  save_ppm(p, img);
  const Image8 back = load_image(p);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("image: png round trip preserves bytes") {
  TempDir td;
  Image8 img = solid(7, 4, 0, 0, 0);
  Rng rng = Rng::stream(2, "imgbytes");
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.next_below(256));
  const std::string p = (td.path / "roundtrip.png").string();
  save_png(p, img);
  const Image8 back = load_image(p);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("image: pgm round trip preserves bytes") {
  TempDir td;
  std::vector<uint8_t> gray(6 * 4);
  for (size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<uint8_t>(i * 11);
  const std::string p = (td.path / "gate.pgm").string();
  save_pgm(p, 6, 4, gray);
  int w = 0, h = 0;
  const std::vector<uint8_t> back = load_pgm(p, &w, &h);
  CHECK(w == 6);
  CHECK(h == 4);
  CHECK(back == gray);
}

TEST_CASE("image: to_float01 divides by 255") {
  Image8 img = solid(2, 1, 0, 128, 255);
  const Tensor t = to_float01(img);
  REQUIRE(t.shape == Shape{1, 2, 3});
  CHECK(t.data[0] == 0.0f);
  CHECK(t.data[1] == doctest::Approx(128.0f / 255.0f));
  CHECK(t.data[2] == 1.0f);
}

TEST_CASE("image: resize to the same size is the identity") {
  Image8 img = solid(6, 5, 0, 0, 0);
  Rng rng = Rng::stream(3, "imgbytes");
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.next_below(256));
  const Tensor t = to_float01(img);
  const Tensor r = resize_bilinear(t, 5, 6);
  REQUIRE(r.shape == t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) CHECK(r.data[i] == doctest::Approx(t.data[i]).epsilon(1e-6));
}

TEST_CASE("image: 2x2 checkerboard upsamples to the bilinear oracle") {
  // pixels (0,255;255,0) on every channel, upsampled to 4x4. With half-pixel
  // centers the source coordinate of output pixel j is (j+0.5)/2 - 0.5, so
  // the interpolation weights along each axis are 0, 0.25, 0.75, 1.
  Image8 img;
  img.width = 2;
  img.height = 2;
  img.rgb = {0, 0, 0, 255, 255, 255, 255, 255, 255, 0, 0, 0};
  const Tensor t = to_float01(img);
  const Tensor r = resize_bilinear(t, 4, 4);
  REQUIRE(r.shape == Shape{4, 4, 3});
  const float w[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      // bilinear blend of corners a=0, b=1, c=1, d=0
      const float fy = w[y], fx = w[x];
      const float expect = (1 - fy) * ((1 - fx) * 0.0f + fx * 1.0f) + fy * ((1 - fx) * 1.0f + fx * 0.0f);
      for (int c = 0; c < 3; ++c) {
        const float got = r.data[(static_cast<size_t>(y) * 4 + x) * 3 + c];
        CHECK(std::abs(got - expect) <= 1e-6f);
      }
    }
  }
}

TEST_CASE("image: normalize maps the channel mean to zero") {
  Image8 img = solid(3, 3, 128, 128, 128);
  const Tensor t = to_float01(img);
  const float mean[3] = {128.0f / 255.0f, 128.0f / 255.0f, 128.0f / 255.0f};
  const float stddev[3] = {1.0f, 1.0f, 1.0f};
  const Tensor z = normalize(t, mean, stddev);
  for (float v : z.data) CHECK(v == 0.0f);
}

TEST_CASE("image: normalize treats tiny stddev as one") {
  Image8 img = solid(2, 2, 51, 51, 51);
  const Tensor t = to_float01(img);
  const float mean[3] = {0.0f, 0.0f, 0.0f};
  const float stddev[3] = {0.0f, 1e-9f, 2.0f};
  const Tensor z = normalize(t, mean, stddev);
  CHECK(z.data[0] == doctest::Approx(0.2f));
  CHECK(z.data[1] == doctest::Approx(0.2f));
  CHECK(z.data[2] == doctest::Approx(0.1f));
}

TEST_CASE("augment: none is the identity") {
  Rng rng = Rng::stream(4, "augment");
  Tensor t({3, 3, 3});
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(i);
  const Tensor out = apply_augment(t, rng, AugmentMode::none);
  CHECK(out.data == t.data);
}

TEST_CASE("augment: two half turns are the identity") {
  Tensor t({2, 3, 3});
  for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(i) * 0.5f;
  const Tensor out = rotate90(rotate90(t, 2), 2);
  CHECK(out.shape == t.shape);
  CHECK(out.data == t.data);
  const Tensor once = rotate90(t, 1);
  CHECK(once.shape == Shape{3, 2, 3});
  const Tensor back = rotate90(once, 3);
  CHECK(back.data == t.data);
}

TEST_CASE("augment: flips are involutions") {
  Tensor t({3, 4, 3});
  Rng rng = Rng::stream(5, "augment");
  for (auto& v : t.data) v = rng.uniform(-1.0f, 1.0f);
  CHECK(flip_horizontal(flip_horizontal(t)).data == t.data);
  CHECK(flip_vertical(flip_vertical(t)).data == t.data);
}

TEST_CASE("augment: rot90_flip preserves the pixel multiset") {
  Tensor t({4, 4, 3});
  Rng fill = Rng::stream(6, "augment");
  for (auto& v : t.data) v = fill.uniform(0.0f, 1.0f);
  std::vector<float> before = t.data;
  std::sort(before.begin(), before.end());
  for (uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng = Rng::stream(7, "augment", trial);
    std::vector<float> after = apply_augment(t, rng, AugmentMode::rot90_flip).data;
    std::sort(after.begin(), after.end());
    CHECK(after == before);
  }
}

TEST_CASE("augment: identical streams produce identical outputs") {
  Tensor t({5, 5, 3});
  Rng fill = Rng::stream(8, "augment");
  for (auto& v : t.data) v = fill.uniform(-1.0f, 1.0f);
  for (auto mode : {AugmentMode::rot90_flip, AugmentMode::rotate_any}) {
    Rng a = Rng::stream(9, "augment", 3, 0, 12);
    Rng b = Rng::stream(9, "augment", 3, 0, 12);
    const Tensor ta = apply_augment(t, a, mode);
    const Tensor tb = apply_augment(t, b, mode);
    CHECK(ta.data == tb.data);
  }
}

TEST_CASE("augment: arbitrary rotation keeps shape and fills corners with zero") {
  Tensor t({8, 8, 3});
  for (auto& v : t.data) v = 1.0f;
  const Tensor r = rotate_arbitrary(t, 45.0f);
  CHECK(r.shape == t.shape);
  // the corner pixel leaves the source square under a 45 degree turn
  CHECK(r.data[0] == 0.0f);
  // the center pixel stays put
  const size_t mid = (static_cast<size_t>(4) * 8 + 4) * 3;
  CHECK(r.data[mid] == doctest::Approx(1.0f).epsilon(1e-4));
}

TEST_CASE("folds: balanced two-class set splits one per class per fold") {
  std::vector<int> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const std::vector<int> folds = stratified_folds(labels, 5, Rng::stream(10, "folds"));
  REQUIRE(folds.size() == labels.size());
  std::map<std::pair<int, int>, int> count;  // (class, fold) -> n
  for (size_t i = 0; i < labels.size(); ++i) {
    CHECK(folds[i] >= 0);
    CHECK(folds[i] < 5);
    ++count[{labels[i], folds[i]}];
  }
  for (int c = 0; c < 2; ++c)
    for (int f = 0; f < 5; ++f) CHECK(count[{c, f}] == 1);
}

TEST_CASE("folds: per-class counts never differ by more than one") {
  Rng label_rng = Rng::stream(11, "folds");
  for (uint64_t trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(label_rng.next_below(6));
    const int classes = 1 + static_cast<int>(label_rng.next_below(4));
    const int n = 3 + static_cast<int>(label_rng.next_below(40));
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(label_rng.next_below(classes));
    const std::vector<int> folds = stratified_folds(labels, k, Rng::stream(12, "folds", trial));
    std::map<int, std::vector<int>> per_class;  // class -> fold histogram
    for (int c = 0; c < classes; ++c) per_class[c] = std::vector<int>(k, 0);
    for (int i = 0; i < n; ++i) ++per_class[labels[i]][folds[i]];
    for (const auto& [c, hist] : per_class) {
      const auto [lo, hi] = std::minmax_element(hist.begin(), hist.end());
      CHECK(*hi - *lo <= 1);
    }
  }
}

TEST_CASE("folds: same seed gives the same assignment") {
  std::vector<int> labels(37);
  Rng label_rng = Rng::stream(13, "folds");
  for (auto& l : labels) l = static_cast<int>(label_rng.next_below(3));
  const auto a = stratified_folds(labels, 4, Rng::stream(14, "folds"));
  const auto b = stratified_folds(labels, 4, Rng::stream(14, "folds"));
  CHECK(a == b);
}

TEST_CASE("stats: all-black dataset has zero mean and zero std") {
  TempDir td;
  fs::create_directories(td.path / "only");
  for (int i = 0; i < 2; ++i)
    save_ppm((td.path / "only" / ("b" + std::to_string(i) + ".ppm")).string(), solid(4, 4, 0, 0, 0));
  const DatasetIndex ds = load_dataset(td.path.string());
  const ChannelStats s = compute_mean_std(ds, {0, 1});
  for (int c = 0; c < 3; ++c) {
    CHECK(s.mean[c] == 0.0f);
    CHECK(s.stddev[c] == 0.0f);
  }
}

TEST_CASE("stats: two-point pixel distribution has mean and std one half") {
  TempDir td;
  fs::create_directories(td.path / "only");
  save_ppm((td.path / "only" / "black.ppm").string(), solid(4, 4, 0, 0, 0));
  save_ppm((td.path / "only" / "white.ppm").string(), solid(4, 4, 255, 255, 255));
  const DatasetIndex ds = load_dataset(td.path.string());
  const ChannelStats s = compute_mean_std(ds, {0, 1});
  for (int c = 0; c < 3; ++c) {
    CHECK(s.mean[c] == doctest::Approx(0.5f));
    CHECK(s.stddev[c] == doctest::Approx(0.5f));
  }
}

TEST_CASE("stats: single constant image has its value as mean and zero std") {
  TempDir td;
  fs::create_directories(td.path / "only");
  save_ppm((td.path / "only" / "half.ppm").string(), solid(3, 5, 128, 128, 128));
  const DatasetIndex ds = load_dataset(td.path.string());
  const ChannelStats s = compute_mean_std(ds, {0});
  for (int c = 0; c < 3; ++c) {
    CHECK(s.mean[c] == doctest::Approx(128.0f / 255.0f));
    CHECK(std::abs(s.stddev[c]) <= 1e-6f);
  }
}

TEST_CASE("stats: save and load round trip") {
  TempDir td;
  ChannelStats s;
  s.mean[0] = 0.259137571f;
  s.mean[1] = 0.5f;
  s.mean[2] = 0.123456789f;
  s.stddev[0] = 0.257709652f;
  s.stddev[1] = 1.0f;
  s.stddev[2] = 0.000123456f;
  const std::string p = (td.path / "stats.txt").string();
  save_stats(p, s);
  const ChannelStats back = load_stats(p);
  for (int c = 0; c < 3; ++c) {
    CHECK(back.mean[c] == s.mean[c]);
    CHECK(back.stddev[c] == s.stddev[c]);
  }
  std::ifstream in(p);
  std::string line1, line2, line3;
  std::getline(in, line1);
  std::getline(in, line2);
  CHECK_FALSE(std::getline(in, line3));
  CHECK(line1.rfind("mean ", 0) == 0);
  CHECK(line2.rfind("std ", 0) == 0);
}
