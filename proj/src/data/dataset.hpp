#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "data/image.hpp"

namespace anca {

// Dataset index: either a directory laid out as root/<class_name>/*.png|*.ppm
// or a CSV manifest with header "path,label[,fold]" (label is the class name;
// CSV paths resolve relative to the manifest's directory).
struct DatasetIndex {
  struct Record {
    std::string path;
    int label = -1;
    int fold = -1;  // -1 when the manifest carries no fold column
  };
  std::vector<Record> records;
  std::vector<std::string> class_names;  // sorted; label indexes into it
  bool has_folds = false;

  std::vector<int> labels() const;
};

DatasetIndex load_dataset(const std::string& root);

// Per-class round-robin assignment after a seeded per-class shuffle with a
// random fold offset; per-class fold counts differ by at most one.
std::vector<int> stratified_folds(const std::vector<int>& labels, int k, Rng rng);

struct ChannelStats {
  float mean[3] = {0, 0, 0};
  float stddev[3] = {0, 0, 0};
};

// Population mean/std of the raw [0,1] pixels at native resolution, streamed
// in double over the given records.
ChannelStats compute_mean_std(const DatasetIndex& ds, const std::vector<int>& record_ids);

// Text cache: lines "mean r g b" and "std r g b", 9 significant digits.
void save_stats(const std::string& path, const ChannelStats& s);
ChannelStats load_stats(const std::string& path);

}  // namespace anca
