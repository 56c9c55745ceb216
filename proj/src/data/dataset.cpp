#include "data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "core/error.hpp"

namespace fs = std::filesystem;

namespace anca {

std::vector<int> DatasetIndex::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

namespace {

bool has_image_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm";
}

DatasetIndex load_from_directory(const fs::path& root) {
  DatasetIndex ds;
  std::vector<std::string> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw Error(ErrorCode::data, "no class directories under '" + root.string() + "'");

  for (const auto& cname : class_dirs) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(root / cname))
      if (e.is_regular_file() && has_image_ext(e.path())) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw Error(ErrorCode::data, "class directory '" + cname + "' contains no .png/.ppm images");
    const int label = static_cast<int>(ds.class_names.size());
    ds.class_names.push_back(cname);
    for (auto& f : files) ds.records.push_back({std::move(f), label, -1});
  }
  return ds;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.pop_back();
  }
  return fields;
}

DatasetIndex load_from_csv(const fs::path& manifest) {
  std::ifstream f(manifest);
  if (!f) throw Error(ErrorCode::io, "cannot open manifest '" + manifest.string() + "'");
  std::string line;
  if (!std::getline(f, line))
    throw Error(ErrorCode::data, "manifest '" + manifest.string() + "' is empty");
  auto header = split_csv_line(line);
  bool with_fold = false;
  if (header.size() == 2 && header[0] == "path" && header[1] == "label") {
    with_fold = false;
  } else if (header.size() == 3 && header[0] == "path" && header[1] == "label" &&
             header[2] == "fold") {
    with_fold = true;
  } else {
    throw Error(ErrorCode::data,
                "manifest '" + manifest.string() + "': header must be path,label[,fold]");
  }

  struct Row {
    std::string path;
    std::string label;
    int fold;
  };
  std::vector<Row> rows;
  std::set<std::string> names;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::data, "manifest line " + std::to_string(lineno) + ": expected " +
                                       std::to_string(header.size()) + " fields");
    int fold = -1;
    if (with_fold) {
      const auto& fstr = fields[2];
      auto res = std::from_chars(fstr.data(), fstr.data() + fstr.size(), fold);
      if (res.ec != std::errc() || res.ptr != fstr.data() + fstr.size() || fold < 0)
        throw Error(ErrorCode::data, "manifest line " + std::to_string(lineno) + ": bad fold '" + fstr + "'");
    }
    fs::path p(fields[0]);
    if (p.is_relative()) p = manifest.parent_path() / p;
    std::error_code ec;
    if (!fs::is_regular_file(p, ec))
      throw Error(ErrorCode::data, "manifest line " + std::to_string(lineno) +
                                       ": no such image '" + p.string() + "'");
    rows.push_back({p.string(), fields[1], fold});
    names.insert(fields[1]);
  }
  if (rows.empty()) throw Error(ErrorCode::data, "manifest '" + manifest.string() + "' lists no images");

  DatasetIndex ds;
  ds.class_names.assign(names.begin(), names.end());  // std::set iterates sorted
  ds.has_folds = with_fold;
  std::set<std::string> seen;
  for (auto& r : rows) {
    if (!seen.insert(r.path).second)
      throw Error(ErrorCode::data, "manifest lists '" + r.path + "' twice");
    const int label = static_cast<int>(
        std::lower_bound(ds.class_names.begin(), ds.class_names.end(), r.label) -
        ds.class_names.begin());
    ds.records.push_back({std::move(r.path), label, r.fold});
  }
  return ds;
}

}  // namespace

DatasetIndex load_dataset(const std::string& root) {
  fs::path p(root);
  std::error_code ec;
  if (fs::is_directory(p, ec)) return load_from_directory(p);
  if (fs::is_regular_file(p, ec)) return load_from_csv(p);
  throw Error(ErrorCode::io, "dataset path '" + root + "' does not exist");
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int k, Rng rng) {
  if (k < 2) throw Error(ErrorCode::config, "folds must be >= 2");
  int num_classes = 0;
  for (int l : labels) {
    if (l < 0) throw Error(ErrorCode::contract, "stratified_folds: negative label");
    num_classes = std::max(num_classes, l + 1);
  }
  std::vector<int> folds(labels.size(), -1);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<int64_t> ids;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) ids.push_back(static_cast<int64_t>(i));
    if (ids.empty()) continue;
    rng.shuffle(ids);
    const int offset = static_cast<int>(rng.next_below(static_cast<uint64_t>(k)));
    for (size_t j = 0; j < ids.size(); ++j)
      folds[static_cast<size_t>(ids[j])] = static_cast<int>((offset + j) % static_cast<size_t>(k));
  }
  return folds;
}

ChannelStats compute_mean_std(const DatasetIndex& ds, const std::vector<int>& record_ids) {
  if (record_ids.empty()) throw Error(ErrorCode::data, "mean/std requested over an empty split");
  double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
  int64_t count = 0;
  for (int id : record_ids) {
    const auto& rec = ds.records.at(static_cast<size_t>(id));
    Image8 img = load_image(rec.path);
    const int64_t pixels = static_cast<int64_t>(img.width) * img.height;
    for (int64_t p = 0; p < pixels; ++p)
      for (int c = 0; c < 3; ++c) {
        const double v = img.rgb[static_cast<size_t>(p) * 3 + c] * (1.0 / 255.0);
        sum[c] += v;
        sumsq[c] += v * v;
      }
    count += pixels;
  }
  ChannelStats s;
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    const double var = std::max(0.0, sumsq[c] / static_cast<double>(count) - mean * mean);
    s.mean[c] = static_cast<float>(mean);
    s.stddev[c] = static_cast<float>(std::sqrt(var));
  }
  return s;
}

void save_stats(const std::string& path, const ChannelStats& s) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot create '" + path + "'");
  char buf[160];
  std::snprintf(buf, sizeof buf, "mean %.9g %.9g %.9g\nstd %.9g %.9g %.9g\n",
                static_cast<double>(s.mean[0]), static_cast<double>(s.mean[1]),
                static_cast<double>(s.mean[2]), static_cast<double>(s.stddev[0]),
                static_cast<double>(s.stddev[1]), static_cast<double>(s.stddev[2]));
  f << buf;
  if (!f) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

ChannelStats load_stats(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  ChannelStats s;
  std::string tag;
  float* dst[2] = {s.mean, s.stddev};
  const char* want[2] = {"mean", "std"};
  for (int row = 0; row < 2; ++row) {
    if (!(f >> tag) || tag != want[row] || !(f >> dst[row][0] >> dst[row][1] >> dst[row][2]))
      throw Error(ErrorCode::data, "'" + path + "': not a stats file");
  }
  return s;
}

}  // namespace anca
