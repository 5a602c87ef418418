#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fbnn/encode.hpp"
#include "fbnn/qat.hpp"

namespace fbnn {

struct LabeledDataset {
  std::vector<Image8> images;
  std::vector<int> labels;
  int numClasses = 0;
  std::string provenance;

  int64_t size() const { return static_cast<int64_t>(images.size()); }
};

// Public CIFAR binary layout: per record, label byte(s) then 3072 pixel bytes
// in channel-planar order (1024 R, 1024 G, 1024 B, rows first). CIFAR-10 has
// one label byte per record (3073), CIFAR-100 two (coarse then fine, 3074).
inline LabeledDataset load_cifar_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open dataset file: " + path);
  const int64_t size = static_cast<int64_t>(f.tellg());
  f.seekg(0);
  if (size == 0) throw IoError("empty dataset file: " + path);

  int labelBytes = 0;
  if (size % 3073 == 0)
    labelBytes = 1;
  else if (size % 3074 == 0)
    labelBytes = 2;
  else
    throw IoError("unrecognized record layout in " + path + ": trailing " +
                  std::to_string(size % 3073) + " bytes after " + std::to_string(size / 3073) +
                  " single-label records");
  const int64_t recordLen = 3072 + labelBytes;
  const int64_t n = size / recordLen;

  LabeledDataset ds;
  ds.provenance = path;
  ds.numClasses = labelBytes == 1 ? 10 : 100;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  std::vector<unsigned char> rec(recordLen);
  for (int64_t r = 0; r < n; ++r) {
    if (!f.read(reinterpret_cast<char*>(rec.data()), recordLen))
      throw IoError("truncated record at byte offset " + std::to_string(r * recordLen) + " in " +
                    path);
    ds.labels.push_back(rec[labelBytes - 1]);  // fine label for the 2-byte layout
    Image8 img(32, 32, 3);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          img.at(y, x, c) = rec[labelBytes + c * 1024 + y * 32 + x];
    ds.images.push_back(std::move(img));
  }
  return ds;
}

struct PhaseIndices {
  std::vector<int> train, val;
};

struct TaskSplit {
  std::vector<int> pretrainClasses;
  std::vector<std::vector<int>> taskClasses;
  PhaseIndices pretrain;
  std::vector<PhaseIndices> tasks;
  uint64_t seed = 0;
};

// Stratified split of the given classes' samples into train/val index lists;
// per class, holdout = round(valFrac * count), order shuffled by seed.
inline PhaseIndices stratified_holdout(const LabeledDataset& ds, const std::vector<int>& classes,
                                       double valFrac, uint64_t seed) {
  PhaseIndices out;
  for (int cls : classes) {
    std::vector<int> idx;
    for (int64_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == cls) idx.push_back(static_cast<int>(i));
    Rng rng(derive_seed(seed, 0x57a7 + static_cast<uint64_t>(cls)));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto nVal = static_cast<size_t>(std::lround(valFrac * static_cast<double>(idx.size())));
    for (size_t i = 0; i < idx.size(); ++i)
      (i < nVal ? out.val : out.train).push_back(idx[i]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

inline TaskSplit make_class_split(const LabeledDataset& ds, std::vector<int> pretrainClasses,
                                  std::vector<std::vector<int>> taskClasses, double valFrac,
                                  uint64_t seed) {
  std::vector<bool> used(static_cast<size_t>(ds.numClasses), false);
  auto mark = [&](const std::vector<int>& cs) {
    for (int c : cs) {
      check_cfg(c >= 0 && c < ds.numClasses, "make_class_split: class id out of range");
      check_cfg(!used[c], "make_class_split: class assigned to two phases");
      used[c] = true;
    }
  };
  mark(pretrainClasses);
  for (const auto& t : taskClasses) mark(t);

  TaskSplit split;
  split.seed = seed;
  split.pretrainClasses = std::move(pretrainClasses);
  split.taskClasses = std::move(taskClasses);
  if (!split.pretrainClasses.empty())
    split.pretrain = stratified_holdout(ds, split.pretrainClasses, valFrac, seed);
  for (const auto& t : split.taskClasses)
    split.tasks.push_back(stratified_holdout(ds, t, valFrac, seed));
  return split;
}

// Pre-train on classes 0..49, then five tasks of ten consecutive classes each
// (50..59, ..., 90..99); optional seed-shuffled class-to-phase assignment.
inline TaskSplit make_cifar50_5x10(const LabeledDataset& ds, uint64_t seed,
                                   bool shuffleClasses = false) {
  check_cfg(ds.numClasses == 100, "make_cifar50_5x10: needs a 100-class dataset");
  std::vector<int> order(100);
  std::iota(order.begin(), order.end(), 0);
  if (shuffleClasses) {
    Rng rng(derive_seed(seed, 0xc1a55));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<int> pre(order.begin(), order.begin() + 50);
  std::vector<std::vector<int>> tasks;
  for (int t = 0; t < 5; ++t)
    tasks.emplace_back(order.begin() + 50 + 10 * t, order.begin() + 60 + 10 * t);
  return make_class_split(ds, std::move(pre), std::move(tasks), 0.1, seed);
}

// Desk-scale dataset: every class is a fixed random color template; samples
// add bounded per-pixel noise. Distinct templates keep classes separable for
// very small models.
struct SyntheticData {
  LabeledDataset train, test;
};

inline Image8 synthetic_template(int size, Rng& rng) {
  Image8 img(size, size, 3);
  for (auto& v : img.v) v = static_cast<uint8_t>(rng() & 0xff);
  return img;
}

inline Image8 add_noise(const Image8& base, int amplitude, Rng& rng) {
  Image8 out = base;
  for (auto& v : out.v) {
    const int noisy = static_cast<int>(v) + rand_int(rng, -amplitude, amplitude);
    v = static_cast<uint8_t>(std::clamp(noisy, 0, 255));
  }
  return out;
}

inline SyntheticData make_synthetic(int numClasses, int trainPerClass, int testPerClass, int size,
                                    uint64_t seed, int noiseAmplitude = 28) {
  check_cfg(numClasses >= 1 && trainPerClass >= 1 && testPerClass >= 0 && size >= 1,
            "make_synthetic: sizes must be positive");
  SyntheticData data;
  data.train.numClasses = data.test.numClasses = numClasses;
  data.train.provenance = data.test.provenance = "synthetic seed " + std::to_string(seed);
  for (int cls = 0; cls < numClasses; ++cls) {
    Rng tmplRng(derive_seed(seed, 0x7e401 + static_cast<uint64_t>(cls)));
    const Image8 tmpl = synthetic_template(size, tmplRng);
    Rng trainRng(derive_seed(seed, 0x7e402 + static_cast<uint64_t>(cls)));
    for (int i = 0; i < trainPerClass; ++i) {
      data.train.images.push_back(add_noise(tmpl, noiseAmplitude, trainRng));
      data.train.labels.push_back(cls);
    }
    Rng testRng(derive_seed(seed, 0x7e403 + static_cast<uint64_t>(cls)));
    for (int i = 0; i < testPerClass; ++i) {
      data.test.images.push_back(add_noise(tmpl, noiseAmplitude, testRng));
      data.test.labels.push_back(cls);
    }
  }
  return data;
}

}  // namespace fbnn
