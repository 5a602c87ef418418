#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>
#include <set>

#include "fbnn/data.hpp"

using namespace fbnn;

namespace {

// Writes a CIFAR-style binary file; labelBytes==2 stores {coarse, fine}.
void write_cifar_file(const std::string& path, int labelBytes, const std::vector<int>& fineLabels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  for (size_t r = 0; r < fineLabels.size(); ++r) {
    if (labelBytes == 2) f.put(static_cast<char>(7));  // arbitrary coarse label
    f.put(static_cast<char>(fineLabels[r]));
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p)
        f.put(static_cast<char>((r * 131 + c * 17 + p) & 0xff));
  }
}

LabeledDataset fake_hundred_class(int perClass) {
  LabeledDataset ds;
  ds.numClasses = 100;
  for (int cls = 0; cls < 100; ++cls)
    for (int i = 0; i < perClass; ++i) {
      Image8 img(2, 2, 3);
      for (auto& v : img.v) v = static_cast<uint8_t>(cls);
      ds.images.push_back(std::move(img));
      ds.labels.push_back(cls);
    }
  return ds;
}

}  // namespace

TEST_CASE("two-label-byte records parse with fine labels and planar pixels") {
  const std::string path = "tmp_c100.bin";
  write_cifar_file(path, 2, {4, 99, 0});
  auto ds = load_cifar_binary(path);
  std::remove(path.c_str());

  REQUIRE(ds.size() == 3);
  CHECK(ds.numClasses == 100);
  CHECK(ds.labels == std::vector<int>{4, 99, 0});
  // record r, channel c, planar offset p = y*32+x maps to (r*131 + c*17 + p) & 0xff
  CHECK(ds.images[0].at(0, 0, 0) == 0);
  CHECK(ds.images[0].at(0, 5, 1) == ((17 + 5) & 0xff));
  CHECK(ds.images[1].at(3, 2, 2) == ((131 + 34 + 3 * 32 + 2) & 0xff));
  CHECK(ds.images[2].h == 32);
  CHECK(ds.images[2].c == 3);
}

TEST_CASE("single-label-byte records parse as a ten-class set") {
  const std::string path = "tmp_c10.bin";
  write_cifar_file(path, 1, {3, 1, 4, 1, 5});
  auto ds = load_cifar_binary(path);
  std::remove(path.c_str());
  REQUIRE(ds.size() == 5);
  CHECK(ds.numClasses == 10);
  CHECK(ds.labels == std::vector<int>{3, 1, 4, 1, 5});
}

TEST_CASE("malformed files are rejected with io errors") {
  const std::string path = "tmp_bad.bin";
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    for (int i = 0; i < 3074 * 2 + 17; ++i) f.put('\0');
  }
  CHECK_THROWS_AS(load_cifar_binary(path), IoError);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
  }
  CHECK_THROWS_AS(load_cifar_binary(path), IoError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_cifar_binary("no_such_file.bin"), IoError);
}

TEST_CASE("stratified holdout splits every class at the requested rate") {
  auto data = make_synthetic(4, 40, 0, 6, 123);
  auto split = make_class_split(data.train, {0, 1}, {{2}, {3}}, 0.1, 9);

  auto perClassCounts = [&](const std::vector<int>& idx) {
    std::vector<int> n(4, 0);
    for (int i : idx) ++n[data.train.labels[i]];
    return n;
  };
  auto preTrain = perClassCounts(split.pretrain.train);
  auto preVal = perClassCounts(split.pretrain.val);
  CHECK(preTrain[0] == 36);
  CHECK(preTrain[1] == 36);
  CHECK(preVal[0] == 4);
  CHECK(preVal[1] == 4);
  CHECK(preTrain[2] == 0);
  CHECK(preVal[3] == 0);
  REQUIRE(split.tasks.size() == 2);
  CHECK(perClassCounts(split.tasks[0].train)[2] == 36);
  CHECK(perClassCounts(split.tasks[0].val)[2] == 4);

  // train/val are disjoint and together cover the phase's classes exactly
  std::set<int> seen(split.pretrain.train.begin(), split.pretrain.train.end());
  for (int i : split.pretrain.val) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 80);

  // same seed reproduces the split; class overlap across phases is rejected
  auto again = make_class_split(data.train, {0, 1}, {{2}, {3}}, 0.1, 9);
  CHECK(again.pretrain.train == split.pretrain.train);
  CHECK(again.tasks[1].val == split.tasks[1].val);
  CHECK_THROWS_AS(make_class_split(data.train, {0, 1}, {{1}, {2}}, 0.1, 9), ConfigError);
}

TEST_CASE("fifty-plus-five-by-ten split pins phase membership") {
  auto ds = fake_hundred_class(10);
  auto split = make_cifar50_5x10(ds, 42);
  REQUIRE(split.pretrainClasses.size() == 50);
  CHECK(split.pretrainClasses.front() == 0);
  CHECK(split.pretrainClasses.back() == 49);
  REQUIRE(split.taskClasses.size() == 5);
  CHECK(split.taskClasses[0] == std::vector<int>{50, 51, 52, 53, 54, 55, 56, 57, 58, 59});
  CHECK(split.taskClasses[2] == std::vector<int>{70, 71, 72, 73, 74, 75, 76, 77, 78, 79});
  CHECK(split.taskClasses[4].back() == 99);
  // 10% of ten samples per class held out
  CHECK(split.tasks[2].train.size() == 90);
  CHECK(split.tasks[2].val.size() == 10);

  auto shuffled = make_cifar50_5x10(ds, 42, true);
  std::set<int> all(shuffled.pretrainClasses.begin(), shuffled.pretrainClasses.end());
  for (const auto& t : shuffled.taskClasses) all.insert(t.begin(), t.end());
  CHECK(all.size() == 100);
  CHECK(shuffled.pretrainClasses != split.pretrainClasses);
  auto shuffledAgain = make_cifar50_5x10(ds, 42, true);
  CHECK(shuffledAgain.pretrainClasses == shuffled.pretrainClasses);
}

TEST_CASE("synthetic data is deterministic with distinct class templates") {
  auto a = make_synthetic(4, 6, 3, 8, 77);
  auto b = make_synthetic(4, 6, 3, 8, 77);
  REQUIRE(a.train.size() == 24);
  REQUIRE(a.test.size() == 12);
  CHECK(a.train.labels == b.train.labels);
  for (int64_t i = 0; i < a.train.size(); ++i) CHECK(a.train.images[i].v == b.train.images[i].v);
  for (int64_t i = 0; i < a.test.size(); ++i) CHECK(a.test.images[i].v == b.test.images[i].v);

  auto c = make_synthetic(4, 6, 3, 8, 78);
  CHECK(c.train.images[0].v != a.train.images[0].v);

  // zero noise exposes the raw templates: all samples of a class identical,
  // different classes pairwise distinct
  auto clean = make_synthetic(4, 2, 1, 8, 77, 0);
  for (int cls = 0; cls < 4; ++cls) {
    CHECK(clean.train.images[cls * 2].v == clean.train.images[cls * 2 + 1].v);
    CHECK(clean.train.images[cls * 2].v == clean.test.images[cls].v);
    for (int other = cls + 1; other < 4; ++other)
      CHECK(clean.train.images[cls * 2].v != clean.train.images[other * 2].v);
  }
  // noisy samples stay near their template
  int64_t maxDiff = 0;
  for (size_t p = 0; p < a.train.images[0].v.size(); ++p)
    maxDiff = std::max<int64_t>(
        maxDiff, std::abs(static_cast<int>(a.train.images[0].v[p]) -
                          static_cast<int>(clean.train.images[0].v[p])));
  CHECK(maxDiff <= 28);
}
