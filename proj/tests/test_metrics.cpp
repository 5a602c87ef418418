#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "fbnn/metrics.hpp"

using namespace fbnn;

TEST_CASE("accuracy counts filtered matches") {
  std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  std::vector<int> preds = {0, 1, 1, 1, 0, 2};
  CHECK(accuracy(preds, labels) == Catch::Approx(4.0 / 6.0).margin(1e-15));
  CHECK(accuracy(preds, labels, {0}) == Catch::Approx(0.5).margin(1e-15));
  CHECK(accuracy(preds, labels, {1}) == Catch::Approx(1.0).margin(1e-15));
  CHECK(accuracy(preds, labels, {0, 2}) == Catch::Approx(0.5).margin(1e-15));
  CHECK_THROWS_AS(accuracy(preds, labels, {7}), ConfigError);
  CHECK_THROWS_AS(accuracy({}, {}), ConfigError);
}

TEST_CASE("class recalls per hand-checked case") {
  std::vector<int> labels = {0, 0, 0, 1, 1, 2};
  std::vector<int> preds = {0, 0, 1, 1, 0, 0};
  auto r = class_recalls(preds, labels, {0, 1, 2});
  REQUIRE(r.size() == 3);
  CHECK(r[0] == Catch::Approx(2.0 / 3.0).margin(1e-15));
  CHECK(r[1] == Catch::Approx(0.5).margin(1e-15));
  CHECK(r[2] == Catch::Approx(0.0).margin(1e-15));
  // class 5 has no samples: skipped, not reported as zero
  CHECK(class_recalls(preds, labels, {0, 5}).size() == 1);
}

TEST_CASE("dispersion pins and brute-force agreement") {
  CHECK(dispersion_of({1.0, 0.0}) == Catch::Approx(0.5).margin(1e-15));
  CHECK(dispersion_of({0.7, 0.7, 0.7, 0.7}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(dispersion_of({0.25}) == Catch::Approx(0.0).margin(1e-15));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r(3 + trial);
    for (auto& x : r) x = U(rng);
    // independent oracle: direct definition with a separately accumulated mean
    double mean = 0.0;
    for (double x : r) mean += x / static_cast<double>(r.size());
    double var = 0.0;
    for (double x : r) var += (x - mean) * (x - mean) / static_cast<double>(r.size());
    CHECK(dispersion_of(r) == Catch::Approx(std::sqrt(var)).margin(1e-12));
  }
}

TEST_CASE("union accuracy equals sample-weighted mean of parts") {
  std::mt19937_64 rng(11);
  std::vector<int> labels, preds;
  for (int i = 0; i < 5000; ++i) {
    labels.push_back(static_cast<int>(rng() % 10));
    preds.push_back(static_cast<int>(rng() % 10));
  }
  std::vector<int> partA = {0, 1, 2, 3, 4}, partB = {5, 6, 7, 8, 9};
  auto count = [&](const std::vector<int>& filter) {
    int64_t n = 0;
    for (int l : labels)
      for (int c : filter)
        if (l == c) ++n;
    return n;
  };
  const int64_t nA = count(partA), nB = count(partB);
  const double lhs = accuracy(preds, labels) * static_cast<double>(nA + nB);
  const double rhs = accuracy(preds, labels, partA) * static_cast<double>(nA) +
                     accuracy(preds, labels, partB) * static_cast<double>(nB);
  CHECK(lhs == Catch::Approx(rhs).margin(1e-9));
}

TEST_CASE("random predictions land near chance level") {
  std::mt19937_64 rng(3);
  std::vector<int> labels, preds;
  for (int i = 0; i < 40000; ++i) {
    labels.push_back(static_cast<int>(rng() % 4));
    preds.push_back(static_cast<int>(rng() % 4));
  }
  CHECK(accuracy(preds, labels) == Catch::Approx(0.25).margin(0.02));
}

TEST_CASE("evaluate_filtered reports absence instead of zero") {
  std::vector<int> labels = {0, 0, 1};
  std::vector<int> preds = {0, 1, 1};
  CHECK_FALSE(evaluate_filtered(preds, labels, {5}).has_value());
  auto got = evaluate_filtered(preds, labels, {0, 1});
  REQUIRE(got.has_value());
  CHECK(got->accuracy == Catch::Approx(2.0 / 3.0).margin(1e-15));
  CHECK(got->count == 3);
  REQUIRE(got->recalls.size() == 2);
  CHECK(got->dispersion == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("report serializes rows with explicit absent markers") {
  RunReport rep;
  MetricRow a;
  a.task = 1;
  a.subset = "seen";
  a.split = "test";
  a.accuracy = 0.5;
  a.dispersion = 0.125;
  a.epochs = 7;
  a.bufferBits = 4096;
  a.bufferSamples = 3;
  rep.rows.push_back(a);
  MetricRow b;
  b.task = 0;
  b.subset = "old";
  b.split = "test";
  rep.rows.push_back(b);

  const std::string csv = rep.to_csv();
  CHECK(csv ==
        "task,subset,split,accuracy,dispersion,epochs,bufferBits,bufferSamples\n"
        "1,seen,test,0.500000,0.125000,7,4096,3\n"
        "0,old,test,absent,absent,0,0,0\n");
  REQUIRE(rep.find(1, "seen", "test") != nullptr);
  CHECK(rep.find(1, "seen", "test")->bufferBits == 4096);
  CHECK(rep.find(2, "seen", "test") == nullptr);
}
