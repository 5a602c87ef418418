#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fbnn/arch.hpp"
#include "fbnn/loss.hpp"
#include "scaled_oracle.hpp"

using namespace fbnn;

namespace {

BitTensor random_bits(std::mt19937_64& rng, Shape shape) {
  BitTensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.set(i, (rng() & 1) ? +1 : -1);
  return t;
}

BnnConfig tiny_cfg(uint64_t seed) {
  BnnConfig cfg;
  cfg.h = 8;
  cfg.w = 8;
  cfg.inChannels = 8;
  cfg.nClasses = 5;
  cfg.width = 4;
  cfg.latentDim = 16;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("canonical builder hits the pinned parameter budget") {
  BnnConfig cfg;
  cfg.h = 32;
  cfg.w = 32;
  cfg.inChannels = 64;
  cfg.nClasses = 100;
  Model m = build_3mb_bnn(cfg);
  // layer-by-layer products summed by hand:
  //   convs 73728+147456+147456+294912+294912+589824 = 1548288
  //   pooling 4*4*512 = 8192, latent dense 1024*512 = 524288
  //   two skip blocks 512*1024 each, head 100*1024
  const int64_t expected = 1548288 + 8192 + 524288 + 2 * 524288 + 102400;
  REQUIRE(expected == 3231744);
  REQUIRE(m.weight_bits() == expected);
  REQUIRE(m.weight_bits() >= 2800000);
  REQUIRE(m.weight_bits() <= 3400000);
  REQUIRE(m.latentDim == 1024);

  // final feature map before pooling bottleneck: 4x4x512 for 32x32 input
  auto* lg = dynamic_cast<LgapBlock*>(m.fe.back().get());
  REQUIRE(lg != nullptr);
  REQUIRE(lg->h == 4);
  REQUIRE(lg->w == 4);
  REQUIRE(lg->ch == 512);

  // latent vs 8-bit RGB input: 32*32*3*8 / 1024 = 24x compression
  REQUIRE((32 * 32 * 3 * 8) / m.latentDim == 24);
}

TEST_CASE("residual builder hits its pinned parameter budget with 17 blocks") {
  ResBnnConfig cfg;
  Model m = build_res_bnn(cfg);
  int resBlocks = 0;
  for (auto& b : m.fe)
    if (dynamic_cast<ResBlock*>(b.get())) ++resBlocks;
  REQUIRE(resBlocks == 17);
  REQUIRE(m.weight_bits() == 2921472);
  REQUIRE(m.weight_bits() >= 2800000);
  REQUIRE(m.weight_bits() <= 3400000);
}

TEST_CASE("packed forward equals the scaled float oracle, with and without scales") {
  std::mt19937_64 rng(0xa2c401);
  for (int trial = 0; trial < 8; ++trial) {
    Model m = build_3mb_bnn(tiny_cfg(100 + trial));
    const BitTensor in = random_bits(rng, m.inputShape);
    const IntTensor z = m.scores(in);
    const auto scaled = oracle::model_forward(m, in, true);
    const auto unscaled = oracle::model_forward(m, in, false);
    REQUIRE(z.v.size() == scaled.size());
    for (size_t i = 0; i < scaled.size(); ++i) {
      REQUIRE(static_cast<double>(z.v[i]) == Catch::Approx(unscaled[i]).margin(1e-9));
      // scales shift magnitudes only; the sign structure and argmax agree
      REQUIRE(scaled[i] == Catch::Approx(m.head.alphaSpec.value() * z.v[i]).margin(1e-12));
    }
    REQUIRE(oracle::argmax(scaled) == oracle::argmax(unscaled));
    REQUIRE(oracle::argmax(scaled) == m.predict(in));
  }
}

TEST_CASE("identical seeds build bit-identical models; different seeds differ") {
  Model a = build_3mb_bnn(tiny_cfg(7));
  Model b = build_3mb_bnn(tiny_cfg(7));
  Model c = build_3mb_bnn(tiny_cfg(8));
  std::vector<QatParam*> pa, pb, pc;
  a.collect_params(pa);
  b.collect_params(pb);
  c.collect_params(pc);
  REQUIRE(pa.size() == pb.size());
  bool anyDiff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->proxy == pb[i]->proxy);
    anyDiff |= (pa[i]->proxy != pc[i]->proxy);
  }
  REQUIRE(anyDiff);
}

TEST_CASE("pooling bottleneck: all-ones features give an all-ones plain path") {
  std::mt19937_64 rng(0x19a9);
  LgapBlock lg(2, 2, 8, 16, 2, rng);
  BitTensor ones(Shape{2, 2, 8});
  ones.fill(+1);
  CachePtr cache;
  lg.forward(ones, &cache);
  const auto& c = static_cast<const LgapBlock::Cache&>(*cache);
  for (int i = 0; i < 8; ++i) {
    REQUIRE(c.sums.v[i] == 4);          // spatial sum of +1s
    REQUIRE(c.mid.get(i) == +1);
  }
}

TEST_CASE("pooling bottleneck: all-plus depthwise weights make both paths equal") {
  std::mt19937_64 rng(0x19aa);
  LgapBlock lg(3, 3, 4, 8, 2, rng);
  for (auto& p : lg.dw.proxy) p = 1.0;
  lg.dw.refresh_bin();
  const BitTensor in = random_bits(rng, {3, 3, 4});
  CachePtr cache;
  lg.forward(in, &cache);
  const auto& c = static_cast<const LgapBlock::Cache&>(*cache);
  for (int i = 0; i < 4; ++i) REQUIRE(c.sums.v[i] == c.sums.v[4 + i]);
}

TEST_CASE("skip classifier: opposite weights on a copy pair cancel the input") {
  std::mt19937_64 rng(0xd5c1);
  const int n = 16;
  DenseSkipBlock ds(n, true, rng);
  // +1 on the first copy, -1 on the second: every accumulation is exactly 0
  for (int o = 0; o < n / 2; ++o)
    for (int i = 0; i < n; ++i) ds.w.proxy[static_cast<int64_t>(o) * n + i] = i < n / 2 ? 1.0 : -1.0;
  ds.w.refresh_bin();
  const BitTensor x1 = random_bits(rng, {n});
  const BitTensor x2 = random_bits(rng, {n});
  CachePtr c1, c2;
  const BitTensor o1 = ds.forward(x1, &c1);
  const BitTensor o2 = ds.forward(x2, &c2);
  for (int o = 0; o < n / 2; ++o) {
    REQUIRE(static_cast<const DenseSkipBlock::Cache&>(*c1).z.v[o] == 0);
    REQUIRE(o1.get(n / 2 + o) == +1);  // sign(0) = +1 regardless of input
    REQUIRE(o2.get(n / 2 + o) == +1);
  }
}

TEST_CASE("skip classifier: the skip half passes through unchanged") {
  std::mt19937_64 rng(0xd5c2);
  const int n = 16;
  const BitTensor x = random_bits(rng, {n});
  DenseSkipBlock first(n, true, rng);
  const BitTensor oFirst = first.forward(x, nullptr);
  for (int i = 0; i < n / 2; ++i) REQUIRE(oFirst.get(i) == x.get(i));
  DenseSkipBlock second(n, false, rng);
  const BitTensor oSecond = second.forward(x, nullptr);
  for (int i = 0; i < n / 2; ++i) REQUIRE(oSecond.get(i) == x.get(n / 2 + i));
}

TEST_CASE("residual split block: the kept half passes through the shuffle intact") {
  std::mt19937_64 rng(0x2e5801);
  const int c = 16, h = 4, w = 4;
  ResBlock rb(false, c, 2, 8, rng);
  const BitTensor in = random_bits(rng, {h, w, c});
  const BitTensor out = rb.forward(in, nullptr);
  // un-shuffle (2 groups): joined[g*cpg + i] = out[i*2 + g]; kept half is group-0 prefix
  const int cpg = c / 2;
  for (int p = 0; p < h * w; ++p)
    for (int i = 0; i < cpg; ++i)
      REQUIRE(out.get(static_cast<int64_t>(p) * c + i * 2 + 0) ==
              in.get(static_cast<int64_t>(p) * c + i));
  // shuffling with the co-group count inverts the permutation
  REQUIRE(channel_shuffle_bits(channel_shuffle_bits(in, 2), cpg) == in);
}

TEST_CASE("residual down block halves the spatial size and doubles channels") {
  std::mt19937_64 rng(0x2e5802);
  const int c = 8, h = 6, w = 6;
  ResBlock rb(true, c, 2, 8, rng);
  const BitTensor out = rb.forward(random_bits(rng, {h, w, c}), nullptr);
  REQUIRE(out.shape() == Shape{h / 2, w / 2, 2 * c});
}

TEST_CASE("head growth preserves old rows, scores, and follows the alpha ratio") {
  std::mt19937_64 rng(0x94061);
  Model m = build_3mb_bnn(tiny_cfg(3));
  const BitTensor latent = random_bits(rng, {m.latentDim});
  ForwardCache fc;
  const IntTensor before = m.scores_from_latent(latent, nullptr);
  const auto oldProxy = m.head.w.proxy;
  const double alphaBefore = m.head.alphaSpec.value();

  grow_head(m, 8, 99);
  REQUIRE(m.head.nClasses == 8);
  for (size_t i = 0; i < oldProxy.size(); ++i) REQUIRE(m.head.w.proxy[i] == oldProxy[i]);

  const IntTensor after = m.scores_from_latent(latent, nullptr);
  for (int o = 0; o < 5; ++o) REQUIRE(after.v[o] == before.v[o]);  // old-class scores unchanged
  const double alphaAfter = m.head.alphaSpec.value();
  REQUIRE(alphaBefore / alphaAfter == Catch::Approx(std::sqrt(8.0 / 5.0)).epsilon(1e-12));
  REQUIRE_THROWS_AS(m.head.grow(4, rng), ConfigError);
}

TEST_CASE("frozen FE: latents repeat exactly and receive no gradient") {
  std::mt19937_64 rng(0xf40e);
  Model m = build_3mb_bnn(tiny_cfg(11));
  m.set_fe_frozen(true);
  const BitTensor in = random_bits(rng, m.inputShape);
  const BitTensor l1 = m.forward_latent(in, nullptr);
  const BitTensor l2 = m.forward_latent(in, nullptr);
  REQUIRE(l1 == l2);

  ForwardCache fc;
  const IntTensor z = m.scores(in, &fc);
  m.zero_grads();
  std::vector<double> gLogits(m.head.nClasses, 0.5);
  m.backward(gLogits, nullptr, fc);
  std::vector<QatParam*> feParams;
  for (auto& b : m.fe) b->collect_params(feParams);
  for (auto* p : feParams)
    for (double g : p->grad) REQUIRE(g == 0.0);
  // classifier params did receive gradient
  double clfAbs = 0.0;
  std::vector<QatParam*> clfParams;
  for (auto& b : m.clf) b->collect_params(clfParams);
  clfParams.push_back(&m.head.w);
  for (auto* p : clfParams)
    for (double g : p->grad) clfAbs += std::abs(g);
  REQUIRE(clfAbs > 0.0);
}

TEST_CASE("head gradients equal finite differences of the smooth proxy surrogate") {
  // With proxies at exactly +-1 the binary forward coincides with the real
  // product, so central differences on the proxies are a valid oracle.
  std::mt19937_64 rng(0x5a9e);
  OutputHead head;
  head.init(16, 3, rng);
  for (int64_t i = 0; i < head.w.size(); ++i) head.w.proxy[i] = head.w.proxy[i] >= 0 ? 1.0 : -1.0;
  head.w.refresh_bin();
  const BitTensor latent = random_bits(rng, {16});
  const std::vector<double> wts{1.0, 1.0, 1.0};
  const std::vector<int> label{1};

  auto lossAt = [&](const std::vector<double>& proxy) {
    Tensor logits(Shape{1, 3});
    const double a = head.alphaSpec.value();
    for (int o = 0; o < 3; ++o) {
      double acc = 0.0;
      for (int i = 0; i < 16; ++i) acc += proxy[o * 16 + i] * latent.get(i);
      logits[o] = a * acc;
    }
    return weighted_cce(logits, label, wts).loss;
  };

  Tensor logits(Shape{1, 3});
  const auto lv = head.logits(head.accumulate(latent));
  std::copy(lv.begin(), lv.end(), logits.v.begin());
  const auto lg = weighted_cce(logits, label, wts);
  head.w.zero_grad();
  head.backward(lg.grad.v, latent);

  const double h = 1e-6;
  auto proxy = head.w.proxy;
  for (int64_t i = 0; i < head.w.size(); ++i) {
    const double keep = proxy[i];
    proxy[i] = keep + h;
    const double up = lossAt(proxy);
    proxy[i] = keep - h;
    const double dn = lossAt(proxy);
    proxy[i] = keep;
    const double fd = (up - dn) / (2 * h);
    REQUIRE(head.w.grad[i] == Catch::Approx(fd).margin(1e-7));
  }
}
