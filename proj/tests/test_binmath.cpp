#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "fbnn/binmath.hpp"
#include "fbnn/bittensor.hpp"

namespace {

using fbnn::BitTensor;
using fbnn::Conv2dSpec;

std::vector<int> random_pm1(std::mt19937_64& rng, int64_t n) {
  std::vector<int> v(n);
  for (auto& x : v) x = (rng() & 1) ? 1 : -1;
  return v;
}

BitTensor pack_pm1(fbnn::Shape shape, const std::vector<int>& v) {
  return BitTensor::pack<int>(std::move(shape), std::span<const int>(v));
}

// Reference convolution over plain ±1 integer arrays, written independently of
// the packed kernel: explicit 6-deep loop, out-of-bounds taps count as -1.
std::vector<long> conv_oracle(const std::vector<int>& x, int h, int w, int cin,
                              const std::vector<int>& wt, int co, int kh, int kw, int stride,
                              int pad, int groups) {
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (w + 2 * pad - kw) / stride + 1;
  const int cpg = cin / groups;
  const int copg = co / groups;
  std::vector<long> out(static_cast<size_t>(ho) * wo * co, 0);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox)
      for (int c = 0; c < co; ++c) {
        const int g = c / copg;
        long acc = 0;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx)
            for (int ci = 0; ci < cpg; ++ci) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              int xv = -1;
              if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                xv = x[(static_cast<size_t>(iy) * w + ix) * cin + g * cpg + ci];
              const int wv = wt[((static_cast<size_t>(c) * kh + ky) * kw + kx) * cpg + ci];
              acc += static_cast<long>(xv) * wv;
            }
        out[(static_cast<size_t>(oy) * wo + ox) * co + c] = acc;
      }
  return out;
}

std::vector<long> dense_oracle(const std::vector<int>& x, const std::vector<int>& wt, int out,
                               int groups) {
  const int n = static_cast<int>(x.size());
  const int npg = n / groups;
  const int opg = out / groups;
  std::vector<long> y(out, 0);
  for (int o = 0; o < out; ++o) {
    const int g = o / opg;
    long acc = 0;
    for (int i = 0; i < npg; ++i)
      acc += static_cast<long>(x[g * npg + i]) * wt[static_cast<size_t>(o) * npg + i];
    y[o] = acc;
  }
  return y;
}

}  // namespace

TEST_CASE("bin_dot matches integer dot product exhaustively for n <= 8") {
  for (int n = 1; n <= 8; ++n) {
    for (uint32_t am = 0; am < (1u << n); ++am)
      for (uint32_t bm = 0; bm < (1u << n); ++bm) {
        std::vector<int> a(n), b(n);
        long ref = 0;
        for (int i = 0; i < n; ++i) {
          a[i] = (am >> i) & 1 ? 1 : -1;
          b[i] = (bm >> i) & 1 ? 1 : -1;
          ref += static_cast<long>(a[i]) * b[i];
        }
        const auto ta = pack_pm1({n}, a);
        const auto tb = pack_pm1({n}, b);
        REQUIRE(fbnn::bin_dot(ta, tb) == ref);
      }
  }
}

TEST_CASE("bin_dot on random long vectors: value, range, and parity") {
  std::mt19937_64 rng(0xb1dd01);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 1 + static_cast<int64_t>(rng() % 700);
    const auto a = random_pm1(rng, n);
    const auto b = random_pm1(rng, n);
    long ref = 0;
    for (int64_t i = 0; i < n; ++i) ref += static_cast<long>(a[i]) * b[i];
    const long got = fbnn::bin_dot(pack_pm1({n}, a), pack_pm1({n}, b));
    REQUIRE(got == ref);
    REQUIRE(got >= -n);
    REQUIRE(got <= n);
    REQUIRE(((got - n) % 2) == 0);  // dot and n always share parity
  }
}

TEST_CASE("bin_dot_range handles unaligned offsets") {
  std::mt19937_64 rng(0x0ff5e7);
  const int64_t n = 513;
  const auto a = random_pm1(rng, n);
  const auto b = random_pm1(rng, n);
  const auto ta = pack_pm1({n}, a);
  const auto tb = pack_pm1({n}, b);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t offA = rng() % n;
    const int64_t offB = rng() % n;
    const int64_t len = rng() % (n - std::max(offA, offB) + 1);
    long ref = 0;
    for (int64_t i = 0; i < len; ++i) ref += static_cast<long>(a[offA + i]) * b[offB + i];
    REQUIRE(fbnn::bin_dot_range(ta.words(), offA, tb.words(), offB, len) == ref);
  }
}

TEST_CASE("pad_hwc keeps interior and fills border with -1") {
  std::mt19937_64 rng(0x9add);
  const int h = 5, w = 4, c = 3, pad = 2;
  const auto x = random_pm1(rng, static_cast<int64_t>(h) * w * c);
  const auto xp = fbnn::pad_hwc(pack_pm1({h, w, c}, x), pad);
  REQUIRE(xp.shape() == fbnn::Shape{h + 2 * pad, w + 2 * pad, c});
  for (int y = 0; y < h + 2 * pad; ++y)
    for (int xw = 0; xw < w + 2 * pad; ++xw)
      for (int ch = 0; ch < c; ++ch) {
        const int got = xp.get(((static_cast<int64_t>(y) * (w + 2 * pad)) + xw) * c + ch);
        if (y >= pad && y < h + pad && xw >= pad && xw < w + pad)
          REQUIRE(got == x[((static_cast<int64_t>(y - pad) * w) + (xw - pad)) * c + ch]);
        else
          REQUIRE(got == -1);
      }
}

TEST_CASE("bin_conv2d matches the reference convolution") {
  std::mt19937_64 rng(0xc0de);
  struct Cfg {
    int h, w, cin, co, kh, kw, stride, pad, groups;
  };
  const Cfg cfgs[] = {
      {8, 8, 64, 32, 3, 3, 1, 1, 1},   {9, 7, 128, 64, 3, 3, 1, 1, 1},
      {8, 8, 16, 16, 3, 3, 2, 1, 1},   {8, 8, 64, 64, 1, 1, 1, 0, 2},
      {8, 8, 64, 32, 3, 3, 2, 1, 8},   {6, 6, 12, 8, 5, 3, 1, 2, 4},
      {4, 4, 130, 6, 3, 3, 1, 1, 2},   {5, 5, 7, 3, 3, 3, 1, 0, 1},
  };
  for (const auto& cfg : cfgs) {
    CAPTURE(cfg.h, cfg.w, cfg.cin, cfg.co, cfg.kh, cfg.kw, cfg.stride, cfg.pad, cfg.groups);
    const auto x = random_pm1(rng, static_cast<int64_t>(cfg.h) * cfg.w * cfg.cin);
    const auto wt = random_pm1(
        rng, static_cast<int64_t>(cfg.co) * cfg.kh * cfg.kw * (cfg.cin / cfg.groups));
    const auto ref = conv_oracle(x, cfg.h, cfg.w, cfg.cin, wt, cfg.co, cfg.kh, cfg.kw, cfg.stride,
                                 cfg.pad, cfg.groups);
    Conv2dSpec spec{cfg.kh, cfg.kw, cfg.stride, cfg.pad, cfg.groups};
    const auto got =
        fbnn::bin_conv2d(pack_pm1({cfg.h, cfg.w, cfg.cin}, x),
                         pack_pm1({cfg.co, cfg.kh, cfg.kw, cfg.cin / cfg.groups}, wt), spec);
    REQUIRE(got.size() == static_cast<int64_t>(ref.size()));
    for (size_t i = 0; i < ref.size(); ++i) REQUIRE(got.v[i] == ref[i]);
  }
}

TEST_CASE("bin_dense matches the reference and isolates groups") {
  std::mt19937_64 rng(0xd35e);
  for (const int groups : {1, 2, 4}) {
    const int n = 256, out = 64;
    auto x = random_pm1(rng, n);
    const auto wt = random_pm1(rng, static_cast<int64_t>(out) * (n / groups));
    const auto ref = dense_oracle(x, wt, out, groups);
    const auto w = pack_pm1({out, n / groups}, wt);
    const auto got = fbnn::bin_dense(pack_pm1({n}, x), w, groups);
    for (int o = 0; o < out; ++o) REQUIRE(got.v[o] == ref[o]);

    if (groups > 1) {
      // flipping an input inside group 0 must not disturb outputs of other groups
      x[3] = -x[3];
      const auto got2 = fbnn::bin_dense(pack_pm1({n}, x), w, groups);
      for (int o = out / groups; o < out; ++o) REQUIRE(got2.v[o] == got.v[o]);
      bool changed = false;
      for (int o = 0; o < out / groups; ++o) changed |= (got2.v[o] != got.v[o]);
      REQUIRE(changed);
    }
  }
}

TEST_CASE("maxpool2x2_bits equals elementwise max over each window") {
  std::mt19937_64 rng(0x900f);
  const int h = 6, w = 8, c = 5;
  const auto x = random_pm1(rng, static_cast<int64_t>(h) * w * c);
  const auto got = fbnn::maxpool2x2_bits(pack_pm1({h, w, c}, x));
  REQUIRE(got.shape() == fbnn::Shape{h / 2, w / 2, c});
  for (int y = 0; y < h / 2; ++y)
    for (int xw = 0; xw < w / 2; ++xw)
      for (int ch = 0; ch < c; ++ch) {
        int m = -1;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            m = std::max(m, x[((static_cast<int64_t>(2 * y + dy) * w) + 2 * xw + dx) * c + ch]);
        REQUIRE(got.get((static_cast<int64_t>(y) * (w / 2) + xw) * c + ch) == m);
      }
}

TEST_CASE("channel_shuffle_bits interleaves groups and inverts with the co-shuffle") {
  std::mt19937_64 rng(0x51ff);
  const int h = 3, w = 2, c = 12, groups = 3;
  const auto x = random_pm1(rng, static_cast<int64_t>(h) * w * c);
  const auto t = pack_pm1({h, w, c}, x);
  const auto s = fbnn::channel_shuffle_bits(t, groups);
  const int cpg = c / groups;
  for (int p = 0; p < h * w; ++p)
    for (int g = 0; g < groups; ++g)
      for (int i = 0; i < cpg; ++i)
        REQUIRE(s.get(static_cast<int64_t>(p) * c + i * groups + g) ==
                x[static_cast<int64_t>(p) * c + g * cpg + i]);
  REQUIRE(fbnn::channel_shuffle_bits(s, cpg) == t);
}

TEST_CASE("BitTensor pack/unpack round-trips and padding bits stay clear") {
  std::mt19937_64 rng(0x9acc);
  const int64_t n = 131;  // deliberately not a multiple of 64
  const auto v = random_pm1(rng, n);
  auto t = pack_pm1({n}, v);
  const auto back = t.unpack();
  for (int64_t i = 0; i < n; ++i) REQUIRE(back[i] == v[i]);
  t.fill(+1);
  REQUIRE(t.popcount() == n);  // fill must not touch bits past the logical end
  auto u = t;
  u.fill(-1);
  REQUIRE(u.popcount() == 0);
}
