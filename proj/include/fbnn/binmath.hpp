#pragma once

#include <algorithm>
#include <cstdint>

#include "fbnn/bittensor.hpp"
#include "fbnn/core.hpp"

namespace fbnn {

// dot(a, b) over {-1,+1} vectors: equal bits contribute +1, mismatches -1,
// so dot = n - 2 * popcount(a xor b).
inline int64_t bin_dot(const BitTensor& a, const BitTensor& b) {
  check_dim(a.size() == b.size(), "bin_dot: length mismatch");
  int64_t mism = 0;
  auto wa = a.words();
  auto wb = b.words();
  for (size_t i = 0; i < wa.size(); ++i) mism += std::popcount(wa[i] ^ wb[i]);
  return a.size() - 2 * mism;
}

inline int64_t bin_dot_range(std::span<const uint64_t> a, int64_t offA,
                             std::span<const uint64_t> b, int64_t offB, int64_t len) {
  return len - 2 * xor_popcount_range(a, offA, b, offB, len);
}

struct Conv2dSpec {
  int kh = 3;
  int kw = 3;
  int stride = 1;
  int pad = 1;
  int groups = 1;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x: {H, W, C} channel-fastest. Returns {H + 2p, W + 2p, C} with the border
// filled with -1 (bit 0).
inline BitTensor pad_hwc(const BitTensor& x, int pad) {
  if (pad == 0) return x;
  const auto& s = x.shape();
  check_dim(s.size() == 3, "pad_hwc: expected rank-3 input");
  const int64_t h = s[0], w = s[1], c = s[2];
  BitTensor out(Shape{h + 2 * pad, w + 2 * pad, c});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xw = 0; xw < w; ++xw) {
      const int64_t src = (y * w + xw) * c;
      const int64_t dst = ((y + pad) * (w + 2 * pad) + (xw + pad)) * c;
      for (int64_t ch = 0; ch < c; ++ch) out.set_bit(dst + ch, x.get_bit(src + ch));
    }
  return out;
}

// Grouped binary convolution. x: {H, W, Cin} channel-fastest; w: {Co, Kh, Kw,
// Cin/groups}. Output channel co in group co / (Co/groups) reads input
// channels [g*Cin/groups, (g+1)*Cin/groups). Returns integer pre-activations
// {Ho, Wo, Co}.
inline IntTensor bin_conv2d(const BitTensor& x, const BitTensor& w, const Conv2dSpec& spec) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  check_dim(xs.size() == 3 && ws.size() == 4, "bin_conv2d: bad ranks");
  const int64_t cin = xs[2], co = ws[0];
  check_dim(ws[1] == spec.kh && ws[2] == spec.kw, "bin_conv2d: kernel shape mismatch");
  check_dim(cin % spec.groups == 0 && co % spec.groups == 0, "bin_conv2d: groups must divide channels");
  const int64_t cpg = cin / spec.groups;
  check_dim(ws[3] == cpg, "bin_conv2d: weight fan-in != Cin/groups");

  const BitTensor xp = pad_hwc(x, spec.pad);
  const int64_t hp = xp.shape()[0], wp = xp.shape()[1];
  const int ho = conv_out_dim(static_cast<int>(xs[0]), spec.kh, spec.stride, spec.pad);
  const int wo = conv_out_dim(static_cast<int>(xs[1]), spec.kw, spec.stride, spec.pad);
  check_dim(ho > 0 && wo > 0, "bin_conv2d: empty output");

  IntTensor out(Shape{ho, wo, co});
  const int64_t kbits = static_cast<int64_t>(spec.kh) * spec.kw * cpg;
  const int64_t rowbits = (spec.groups == 1) ? static_cast<int64_t>(spec.kw) * cin : cpg;
  auto xw = xp.words();
  auto ww = w.words();

  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      const int64_t iy = static_cast<int64_t>(oy) * spec.stride;
      const int64_t ix = static_cast<int64_t>(ox) * spec.stride;
      const int64_t obase = (static_cast<int64_t>(oy) * wo + ox) * co;
      for (int64_t c = 0; c < co; ++c) {
        const int64_t g = c / (co / spec.groups);
        const int64_t wbase = c * kbits;
        int64_t mism = 0;
        if (spec.groups == 1) {
          for (int ky = 0; ky < spec.kh; ++ky) {
            const int64_t xoff = ((iy + ky) * wp + ix) * cin;
            mism += xor_popcount_range(xw, xoff, ww, wbase + static_cast<int64_t>(ky) * rowbits, rowbits);
          }
        } else {
          for (int ky = 0; ky < spec.kh; ++ky)
            for (int kx = 0; kx < spec.kw; ++kx) {
              const int64_t xoff = ((iy + ky) * wp + (ix + kx)) * cin + g * cpg;
              const int64_t woff = wbase + (static_cast<int64_t>(ky) * spec.kw + kx) * cpg;
              mism += xor_popcount_range(xw, xoff, ww, woff, cpg);
            }
        }
        out.v[obase + c] = static_cast<int32_t>(kbits - 2 * mism);
      }
    }
  return out;
}

// Grouped binary dense layer. x: {n}; w: {out, n/groups}. Output unit o in
// group o / (out/groups) reads input slice [g*n/groups, (g+1)*n/groups).
inline IntTensor bin_dense(const BitTensor& x, const BitTensor& w, int groups = 1) {
  const auto& ws = w.shape();
  check_dim(ws.size() == 2, "bin_dense: weight must be rank 2");
  const int64_t n = x.size(), out = ws[0];
  check_dim(n % groups == 0 && out % groups == 0, "bin_dense: groups must divide widths");
  const int64_t npg = n / groups;
  check_dim(ws[1] == npg, "bin_dense: weight fan-in != n/groups");

  IntTensor y(Shape{out});
  auto xw = x.words();
  auto ww = w.words();
  for (int64_t o = 0; o < out; ++o) {
    const int64_t g = o / (out / groups);
    y.v[o] = static_cast<int32_t>(bin_dot_range(xw, g * npg, ww, o * npg, npg));
  }
  return y;
}

// 2x2 max pool on a {H, W, C} binary map: max over {-1,+1} is OR of bits.
inline BitTensor maxpool2x2_bits(const BitTensor& x) {
  const auto& s = x.shape();
  check_dim(s.size() == 3, "maxpool2x2_bits: expected rank-3 input");
  check_dim(s[0] % 2 == 0 && s[1] % 2 == 0, "maxpool2x2_bits: odd spatial dims");
  const int64_t h = s[0], w = s[1], c = s[2];
  BitTensor out(Shape{h / 2, w / 2, c});
  for (int64_t y = 0; y < h / 2; ++y)
    for (int64_t xw = 0; xw < w / 2; ++xw)
      for (int64_t ch = 0; ch < c; ++ch) {
        const bool b = x.get_bit(((2 * y) * w + 2 * xw) * c + ch) ||
                       x.get_bit(((2 * y) * w + 2 * xw + 1) * c + ch) ||
                       x.get_bit(((2 * y + 1) * w + 2 * xw) * c + ch) ||
                       x.get_bit(((2 * y + 1) * w + 2 * xw + 1) * c + ch);
        out.set_bit((y * (w / 2) + xw) * c + ch, b);
      }
  return out;
}

// Rearranges channels so that groupwise outputs interleave: channel g*cpg + i
// moves to i*groups + g (the usual shuffle that follows grouped convolutions).
inline BitTensor channel_shuffle_bits(const BitTensor& x, int groups) {
  const auto& s = x.shape();
  check_dim(s.size() == 3, "channel_shuffle_bits: expected rank-3 input");
  const int64_t h = s[0], w = s[1], c = s[2];
  check_dim(c % groups == 0, "channel_shuffle_bits: groups must divide channels");
  const int64_t cpg = c / groups;
  BitTensor out(x.shape());
  for (int64_t p = 0; p < h * w; ++p)
    for (int64_t g = 0; g < groups; ++g)
      for (int64_t i = 0; i < cpg; ++i)
        out.set_bit(p * c + i * groups + g, x.get_bit(p * c + g * cpg + i));
  return out;
}

}  // namespace fbnn
