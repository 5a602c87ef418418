#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fbnn/bittensor.hpp"
#include "fbnn/core.hpp"

namespace fbnn {

// 8-bit image, channel-fastest layout ({H, W, C} with C = 3 for RGB/YCC).
struct Image8 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<uint8_t> v;

  Image8() = default;
  Image8(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, 0) {}
  uint8_t& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
  uint8_t at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
  int64_t size() const { return static_cast<int64_t>(v.size()); }
};

// Per-pixel quantization levels in YCC space: Y on 2N levels, Cb/Cr on N each.
struct QuantizedImage {
  int h = 0;
  int w = 0;
  int n = 16;
  std::vector<uint8_t> yLevel, cbLevel, crLevel;

  QuantizedImage() = default;
  QuantizedImage(int h_, int w_, int n_)
      : h(h_), w(w_), n(n_),
        yLevel(static_cast<size_t>(h_) * w_, 0),
        cbLevel(static_cast<size_t>(h_) * w_, 0),
        crLevel(static_cast<size_t>(h_) * w_, 0) {}

  bool operator==(const QuantizedImage& o) const {
    return h == o.h && w == o.w && n == o.n && yLevel == o.yLevel && cbLevel == o.cbLevel &&
           crLevel == o.crLevel;
  }
};

inline int bits_for_levels(int k) {
  int b = 0;
  while ((1 << b) < k) ++b;
  return b;
}

// 13 at N=16: 5 bits for the 2N-level Y plus 4+4 for Cb/Cr.
inline int native_bits_per_pixel(int n) { return bits_for_levels(2 * n) + 2 * bits_for_levels(n); }

// ITU-R BT.601 full-range RGB -> YCbCr, rounded to nearest (half away from
// zero) and clamped to [0,255].
inline std::array<uint8_t, 3> rgb_to_ycc(uint8_t r, uint8_t g, uint8_t b) {
  const double rf = r, gf = g, bf = b;
  const double y = 0.299 * rf + 0.587 * gf + 0.114 * bf;
  const double cb = 128.0 - 0.168736 * rf - 0.331264 * gf + 0.5 * bf;
  const double cr = 128.0 + 0.5 * rf - 0.418688 * gf - 0.081312 * bf;
  auto q8 = [](double v) {
    return static_cast<uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
  };
  return {q8(y), q8(cb), q8(cr)};
}

inline Image8 to_ycc(const Image8& rgb) {
  check_dim(rgb.c == 3, "to_ycc: expected 3-channel input");
  Image8 out(rgb.h, rgb.w, 3);
  for (int y = 0; y < rgb.h; ++y)
    for (int x = 0; x < rgb.w; ++x) {
      const auto ycc = rgb_to_ycc(rgb.at(y, x, 0), rgb.at(y, x, 1), rgb.at(y, x, 2));
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = ycc[ch];
    }
  return out;
}

inline std::array<uint8_t, 3> ycc_to_rgb(uint8_t y, uint8_t cb, uint8_t cr) {
  const double yf = y, cbf = cb - 128.0, crf = cr - 128.0;
  auto q8 = [](double v) {
    return static_cast<uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
  };
  return {q8(yf + 1.402 * crf), q8(yf - 0.344136 * cbf - 0.714136 * crf),
          q8(yf + 1.772 * cbf)};
}

inline Image8 to_rgb(const Image8& ycc) {
  check_dim(ycc.c == 3, "to_rgb: expected 3-channel input");
  Image8 out(ycc.h, ycc.w, 3);
  for (int y = 0; y < ycc.h; ++y)
    for (int x = 0; x < ycc.w; ++x) {
      const auto rgb = ycc_to_rgb(ycc.at(y, x, 0), ycc.at(y, x, 1), ycc.at(y, x, 2));
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = rgb[ch];
    }
  return out;
}

// Uniform k-level quantization of an 8-bit value: level = floor(v * k / 256).
inline int quantize_value(uint8_t v, int k) {
  check_cfg(k >= 1, "quantize_value: need at least one level");
  return static_cast<int>((static_cast<uint32_t>(v) * static_cast<uint32_t>(k)) >> 8);
}

// Midpoint of quantization bin `level` back in the 8-bit domain; chosen so
// re-quantizing always returns the same level (k <= 128).
inline uint8_t dequantize_value(int level, int k) {
  return static_cast<uint8_t>(((2 * level + 1) * 128) / k);
}

// Writes the k-channel thermometer code of `value` at bit offset `off`:
// +1 in the first `level` positions, -1 after.
inline void thermometer_into(BitTensor& t, int64_t off, uint8_t value, int k) {
  const int level = quantize_value(value, k);
  for (int i = 0; i < k; ++i) t.set_bit(off + i, i < level);
}

inline BitTensor thermometer(uint8_t value, int k) {
  BitTensor t(Shape{k});
  thermometer_into(t, 0, value, k);
  return t;
}

inline QuantizedImage quantize_ycc(const Image8& ycc, int n = 16) {
  check_dim(ycc.c == 3, "quantize_ycc: expected 3-channel input");
  check_cfg(n >= 1, "quantize_ycc: need at least one chroma level");
  QuantizedImage q(ycc.h, ycc.w, n);
  for (int y = 0; y < ycc.h; ++y)
    for (int x = 0; x < ycc.w; ++x) {
      const size_t p = static_cast<size_t>(y) * ycc.w + x;
      q.yLevel[p] = static_cast<uint8_t>(quantize_value(ycc.at(y, x, 0), 2 * n));
      q.cbLevel[p] = static_cast<uint8_t>(quantize_value(ycc.at(y, x, 1), n));
      q.crLevel[p] = static_cast<uint8_t>(quantize_value(ycc.at(y, x, 2), n));
    }
  return q;
}

inline QuantizedImage quantize(const Image8& rgb, int n = 16) { return quantize_ycc(to_ycc(rgb), n); }

inline Image8 dequantize(const QuantizedImage& q) {
  Image8 out(q.h, q.w, 3);
  for (int y = 0; y < q.h; ++y)
    for (int x = 0; x < q.w; ++x) {
      const size_t p = static_cast<size_t>(y) * q.w + x;
      out.at(y, x, 0) = dequantize_value(q.yLevel[p], 2 * q.n);
      out.at(y, x, 1) = dequantize_value(q.cbLevel[p], q.n);
      out.at(y, x, 2) = dequantize_value(q.crLevel[p], q.n);
    }
  return out;
}

// Thermometer-coded YCC input: per pixel Y on 2N channels then Cb and Cr on N
// each, {H, W, 4N} channel-fastest.
inline BitTensor encode_tycc_from_ycc(const Image8& ycc, int n = 16) {
  check_dim(ycc.c == 3, "encode_tycc_from_ycc: expected 3-channel input");
  check_cfg(n >= 1, "encode_tycc_from_ycc: need at least one chroma level");
  BitTensor t(Shape{ycc.h, ycc.w, 4 * n});
  for (int y = 0; y < ycc.h; ++y)
    for (int x = 0; x < ycc.w; ++x) {
      const int64_t off = (static_cast<int64_t>(y) * ycc.w + x) * 4 * n;
      thermometer_into(t, off, ycc.at(y, x, 0), 2 * n);
      thermometer_into(t, off + 2 * n, ycc.at(y, x, 1), n);
      thermometer_into(t, off + 3 * n, ycc.at(y, x, 2), n);
    }
  return t;
}

inline BitTensor encode_tycc(const Image8& rgb, int n = 16) {
  return encode_tycc_from_ycc(to_ycc(rgb), n);
}

// Thermometer-coded RGB input: 85 channels per color, {H, W, 255}.
inline BitTensor encode_trgb(const Image8& rgb) {
  check_dim(rgb.c == 3, "encode_trgb: expected 3-channel input");
  constexpr int k = 85;
  BitTensor t(Shape{rgb.h, rgb.w, 3 * k});
  for (int y = 0; y < rgb.h; ++y)
    for (int x = 0; x < rgb.w; ++x) {
      const int64_t off = (static_cast<int64_t>(y) * rgb.w + x) * 3 * k;
      for (int ch = 0; ch < 3; ++ch) thermometer_into(t, off + ch * k, rgb.at(y, x, ch), k);
    }
  return t;
}

}  // namespace fbnn
