#pragma once

#include <algorithm>
#include <cmath>

#include "fbnn/encode.hpp"
#include "fbnn/qat.hpp"

namespace fbnn {

// Concrete draw for one image; sampling and application are split so the
// identity draw can be checked and so sampling order stays pinned.
struct AugmentParams {
  bool flip = false;
  int dx = 0;
  int dy = 0;
  double contrast = 1.0;
};

inline AugmentParams sample_augment(Rng& rng, const AugmentConfig& cfg) {
  AugmentParams p;
  p.flip = cfg.hflip && rand_double(rng) < 0.5;
  p.dx = rand_int(rng, -cfg.maxTranslate, cfg.maxTranslate);
  p.dy = rand_int(rng, -cfg.maxTranslate, cfg.maxTranslate);
  p.contrast = rand_uniform(rng, cfg.contrastLo, cfg.contrastHi);
  return p;
}

// flip -> translate (replicate edge) -> contrast about the per-image mean.
inline Image8 apply_augment(const Image8& img, const AugmentParams& p) {
  Image8 out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      int sy = std::clamp(y - p.dy, 0, img.h - 1);
      int sx = std::clamp(x - p.dx, 0, img.w - 1);
      if (p.flip) sx = img.w - 1 - sx;
      for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(sy, sx, ch);
    }
  if (p.contrast != 1.0) {
    double mean = 0.0;
    for (uint8_t v : out.v) mean += v;
    mean /= static_cast<double>(out.v.size());
    for (auto& v : out.v)
      v = static_cast<uint8_t>(std::clamp<long>(std::lround(mean + p.contrast * (v - mean)), 0, 255));
  }
  return out;
}

inline Image8 augment(const Image8& img, Rng& rng, const AugmentConfig& cfg) {
  return apply_augment(img, sample_augment(rng, cfg));
}

}  // namespace fbnn
