#pragma once

// Independent float reference for the packed forward pass: plain double
// arithmetic over +-1 values with explicit scale multiplications before each
// sign, mirroring the published layer wiring. Used to cross-check that the
// integer/popcount pipeline computes the same activations and that dropping
// the (positive) scales changes nothing.

#include <cmath>
#include <vector>

#include "fbnn/arch.hpp"

namespace oracle {

using fbnn::BitTensor;
using fbnn::Model;

inline std::vector<double> unpack(const BitTensor& b) { return b.unpack_real(); }

inline std::vector<double> sign_vec(const std::vector<double>& y) {
  std::vector<double> out(y.size());
  for (size_t i = 0; i < y.size(); ++i) out[i] = y[i] >= 0.0 ? 1.0 : -1.0;
  return out;
}

inline std::vector<double> conv_scaled(const std::vector<double>& x, int h, int w, int cin,
                                       const fbnn::ConvUnit& u, bool applyScale, int* oh, int* ow) {
  const auto& spec = u.spec;
  const int ho = (h + 2 * spec.pad - spec.kh) / spec.stride + 1;
  const int wo = (w + 2 * spec.pad - spec.kw) / spec.stride + 1;
  const int co = static_cast<int>(u.w.shape[0]);
  const int cpg = cin / spec.groups;
  const int copg = co / spec.groups;
  const double s = applyScale ? u.scale.value() : 1.0;
  std::vector<double> y(static_cast<size_t>(ho) * wo * co, 0.0);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox)
      for (int c = 0; c < co; ++c) {
        const int g = c / copg;
        double acc = 0.0;
        for (int ky = 0; ky < spec.kh; ++ky)
          for (int kx = 0; kx < spec.kw; ++kx)
            for (int ci = 0; ci < cpg; ++ci) {
              const int iy = oy * spec.stride + ky - spec.pad;
              const int ix = ox * spec.stride + kx - spec.pad;
              double xv = -1.0;
              if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                xv = x[(static_cast<size_t>(iy) * w + ix) * cin + g * cpg + ci];
              const size_t wi = ((static_cast<size_t>(c) * spec.kh + ky) * spec.kw + kx) * cpg + ci;
              acc += xv * (u.w.proxy[wi] >= 0.0 ? 1.0 : -1.0);
            }
        y[(static_cast<size_t>(oy) * wo + ox) * co + c] = s * acc;
      }
  *oh = ho;
  *ow = wo;
  return y;
}

inline std::vector<double> pool2_max(const std::vector<double>& x, int h, int w, int c) {
  std::vector<double> out(static_cast<size_t>(h / 2) * (w / 2) * c);
  for (int y = 0; y < h / 2; ++y)
    for (int xw = 0; xw < w / 2; ++xw)
      for (int ch = 0; ch < c; ++ch) {
        double m = -2.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            m = std::max(m, x[(static_cast<size_t>(2 * y + dy) * w + 2 * xw + dx) * c + ch]);
        out[(static_cast<size_t>(y) * (w / 2) + xw) * c + ch] = m;
      }
  return out;
}

// Full forward in float: returns the final-layer scores (alpha applied when
// applyScale). Asserts nothing; caller compares.
inline std::vector<double> model_forward(Model& model, const BitTensor& encoded, bool applyScale) {
  std::vector<double> x = unpack(encoded);
  int h = static_cast<int>(model.inputShape[0]);
  int w = static_cast<int>(model.inputShape[1]);
  int c = static_cast<int>(model.inputShape[2]);

  for (auto& blockPtr : model.fe) {
    if (auto* cp = dynamic_cast<fbnn::ConvPairBlock*>(blockPtr.get())) {
      int oh = 0, ow = 0;
      x = sign_vec(conv_scaled(x, h, w, c, cp->a, applyScale, &oh, &ow));
      h = oh;
      w = ow;
      c = static_cast<int>(cp->a.w.shape[0]);
      x = sign_vec(conv_scaled(x, h, w, c, cp->b, applyScale, &oh, &ow));
      c = static_cast<int>(cp->b.w.shape[0]);
      if (cp->pool) {
        x = pool2_max(x, h, w, c);
        h /= 2;
        w /= 2;
      }
    } else if (auto* lg = dynamic_cast<fbnn::LgapBlock*>(blockPtr.get())) {
      const int ch = lg->ch;
      std::vector<double> sums(2 * ch, 0.0);
      for (int p = 0; p < h * w; ++p)
        for (int cc = 0; cc < ch; ++cc) {
          const double xv = x[static_cast<size_t>(p) * ch + cc];
          sums[cc] += xv;
          sums[ch + cc] += xv * (lg->dw.proxy[static_cast<size_t>(p) * ch + cc] >= 0.0 ? 1.0 : -1.0);
        }
      if (applyScale)
        for (auto& v : sums) v *= lg->poolScale.value();
      std::vector<double> mid = sign_vec(sums);
      const int npg = 2 * ch / lg->denseGroups;
      const int opg = lg->latent / lg->denseGroups;
      std::vector<double> z(lg->latent, 0.0);
      for (int o = 0; o < lg->latent; ++o) {
        const int g = o / opg;
        double acc = 0.0;
        for (int i = 0; i < npg; ++i)
          acc += mid[static_cast<size_t>(g) * npg + i] *
                 (lg->dense.proxy[static_cast<size_t>(o) * npg + i] >= 0.0 ? 1.0 : -1.0);
        z[o] = (applyScale ? lg->denseScale.value() : 1.0) * acc;
      }
      x = sign_vec(z);
      h = 1;
      w = 1;
      c = lg->latent;
    }
  }

  for (auto& blockPtr : model.clf) {
    auto* ds = dynamic_cast<fbnn::DenseSkipBlock*>(blockPtr.get());
    const int n = ds->n;
    const int half = n / 2;
    std::vector<double> dup(2 * n);
    for (int i = 0; i < half; ++i) {
      dup[i] = dup[half + i] = x[i];
      dup[n + i] = dup[n + half + i] = x[half + i];
    }
    std::vector<double> out(n);
    for (int i = 0; i < half; ++i) {
      const double keep = x[ds->skipFirstHalf ? i : half + i];
      out[i] = (applyScale ? ds->scale.value() : 1.0) * keep;  // sign restores +-1 below
    }
    for (int o = 0; o < half; ++o) {
      const int g = o / (half / 2);
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        acc += dup[static_cast<size_t>(g) * n + i] *
               (ds->w.proxy[static_cast<size_t>(o) * n + i] >= 0.0 ? 1.0 : -1.0);
      out[half + o] = (applyScale ? ds->scale.value() : 1.0) * acc;
    }
    x = sign_vec(out);
  }

  const int nc = model.head.nClasses;
  const int ld = model.head.latentDim;
  std::vector<double> scores(nc, 0.0);
  for (int o = 0; o < nc; ++o) {
    double acc = 0.0;
    for (int i = 0; i < ld; ++i)
      acc += x[i] * (model.head.w.proxy[static_cast<size_t>(o) * ld + i] >= 0.0 ? 1.0 : -1.0);
    scores[o] = (applyScale ? model.head.alphaSpec.value() : 1.0) * acc;
  }
  return scores;
}

inline int argmax(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace oracle
