#pragma once

#include <memory>
#include <vector>

#include "fbnn/binmath.hpp"
#include "fbnn/qat.hpp"
#include "fbnn/tensor.hpp"

namespace fbnn {

// Training caches are per-sample and owned by the caller; blocks downcast to
// their own type.
struct CacheBase {
  virtual ~CacheBase() = default;
};

using CachePtr = std::unique_ptr<CacheBase>;

// A forward pass never multiplies by a scale: binarization thresholds the
// integer accumulation at 0, which equals sign(S*z) for any S > 0. Scales
// enter only the backward pass (STE windows and gradient magnitudes), so the
// deployed integer pipeline is literally the training pipeline minus scales.
struct Block {
  virtual ~Block() = default;
  // cache == nullptr -> pure inference
  virtual BitTensor forward(const BitTensor& in, CachePtr* cache) = 0;
  // gOut = dL/d(output bits as reals); returns dL/d(input bits as reals)
  virtual std::vector<double> backward(const std::vector<double>& gOut, const CacheBase& cache) = 0;
  virtual void collect_params(std::vector<QatParam*>& out) = 0;
  virtual int64_t weight_bits() const = 0;
};

// ---------------------------------------------------------------------------
// Shared unit: binary conv -> scale -> sign, with STE backward.
struct ConvUnit {
  Conv2dSpec spec;
  QatParam w;  // {Co, kh, kw, Cin/groups}
  ScaleSpec scale;

  struct Trace {
    BitTensor in;
    IntTensor z;
  };

  void init(int cin, int co, int kh, int kw, int stride, int pad, int groups, Rng& rng) {
    spec = Conv2dSpec{kh, kw, stride, pad, groups};
    w = QatParam(Shape{co, kh, kw, cin / groups});
    w.init_uniform(rng);
    scale = ScaleSpec{static_cast<int64_t>(kh) * kw * (cin / groups), 1.0};
  }

  BitTensor forward(const BitTensor& in, Trace* tr) const {
    IntTensor z = bin_conv2d(in, w.bin, spec);
    BitTensor out(z.shape);
    for (int64_t i = 0; i < z.size(); ++i) out.set(i, z.v[i] >= 0 ? +1 : -1);
    if (tr) {
      tr->in = in;
      tr->z = std::move(z);
    }
    return out;
  }

  // gOut over output bits; accumulates w.grad, returns dL/d(input bits).
  std::vector<double> backward(const std::vector<double>& gOut, const Trace& tr) {
    const auto& xs = tr.in.shape();
    const int64_t h = xs[0], wd = xs[1], cin = xs[2];
    const auto& zs = tr.z.shape;
    const int64_t ho = zs[0], wo = zs[1], co = zs[2];
    const int64_t cpg = cin / spec.groups;
    const int64_t copg = co / spec.groups;
    const double s = scale.value();
    std::vector<double> gIn(static_cast<size_t>(h) * wd * cin, 0.0);
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox)
        for (int64_t c = 0; c < co; ++c) {
          const int64_t oi = (oy * wo + ox) * co + c;
          const double y = s * tr.z.v[oi];
          if (std::abs(y) > 1.0) continue;  // STE window on the sign input
          const double gz = s * gOut[oi];
          if (gz == 0.0) continue;
          const int64_t g = c / copg;
          for (int64_t ky = 0; ky < spec.kh; ++ky)
            for (int64_t kx = 0; kx < spec.kw; ++kx) {
              const int64_t iy = oy * spec.stride + ky - spec.pad;
              const int64_t ix = ox * spec.stride + kx - spec.pad;
              for (int64_t ci = 0; ci < cpg; ++ci) {
                const int64_t wi = ((c * spec.kh + ky) * spec.kw + kx) * cpg + ci;
                double xv = -1.0;  // padding value
                int64_t xi = -1;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wd) {
                  xi = (iy * wd + ix) * cin + g * cpg + ci;
                  xv = tr.in.get(xi);
                }
                w.grad[wi] += gz * xv;
                if (xi >= 0) gIn[xi] += gz * w.bin.get(wi);
              }
            }
        }
    return gIn;
  }

  int64_t bits() const { return w.size(); }
};

// ---------------------------------------------------------------------------
// Head block: two grouped 3x3 convs, then a 2x2 max pool.
struct ConvPairBlock : Block {
  ConvUnit a, b;
  bool pool = true;

  struct Cache : CacheBase {
    ConvUnit::Trace ta, tb;
    BitTensor prePool;
    std::vector<uint8_t> route;  // winning position per pooled element
  };

  ConvPairBlock(int cin, int co, int groupsA, int groupsB, Rng& rng) {
    a.init(cin, co, 3, 3, 1, 1, groupsA, rng);
    b.init(co, co, 3, 3, 1, 1, groupsB, rng);
  }

  BitTensor forward(const BitTensor& in, CachePtr* cache) override {
    Cache* c = nullptr;
    if (cache) {
      *cache = std::make_unique<Cache>();
      c = static_cast<Cache*>(cache->get());
    }
    BitTensor x = a.forward(in, c ? &c->ta : nullptr);
    x = b.forward(x, c ? &c->tb : nullptr);
    if (!pool) return x;
    const auto& s = x.shape();
    const int64_t h = s[0], w = s[1], ch = s[2];
    BitTensor out(Shape{h / 2, w / 2, ch});
    if (c) {
      c->prePool = x;
      c->route.assign(static_cast<size_t>(h / 2) * (w / 2) * ch, 0);
    }
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t xw = 0; xw < w / 2; ++xw)
        for (int64_t cc = 0; cc < ch; ++cc) {
          int best = -2, bestPos = 0;
          for (int pos = 0; pos < 4; ++pos) {
            const int64_t yy = 2 * y + pos / 2, xx = 2 * xw + pos % 2;
            const int v = x.get((yy * w + xx) * ch + cc);
            if (v > best) {
              best = v;
              bestPos = pos;
            }
          }
          const int64_t oi = (y * (w / 2) + xw) * ch + cc;
          out.set(oi, best);
          if (c) c->route[oi] = static_cast<uint8_t>(bestPos);
        }
    return out;
  }

  std::vector<double> backward(const std::vector<double>& gOut, const CacheBase& cacheBase) override {
    const auto& c = static_cast<const Cache&>(cacheBase);
    std::vector<double> gPre;
    if (pool) {
      const auto& s = c.prePool.shape();
      const int64_t h = s[0], w = s[1], ch = s[2];
      gPre.assign(static_cast<size_t>(h) * w * ch, 0.0);
      for (int64_t y = 0; y < h / 2; ++y)
        for (int64_t xw = 0; xw < w / 2; ++xw)
          for (int64_t cc = 0; cc < ch; ++cc) {
            const int64_t oi = (y * (w / 2) + xw) * ch + cc;
            const int pos = c.route[oi];
            const int64_t yy = 2 * y + pos / 2, xx = 2 * xw + pos % 2;
            gPre[(yy * w + xx) * ch + cc] += gOut[oi];
          }
    } else {
      gPre = gOut;
    }
    return a.backward(b.backward(gPre, c.tb), c.ta);
  }

  void collect_params(std::vector<QatParam*>& out) override {
    out.push_back(&a.w);
    out.push_back(&b.w);
  }
  int64_t weight_bits() const override { return a.bits() + b.bits(); }
};

// ---------------------------------------------------------------------------
// Pooling bottleneck producing the 1024-bit latent. Two integer paths over the
// final feature map (plain spatial sum; learned binary depthwise weighting),
// concatenated, binarized, then a grouped dense layer to the latent width.
struct LgapBlock : Block {
  int h = 4, w = 4, ch = 512;
  int latent = 1024;
  int denseGroups = 2;
  QatParam dw;     // {h, w, ch}
  QatParam dense;  // {latent, 2*ch/denseGroups}
  ScaleSpec poolScale;   // fan-in = spatial size
  ScaleSpec denseScale;  // fan-in = 2*ch/denseGroups

  struct Cache : CacheBase {
    BitTensor in;
    IntTensor sums;  // {2*ch}: plain path then weighted path
    BitTensor mid;   // binarized sums
    IntTensor z;     // dense accumulations {latent}
  };

  LgapBlock(int h_, int w_, int ch_, int latent_, int groups, Rng& rng)
      : h(h_), w(w_), ch(ch_), latent(latent_), denseGroups(groups) {
    dw = QatParam(Shape{h, w, ch});
    dw.init_uniform(rng);
    dense = QatParam(Shape{latent, 2 * ch / denseGroups});
    dense.init_uniform(rng);
    poolScale = ScaleSpec{static_cast<int64_t>(h) * w, 1.0};
    denseScale = ScaleSpec{2 * ch / denseGroups, 1.0};
  }

  BitTensor forward(const BitTensor& in, CachePtr* cache) override {
    check_dim(in.shape() == Shape{h, w, ch}, "LgapBlock: unexpected feature map shape");
    IntTensor sums(Shape{2 * ch});
    for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
      for (int64_t c = 0; c < ch; ++c) {
        const int x = in.get(p * ch + c);
        sums.v[c] += x;
        sums.v[ch + c] += x * dw.bin.get(p * ch + c);
      }
    BitTensor mid(Shape{2 * ch});
    for (int64_t i = 0; i < 2 * ch; ++i) mid.set(i, sums.v[i] >= 0 ? +1 : -1);
    IntTensor z = bin_dense(mid, dense.bin, denseGroups);
    BitTensor out(Shape{latent});
    for (int i = 0; i < latent; ++i) out.set(i, z.v[i] >= 0 ? +1 : -1);
    if (cache) {
      auto c = std::make_unique<Cache>();
      c->in = in;
      c->sums = std::move(sums);
      c->mid = std::move(mid);
      c->z = std::move(z);
      *cache = std::move(c);
    }
    return out;
  }

  std::vector<double> backward(const std::vector<double>& gOut, const CacheBase& cacheBase) override {
    const auto& c = static_cast<const Cache&>(cacheBase);
    const double sd = denseScale.value();
    const int64_t npg = 2 * ch / denseGroups;
    const int64_t opg = latent / denseGroups;
    // through the latent sign + grouped dense
    std::vector<double> gMid(2 * ch, 0.0);
    for (int o = 0; o < latent; ++o) {
      const double y = sd * c.z.v[o];
      if (std::abs(y) > 1.0) continue;
      const double gz = sd * gOut[o];
      if (gz == 0.0) continue;
      const int64_t g = o / opg;
      for (int64_t i = 0; i < npg; ++i) {
        dense.grad[o * npg + i] += gz * c.mid.get(g * npg + i);
        gMid[g * npg + i] += gz * dense.bin.get(o * npg + i);
      }
    }
    // through the pooled-sum sign
    const double sp = poolScale.value();
    std::vector<double> gSum(2 * ch, 0.0);
    for (int64_t i = 0; i < 2 * ch; ++i) {
      const double y = sp * c.sums.v[i];
      if (std::abs(y) <= 1.0) gSum[i] = sp * gMid[i];
    }
    // through both pooling paths
    std::vector<double> gIn(static_cast<size_t>(h) * w * ch, 0.0);
    for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
      for (int64_t cc = 0; cc < ch; ++cc) {
        const int64_t xi = p * ch + cc;
        gIn[xi] += gSum[cc];
        gIn[xi] += gSum[ch + cc] * dw.bin.get(xi);
        dw.grad[xi] += gSum[ch + cc] * c.in.get(xi);
      }
    return gIn;
  }

  void collect_params(std::vector<QatParam*>& out) override {
    out.push_back(&dw);
    out.push_back(&dense);
  }
  int64_t weight_bits() const override { return dw.size() + dense.size(); }
};

// ---------------------------------------------------------------------------
// Classifier block with a skip lane. The input [a, b] is duplicated per half
// to [a, a, b, b]; a grouped dense (g = 2) maps each duplicated half to n/4
// outputs, so every output sees both copies of its half and opposite weights
// on a copy pair cancel that input exactly. One alternating half is carried
// through unchanged next to the transformed units.
struct DenseSkipBlock : Block {
  int n = 1024;
  bool skipFirstHalf = true;
  QatParam w;  // {n/2, n}: groups = 2 over the 2n duplicated wires
  ScaleSpec scale;

  struct Cache : CacheBase {
    BitTensor in;
    IntTensor z;  // {n/2}
  };

  DenseSkipBlock(int n_, bool skipFirst, Rng& rng) : n(n_), skipFirstHalf(skipFirst) {
    check_cfg(n % 4 == 0, "DenseSkipBlock: width must be divisible by 4");
    w = QatParam(Shape{n / 2, n});
    w.init_uniform(rng);
    scale = ScaleSpec{n, 1.0};
  }

  BitTensor duplicated(const BitTensor& in) const {
    BitTensor t(Shape{2 * n});
    const int half = n / 2;
    for (int i = 0; i < half; ++i) {
      const bool va = in.get_bit(i), vb = in.get_bit(half + i);
      t.set_bit(i, va);
      t.set_bit(half + i, va);
      t.set_bit(n + i, vb);
      t.set_bit(n + half + i, vb);
    }
    return t;
  }

  BitTensor forward(const BitTensor& in, CachePtr* cache) override {
    check_dim(in.size() == n, "DenseSkipBlock: width mismatch");
    const BitTensor dup = duplicated(in);
    IntTensor z = bin_dense(dup, w.bin, 2);
    const int half = n / 2;
    BitTensor out(Shape{n});
    for (int i = 0; i < half; ++i)
      out.set_bit(i, in.get_bit(skipFirstHalf ? i : half + i));  // sign(S*(+-1)) = identity
    for (int i = 0; i < half; ++i) out.set_bit(half + i, z.v[i] >= 0);
    if (cache) {
      auto c = std::make_unique<Cache>();
      c->in = in;
      c->z = std::move(z);
      *cache = std::move(c);
    }
    return out;
  }

  std::vector<double> backward(const std::vector<double>& gOut, const CacheBase& cacheBase) override {
    const auto& c = static_cast<const Cache&>(cacheBase);
    const int half = n / 2;
    const double s = scale.value();
    std::vector<double> gIn(n, 0.0);
    // skip lane: out bit = sign(S * x); |S*x| = S <= 1 so the STE window passes
    for (int i = 0; i < half; ++i) {
      const int src = skipFirstHalf ? i : half + i;
      gIn[src] += s * gOut[i];
    }
    // transformed lane
    std::vector<double> gDup(2 * n, 0.0);
    const BitTensor dup = duplicated(c.in);
    for (int o = 0; o < half; ++o) {
      const double y = s * c.z.v[o];
      if (std::abs(y) > 1.0) continue;
      const double gz = s * gOut[half + o];
      if (gz == 0.0) continue;
      const int64_t g = o / (half / 2);  // two output groups
      const int64_t base = g * n;
      for (int i = 0; i < n; ++i) {
        w.grad[static_cast<int64_t>(o) * n + i] += gz * dup.get(base + i);
        gDup[base + i] += gz * w.bin.get(static_cast<int64_t>(o) * n + i);
      }
    }
    // fold duplicated-wire grads back onto the input
    for (int i = 0; i < half; ++i) {
      gIn[i] += gDup[i] + gDup[half + i];
      gIn[half + i] += gDup[n + i] + gDup[n + half + i];
    }
    return gIn;
  }

  void collect_params(std::vector<QatParam*>& out) override { out.push_back(&w); }
  int64_t weight_bits() const override { return w.size(); }
};

// ---------------------------------------------------------------------------
// Output layer: binary dense to nClasses. Training logits are alpha * z; the
// deployed path takes argmax over the raw integer accumulations (alpha > 0
// preserves the argmax, so no scale survives to inference).
struct OutputHead {
  int latentDim = 1024;
  int nClasses = 0;
  QatParam w;  // {nClasses, latentDim}
  OutputScaleSpec alphaSpec;

  void init(int latent, int nc, Rng& rng) {
    latentDim = latent;
    nClasses = nc;
    w = QatParam(Shape{nc, latent});
    w.init_uniform(rng);
    alphaSpec = OutputScaleSpec{latent, nc, 5.0};
  }

  // widen to newNc: old rows (weights and optimizer state) are kept verbatim
  void grow(int newNc, Rng& rng) {
    check_cfg(newNc > nClasses, "OutputHead::grow: cannot shrink the class head");
    QatParam nw(Shape{newNc, latentDim});
    nw.init_uniform(rng);
    std::copy(w.proxy.begin(), w.proxy.end(), nw.proxy.begin());
    std::copy(w.m.begin(), w.m.end(), nw.m.begin());
    std::copy(w.v.begin(), w.v.end(), nw.v.begin());
    nw.refresh_bin();
    w = std::move(nw);
    nClasses = newNc;
    alphaSpec.nClasses = newNc;
  }

  IntTensor accumulate(const BitTensor& latent) const { return bin_dense(latent, w.bin, 1); }

  std::vector<double> logits(const IntTensor& z) const {
    const double a = alphaSpec.value();
    std::vector<double> out(z.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * z.v[i];
    return out;
  }

  // accumulates w.grad from dL/dlogits; returns dL/d(latent bits)
  std::vector<double> backward(const std::vector<double>& gLogits, const BitTensor& latent) {
    const double a = alphaSpec.value();
    std::vector<double> gLatent(latentDim, 0.0);
    for (int o = 0; o < nClasses; ++o) {
      const double gz = a * gLogits[o];
      if (gz == 0.0) continue;
      for (int i = 0; i < latentDim; ++i) {
        w.grad[static_cast<int64_t>(o) * latentDim + i] += gz * latent.get(i);
        gLatent[i] += gz * w.bin.get(static_cast<int64_t>(o) * latentDim + i);
      }
    }
    return gLatent;
  }

  int64_t weight_bits() const { return w.size(); }
};

// ---------------------------------------------------------------------------
// Residual units: a channel-split block (identity on one half) and a
// downsampling block (both paths strided, concat doubles the channels). Both
// end with a 2-group channel shuffle.
struct ResBlock : Block {
  bool down = false;
  int cin = 0;
  ConvUnit m1, m2, m3;  // main path 1x1 -> 3x3 -> 1x1
  ConvUnit r1, r2;      // down only: residual 3x3 -> 1x1

  struct Cache : CacheBase {
    BitTensor in;
    ConvUnit::Trace t1, t2, t3, tr1, tr2;
  };

  ResBlock(bool down_, int cin_, int mainGroups1x1, int mainGroups3x3, Rng& rng)
      : down(down_), cin(cin_) {
    if (down) {
      m1.init(cin, cin, 1, 1, 1, 0, mainGroups1x1, rng);
      m2.init(cin, cin, 3, 3, 2, 1, mainGroups3x3, rng);
      m3.init(cin, cin, 1, 1, 1, 0, mainGroups1x1, rng);
      r1.init(cin, cin, 3, 3, 2, 1, mainGroups3x3, rng);
      r2.init(cin, cin, 1, 1, 1, 0, mainGroups1x1, rng);
    } else {
      const int half = cin / 2;
      m1.init(half, half, 1, 1, 1, 0, mainGroups1x1, rng);
      m2.init(half, half, 3, 3, 1, 1, mainGroups3x3, rng);
      m3.init(half, half, 1, 1, 1, 0, mainGroups1x1, rng);
    }
  }

  static BitTensor channel_slice(const BitTensor& x, int64_t from, int64_t count) {
    const auto& s = x.shape();
    BitTensor out(Shape{s[0], s[1], count});
    for (int64_t p = 0; p < s[0] * s[1]; ++p)
      for (int64_t c = 0; c < count; ++c)
        out.set_bit(p * count + c, x.get_bit(p * s[2] + from + c));
    return out;
  }

  static BitTensor channel_concat(const BitTensor& a, const BitTensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    const int64_t ca = sa[2], cb = sb[2];
    BitTensor out(Shape{sa[0], sa[1], ca + cb});
    for (int64_t p = 0; p < sa[0] * sa[1]; ++p) {
      for (int64_t c = 0; c < ca; ++c) out.set_bit(p * (ca + cb) + c, a.get_bit(p * ca + c));
      for (int64_t c = 0; c < cb; ++c) out.set_bit(p * (ca + cb) + ca + c, b.get_bit(p * cb + c));
    }
    return out;
  }

  BitTensor forward(const BitTensor& in, CachePtr* cache) override {
    Cache* c = nullptr;
    if (cache) {
      *cache = std::make_unique<Cache>();
      c = static_cast<Cache*>(cache->get());
      c->in = in;
    }
    BitTensor joined;
    if (down) {
      BitTensor m = m1.forward(in, c ? &c->t1 : nullptr);
      m = m2.forward(m, c ? &c->t2 : nullptr);
      m = m3.forward(m, c ? &c->t3 : nullptr);
      BitTensor r = r1.forward(in, c ? &c->tr1 : nullptr);
      r = r2.forward(r, c ? &c->tr2 : nullptr);
      joined = channel_concat(m, r);
    } else {
      const int64_t half = cin / 2;
      const BitTensor keep = channel_slice(in, 0, half);
      BitTensor m = m1.forward(channel_slice(in, half, half), c ? &c->t1 : nullptr);
      m = m2.forward(m, c ? &c->t2 : nullptr);
      m = m3.forward(m, c ? &c->t3 : nullptr);
      joined = channel_concat(keep, m);
    }
    return channel_shuffle_bits(joined, 2);
  }

  std::vector<double> backward(const std::vector<double>& gOut, const CacheBase& cacheBase) override {
    const auto& c = static_cast<const Cache&>(cacheBase);
    const int64_t cout = down ? 2 * cin : cin;
    const int64_t hw = static_cast<int64_t>(gOut.size()) / cout;
    // invert the shuffle: shuffled index i*2+g came from g*(cout/2)+i
    std::vector<double> gJoin(gOut.size(), 0.0);
    const int64_t cpg = cout / 2;
    for (int64_t p = 0; p < hw; ++p)
      for (int64_t g = 0; g < 2; ++g)
        for (int64_t i = 0; i < cpg; ++i)
          gJoin[p * cout + g * cpg + i] = gOut[p * cout + i * 2 + g];
    if (down) {
      std::vector<double> gm(static_cast<size_t>(hw) * cin), gr(static_cast<size_t>(hw) * cin);
      for (int64_t p = 0; p < hw; ++p)
        for (int64_t ch = 0; ch < cin; ++ch) {
          gm[p * cin + ch] = gJoin[p * cout + ch];
          gr[p * cin + ch] = gJoin[p * cout + cin + ch];
        }
      auto gInM = m1.backward(m2.backward(m3.backward(gm, c.t3), c.t2), c.t1);
      const auto gInR = r1.backward(r2.backward(gr, c.tr2), c.tr1);
      for (size_t i = 0; i < gInM.size(); ++i) gInM[i] += gInR[i];
      return gInM;
    }
    const int64_t half = cin / 2;
    std::vector<double> gKeep(static_cast<size_t>(hw) * half), gm(static_cast<size_t>(hw) * half);
    for (int64_t p = 0; p < hw; ++p)
      for (int64_t ch = 0; ch < half; ++ch) {
        gKeep[p * half + ch] = gJoin[p * cout + ch];
        gm[p * half + ch] = gJoin[p * cout + half + ch];
      }
    const auto gInM = m1.backward(m2.backward(m3.backward(gm, c.t3), c.t2), c.t1);
    // spatial size unchanged here; reassemble the [keep, main] halves
    std::vector<double> gIn(static_cast<size_t>(hw) * cin, 0.0);
    for (int64_t p = 0; p < hw; ++p)
      for (int64_t ch = 0; ch < half; ++ch) {
        gIn[p * cin + ch] = gKeep[p * half + ch];
        gIn[p * cin + half + ch] = gInM[p * half + ch];
      }
    return gIn;
  }

  void collect_params(std::vector<QatParam*>& out) override {
    out.push_back(&m1.w);
    out.push_back(&m2.w);
    out.push_back(&m3.w);
    if (down) {
      out.push_back(&r1.w);
      out.push_back(&r2.w);
    }
  }
  int64_t weight_bits() const override {
    int64_t b = m1.bits() + m2.bits() + m3.bits();
    if (down) b += r1.bits() + r2.bits();
    return b;
  }
};

// Plain single conv block (stem of the residual network).
struct StemBlock : Block {
  ConvUnit u;
  struct Cache : CacheBase {
    ConvUnit::Trace t;
  };
  StemBlock(int cin, int co, int stride, Rng& rng) { u.init(cin, co, 3, 3, stride, 1, 1, rng); }
  BitTensor forward(const BitTensor& in, CachePtr* cache) override {
    Cache* c = nullptr;
    if (cache) {
      *cache = std::make_unique<Cache>();
      c = static_cast<Cache*>(cache->get());
    }
    return u.forward(in, c ? &c->t : nullptr);
  }
  std::vector<double> backward(const std::vector<double>& gOut, const CacheBase& cache) override {
    return u.backward(gOut, static_cast<const Cache&>(cache).t);
  }
  void collect_params(std::vector<QatParam*>& out) override { out.push_back(&u.w); }
  int64_t weight_bits() const override { return u.bits(); }
};

}  // namespace fbnn
