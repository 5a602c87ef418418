#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fbnn/core.hpp"
#include "fbnn/tensor.hpp"

namespace fbnn {

// Stable uniform draws built directly on the 64-bit generator so trajectories
// are reproducible across standard libraries.
inline double rand_double(Rng& rng) { return (rng() >> 11) * 0x1.0p-53; }

inline int rand_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_double(rng);
}

// Binarized parameter: real proxy (clipped to [-1,1]) with its sign view kept
// in sync, plus gradient and Adam state.
struct QatParam {
  Shape shape;
  std::vector<double> proxy;
  BitTensor bin;
  std::vector<double> grad;
  std::vector<double> m, v;  // Adam first/second moments
  bool frozen = false;

  QatParam() = default;
  explicit QatParam(Shape s)
      : shape(std::move(s)),
        proxy(shape_numel(shape), 0.0),
        bin(shape),
        grad(proxy.size(), 0.0),
        m(proxy.size(), 0.0),
        v(proxy.size(), 0.0) {}

  int64_t size() const { return static_cast<int64_t>(proxy.size()); }

  void init_uniform(Rng& rng) {
    for (auto& p : proxy) p = rand_uniform(rng, -1.0, 1.0);
    refresh_bin();
  }

  void refresh_bin() {
    for (int64_t i = 0; i < size(); ++i) bin.set(i, proxy[i] >= 0.0 ? +1 : -1);
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Real-valued (non-binarized) parameter for auxiliary heads.
struct RealParam {
  Shape shape;
  std::vector<double> w;
  std::vector<double> grad;
  std::vector<double> m, v;

  RealParam() = default;
  explicit RealParam(Shape s)
      : shape(std::move(s)),
        w(shape_numel(shape), 0.0),
        grad(w.size(), 0.0),
        m(w.size(), 0.0),
        v(w.size(), 0.0) {}

  int64_t size() const { return static_cast<int64_t>(w.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Fixed activation scale S = K / sqrt(fanIn); derived from topology only.
struct ScaleSpec {
  int64_t fanIn = 1;
  double k = 1.0;
  double value() const { return k / std::sqrt(static_cast<double>(fanIn)); }
};

inline double scale_factor(int64_t fanIn, double k = 1.0) {
  check_cfg(fanIn >= 1, "scale_factor: fanIn must be positive");
  return k / std::sqrt(static_cast<double>(fanIn));
}

// Output-layer scale alpha = 1 / sqrt(c * fanIn * nClasses); recomputed when
// the class head grows.
struct OutputScaleSpec {
  int64_t fanIn = 1;
  int nClasses = 1;
  double c = 5.0;
  double value() const { return 1.0 / std::sqrt(c * static_cast<double>(fanIn) * nClasses); }
};

inline double output_alpha(int64_t fanIn, int nClasses, double c = 5.0) {
  check_cfg(fanIn >= 1 && nClasses >= 1 && c > 0, "output_alpha: args must be positive");
  return 1.0 / std::sqrt(c * static_cast<double>(fanIn) * nClasses);
}

// STE window: gradient passes where |x| <= 1 (closed interval).
inline double ste_mask(double x) { return std::abs(x) <= 1.0 ? 1.0 : 0.0; }

inline void ste_backward(const std::vector<double>& upstream, const std::vector<double>& x,
                         std::vector<double>& out) {
  check_dim(upstream.size() == x.size(), "ste_backward: shape mismatch");
  out.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = upstream[i] * ste_mask(x[i]);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update on (w, grad, m, v) at step t (1-based), in place.
inline void adam_update(std::vector<double>& w, const std::vector<double>& grad,
                        std::vector<double>& m, std::vector<double>& v, int64_t t, double lr,
                        const AdamConfig& cfg = {}) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < w.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// Optimizer facade owning the shared step counter. Binarized params are
// clipped to [-1,1] and re-signed after each step; frozen params are skipped.
struct Adam {
  double lr = 1e-4;
  AdamConfig cfg;
  int64_t t = 0;

  void begin_step() { ++t; }

  void step(QatParam& p) {
    if (p.frozen) return;
    adam_update(p.proxy, p.grad, p.m, p.v, t, lr, cfg);
    for (auto& w : p.proxy) w = std::clamp(w, -1.0, 1.0);
    p.refresh_bin();
  }

  void step(RealParam& p) { adam_update(p.w, p.grad, p.m, p.v, t, lr, cfg); }
};

// Reduce-on-plateau on a maximized metric: after `patience` epochs without
// improvement the learning rate is multiplied by `factor`.
struct PlateauScheduler {
  double factor = 0.5;
  int patience = 5;
  double best = -std::numeric_limits<double>::infinity();
  int bad = 0;

  double observe(double metric, double lr) {
    if (metric > best) {
      best = metric;
      bad = 0;
      return lr;
    }
    if (++bad > patience) {
      bad = 0;
      return lr * factor;
    }
    return lr;
  }
};

// Early stop on a maximized metric; remembers the best epoch so the caller can
// restore the weights snapshotted there.
struct EarlyStopper {
  int patience = 12;
  double best = -std::numeric_limits<double>::infinity();
  int bestEpoch = -1;
  int bad = 0;

  // returns true when training should stop (after recording this epoch)
  bool observe(double metric, int epoch) {
    if (metric > best) {
      best = metric;
      bestEpoch = epoch;
      bad = 0;
      return false;
    }
    return ++bad > patience;
  }
};

struct AugmentConfig {
  bool hflip = true;
  int maxTranslate = 2;
  double contrastLo = 0.8;
  double contrastHi = 1.2;
};

struct TrainConfig {
  int batchSize = 64;
  double initialLr = 1e-4;
  double plateauFactor = 0.5;
  int plateauPatience = 5;
  int stopPatience = 12;
  int maxEpochs = 200;
  uint64_t seed = 0;
  bool augmentEnabled = true;
  AugmentConfig augment;

  void validate() const {
    check_cfg(batchSize >= 1, "TrainConfig: batchSize must be >= 1");
    check_cfg(initialLr > 0, "TrainConfig: initialLr must be > 0");
    check_cfg(maxEpochs >= 1, "TrainConfig: maxEpochs must be >= 1");
  }
};

}  // namespace fbnn
