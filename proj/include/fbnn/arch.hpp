#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fbnn/layers.hpp"

namespace fbnn {

// Per-sample forward caches for the backward pass.
struct ForwardCache {
  std::vector<CachePtr> fe, clf;
  BitTensor latent;  // FE output (what latent replay stores)
  BitTensor clfOut;  // classifier features entering the output head
};

// A model is a feature-extractor chain to the binary latent, a classifier
// chain, and the class head. The FE/classifier boundary is the latent.
struct Model {
  std::string archId;  // human-readable layer descriptor
  Shape inputShape;    // {H, W, C} of the encoded input
  int latentDim = 1024;
  std::vector<std::unique_ptr<Block>> fe;
  std::vector<std::unique_ptr<Block>> clf;
  OutputHead head;
  bool feFrozen = false;

  int n_classes() const { return head.nClasses; }

  uint64_t arch_digest() const { return fnv1a64(archId); }

  int64_t weight_bits() const {
    int64_t b = head.weight_bits();
    for (const auto& x : fe) b += x->weight_bits();
    for (const auto& x : clf) b += x->weight_bits();
    return b;
  }

  void collect_params(std::vector<QatParam*>& out) {
    for (auto& b : fe) b->collect_params(out);
    for (auto& b : clf) b->collect_params(out);
    out.push_back(&head.w);
  }

  void set_fe_frozen(bool frozen) {
    feFrozen = frozen;
    std::vector<QatParam*> ps;
    for (auto& b : fe) b->collect_params(ps);
    for (auto* p : ps) p->frozen = frozen;
  }

  BitTensor forward_latent(const BitTensor& encoded, ForwardCache* cache) {
    BitTensor x = encoded;
    if (cache) cache->fe.resize(fe.size());
    for (size_t i = 0; i < fe.size(); ++i) x = fe[i]->forward(x, cache ? &cache->fe[i] : nullptr);
    check_dim(x.size() == latentDim, "Model: FE output width != latent dimension");
    if (cache) cache->latent = x;
    return x;
  }

  IntTensor scores_from_latent(const BitTensor& latent, ForwardCache* cache) {
    BitTensor x = latent;
    if (cache) cache->clf.resize(clf.size());
    for (size_t i = 0; i < clf.size(); ++i) x = clf[i]->forward(x, cache ? &cache->clf[i] : nullptr);
    if (cache) cache->clfOut = x;
    return head.accumulate(x);
  }

  IntTensor scores(const BitTensor& encoded, ForwardCache* cache = nullptr) {
    return scores_from_latent(forward_latent(encoded, cache), cache);
  }

  int predict(const BitTensor& encoded) {
    const IntTensor z = scores(encoded);
    int best = 0;
    for (size_t i = 1; i < z.v.size(); ++i)
      if (z.v[i] > z.v[best]) best = static_cast<int>(i);
    return best;
  }

  // Backward from dL/dlogits (+ optional extra dL/dlatent, e.g. from losses
  // attached at the latent). Param grads accumulate; stops at the frozen FE.
  void backward(const std::vector<double>& gLogits, const std::vector<double>* gLatentExtra,
                const ForwardCache& cache) {
    std::vector<double> g = head.backward(gLogits, cache.clfOut);
    for (size_t i = clf.size(); i-- > 0;) g = clf[i]->backward(g, *cache.clf[i]);
    if (gLatentExtra) {
      check_dim(gLatentExtra->size() == g.size(), "Model::backward: latent grad width mismatch");
      for (size_t i = 0; i < g.size(); ++i) g[i] += (*gLatentExtra)[i];
    }
    if (feFrozen || cache.fe.empty()) return;  // samples may enter at the latent
    for (size_t i = fe.size(); i-- > 0;) g = fe[i]->backward(g, *cache.fe[i]);
  }

  void zero_grads() {
    std::vector<QatParam*> ps;
    collect_params(ps);
    for (auto* p : ps) p->zero_grad();
  }
};

// Trainable state of a model (proxies + optimizer moments), used for
// best-weights restore and checkpointing.
struct ParamSnapshot {
  std::vector<std::vector<double>> proxy, m, v;
};

inline ParamSnapshot snapshot_params(Model& model) {
  std::vector<QatParam*> ps;
  model.collect_params(ps);
  ParamSnapshot s;
  for (auto* p : ps) {
    s.proxy.push_back(p->proxy);
    s.m.push_back(p->m);
    s.v.push_back(p->v);
  }
  return s;
}

inline void restore_params(Model& model, const ParamSnapshot& s) {
  std::vector<QatParam*> ps;
  model.collect_params(ps);
  check_dim(ps.size() == s.proxy.size(), "restore_params: parameter count mismatch");
  for (size_t i = 0; i < ps.size(); ++i) {
    check_dim(ps[i]->proxy.size() == s.proxy[i].size(), "restore_params: size mismatch");
    ps[i]->proxy = s.proxy[i];
    ps[i]->m = s.m[i];
    ps[i]->v = s.v[i];
    ps[i]->refresh_bin();
  }
}

// ---------------------------------------------------------------------------
// Head-network builder: three conv pairs with (width,1),(2w,2),(4w,4)
// filters/groups and 2x2 pools, the pooling bottleneck to the latent, then
// two skip classifier blocks and the class head.
struct BnnConfig {
  int h = 32, w = 32;
  int inChannels = 64;  // thermometer channels
  int nClasses = 10;
  int width = 128;      // first-stage filters
  int latentDim = 1024;
  uint64_t seed = 0;
};

inline Model build_3mb_bnn(const BnnConfig& cfg) {
  check_cfg(cfg.h % 8 == 0 && cfg.w % 8 == 0, "build_3mb_bnn: spatial dims must divide by 8");
  check_cfg(cfg.width % 4 == 0, "build_3mb_bnn: width must divide by 4");
  Model m;
  m.inputShape = {cfg.h, cfg.w, cfg.inChannels};
  m.latentDim = cfg.latentDim;
  Rng rng(derive_seed(cfg.seed, 0xa2c4));
  m.fe.push_back(std::make_unique<ConvPairBlock>(cfg.inChannels, cfg.width, 1, 1, rng));
  m.fe.push_back(std::make_unique<ConvPairBlock>(cfg.width, 2 * cfg.width, 2, 2, rng));
  m.fe.push_back(std::make_unique<ConvPairBlock>(2 * cfg.width, 4 * cfg.width, 4, 4, rng));
  m.fe.push_back(std::make_unique<LgapBlock>(cfg.h / 8, cfg.w / 8, 4 * cfg.width, cfg.latentDim, 2, rng));
  m.clf.push_back(std::make_unique<DenseSkipBlock>(cfg.latentDim, true, rng));
  m.clf.push_back(std::make_unique<DenseSkipBlock>(cfg.latentDim, false, rng));
  m.head.init(cfg.latentDim, cfg.nClasses, rng);
  std::ostringstream id;
  id << "bnn3mb h" << cfg.h << " w" << cfg.w << " c" << cfg.inChannels << " width" << cfg.width
     << " latent" << cfg.latentDim << " classes" << cfg.nClasses;
  m.archId = id.str();
  return m;
}

// ---------------------------------------------------------------------------
// Residual builder: stride-2 stem, three stages of (down + residual) blocks
// totalling 17, pooling bottleneck, and the same classifier stack.
struct ResBnnConfig {
  int h = 128, w = 128;
  int inChannels = 64;
  int nClasses = 50;
  int stemChannels = 64;
  uint64_t seed = 0;
};

inline Model build_res_bnn(const ResBnnConfig& cfg) {
  check_cfg(cfg.h % 32 == 0 && cfg.w % 32 == 0, "build_res_bnn: spatial dims must divide by 32");
  Model m;
  m.inputShape = {cfg.h, cfg.w, cfg.inChannels};
  m.latentDim = 1024;
  Rng rng(derive_seed(cfg.seed, 0x2e58));
  m.fe.push_back(std::make_unique<StemBlock>(cfg.inChannels, cfg.stemChannels, 2, rng));
  const int stageRes[3] = {4, 5, 5};  // residual blocks per stage (plus one down each): 17 total
  int ch = cfg.stemChannels;
  for (int stage = 0; stage < 3; ++stage) {
    m.fe.push_back(std::make_unique<ResBlock>(true, ch, 2, 8, rng));
    ch *= 2;
    for (int i = 0; i < stageRes[stage]; ++i)
      m.fe.push_back(std::make_unique<ResBlock>(false, ch, 2, 8, rng));
  }
  const int finalSpatial = cfg.h / 16;  // stem /2 + three downs /2 each
  m.fe.push_back(std::make_unique<LgapBlock>(finalSpatial, cfg.w / 16, ch, 1024, 2, rng));
  m.clf.push_back(std::make_unique<DenseSkipBlock>(1024, true, rng));
  m.clf.push_back(std::make_unique<DenseSkipBlock>(1024, false, rng));
  m.head.init(1024, cfg.nClasses, rng);
  std::ostringstream id;
  id << "resbnn h" << cfg.h << " w" << cfg.w << " c" << cfg.inChannels << " stem"
     << cfg.stemChannels << " classes" << cfg.nClasses;
  m.archId = id.str();
  return m;
}

// Widen the class head in place (rows for existing classes preserved
// verbatim); the output scale follows the new class count.
inline void grow_head(Model& model, int newNClasses, uint64_t seed) {
  Rng rng(derive_seed(seed, 0x9406));
  model.head.grow(newNClasses, rng);
  const auto pos = model.archId.rfind(" classes");
  if (pos != std::string::npos) model.archId.resize(pos);
  model.archId += " classes" + std::to_string(newNClasses);
}

}  // namespace fbnn
