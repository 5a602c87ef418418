#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <vector>

#include "fbnn/arch.hpp"
#include "fbnn/augment.hpp"
#include "fbnn/data.hpp"
#include "fbnn/encode.hpp"
#include "fbnn/loss.hpp"
#include "fbnn/metrics.hpp"

namespace fbnn {

struct EncodeSpec {
  enum class Kind { tycc, trgb };
  Kind kind = Kind::tycc;
  int levels = 16;  // chroma levels for tycc (luma gets twice as many)
};

inline BitTensor encode_input(const Image8& rgb, const EncodeSpec& e) {
  return e.kind == EncodeSpec::Kind::tycc ? encode_tycc(rgb, e.levels) : encode_trgb(rgb);
}

// ---------------------------------------------------------------------------
// Augmentation for the self-supervised views: the standard transform plus
// brightness/saturation jitter and a random crop scaled back up.
// ---------------------------------------------------------------------------

struct StrongAugmentConfig {
  AugmentConfig base;
  double jitterLo = 0.8, jitterHi = 1.2;  // brightness and saturation factors
  double cropArea = 0.875;                // crop keeps this fraction of the area
};

// Draw order is pinned for reproducibility: base params, brightness,
// saturation, crop y0, crop x0.
inline Image8 strong_augment(const Image8& rgb, StrongAugmentConfig cfg, Rng& rng) {
  const AugmentParams base = sample_augment(rng, cfg.base);
  const double bright = rand_uniform(rng, cfg.jitterLo, cfg.jitterHi);
  const double sat = rand_uniform(rng, cfg.jitterLo, cfg.jitterHi);
  const int ch = std::max<int>(1, static_cast<int>(std::lround(rgb.h * std::sqrt(cfg.cropArea))));
  const int cw = std::max<int>(1, static_cast<int>(std::lround(rgb.w * std::sqrt(cfg.cropArea))));
  const int y0 = rand_int(rng, 0, rgb.h - ch);
  const int x0 = rand_int(rng, 0, rgb.w - cw);

  Image8 img = apply_augment(rgb, base);
  auto q8 = [](double v) {
    return static_cast<uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
  };
  for (auto& v : img.v) v = q8(bright * v);
  if (img.c == 3) {
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        const double grey = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                            0.114 * img.at(y, x, 2);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = q8(grey + sat * (img.at(y, x, c) - grey));
      }
  }
  Image8 out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const int sy = y0 + static_cast<int>(static_cast<int64_t>(y) * ch / img.h);
      const int sx = x0 + static_cast<int>(static_cast<int64_t>(x) * cw / img.w);
      for (int c = 0; c < img.c; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sample sources: the trainer walks a permutation of [0, n) every epoch and
// asks the source to materialize each element (augmentation draws use the
// trainer's RNG so runs are reproducible end to end).
// ---------------------------------------------------------------------------

struct TrainSample {
  BitTensor input;        // encoded image, or a latent when atLatent is set
  bool atLatent = false;  // latent samples skip the feature extractor
  int label = 0;
};

using SampleSource = std::function<TrainSample(int64_t, Rng&)>;

inline SampleSource dataset_source(const LabeledDataset& ds, std::vector<int> idx,
                                   const EncodeSpec& enc, const TrainConfig& cfg) {
  return [&ds, idx = std::move(idx), enc, cfg](int64_t i, Rng& rng) {
    const Image8& img = ds.images[idx[static_cast<size_t>(i)]];
    TrainSample s;
    s.input = encode_input(cfg.augmentEnabled ? augment(img, rng, cfg.augment) : img, enc);
    s.label = ds.labels[idx[static_cast<size_t>(i)]];
    return s;
  };
}

// ---------------------------------------------------------------------------
// Supervised losses, evaluated one sample at a time. All three objectives are
// means of per-sample terms, so a single row with the true batch size gives
// exactly the batch gradient slice.
// ---------------------------------------------------------------------------

struct SupervisedLossSpec {
  enum class Kind { cce, fcce, hinge };
  Kind kind = Kind::cce;
  double focalNu = 2.0;
};

struct RowLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

inline RowLoss supervised_row(const SupervisedLossSpec& ls, const std::vector<double>& logitsRow,
                              int label, const std::vector<double>& w, int64_t batchSize) {
  Tensor t(Shape{1, static_cast<int64_t>(logitsRow.size())});
  t.v = logitsRow;
  LossGrad lg;
  switch (ls.kind) {
    case SupervisedLossSpec::Kind::cce:
      lg = weighted_cce(t, {label}, w);
      break;
    case SupervisedLossSpec::Kind::fcce:
      lg = focal_cce(t, {label}, w, ls.focalNu);
      break;
    case SupervisedLossSpec::Kind::hinge:
      lg = squared_hinge(t, {label}, w);
      break;
  }
  RowLoss out;
  out.loss = lg.loss / static_cast<double>(batchSize);
  out.grad = std::move(lg.grad.v);
  for (auto& g : out.grad) g /= static_cast<double>(batchSize);
  return out;
}

inline std::vector<double> uniform_weights(int64_t nClasses) {
  return std::vector<double>(static_cast<size_t>(nClasses), 1.0);
}

// ---------------------------------------------------------------------------
// Evaluation helpers. FBNN_THREADS caps how many worker threads score a
// dataset; the model is only read.
// ---------------------------------------------------------------------------

inline int env_threads() {
  const char* s = std::getenv("FBNN_THREADS");
  if (!s) return 1;
  const int t = std::atoi(s);
  return t < 1 ? 1 : t;
}

inline std::vector<int> predict_dataset(Model& model, const LabeledDataset& ds,
                                        const std::vector<int>& idx, const EncodeSpec& enc) {
  std::vector<int> preds(idx.size());
  auto worker = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      preds[i] = model.predict(encode_input(ds.images[idx[i]], enc));
  };
  const size_t threads =
      std::min<size_t>(static_cast<size_t>(env_threads()), std::max<size_t>(idx.size(), 1));
  if (threads <= 1) {
    worker(0, idx.size());
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (idx.size() + threads - 1) / threads;
    for (size_t t = 0; t < threads; ++t)
      pool.emplace_back(worker, t * chunk, std::min(idx.size(), (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }
  return preds;
}

inline std::vector<int> subset_labels(const LabeledDataset& ds, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(ds.labels[i]);
  return out;
}

inline double accuracy_on(Model& model, const LabeledDataset& ds, const std::vector<int>& idx,
                          const EncodeSpec& enc) {
  return accuracy(predict_dataset(model, ds, idx, enc), subset_labels(ds, idx));
}

// ---------------------------------------------------------------------------
// Supervised training loop: Adam over sign-proxied parameters, plateau lr
// decay, early stopping with best-weights restore. Deterministic for a fixed
// seed and sample source.
// ---------------------------------------------------------------------------

struct TrainStats {
  int epochsRun = 0;
  int bestEpoch = -1;
  double bestMetric = 0.0;
  std::vector<double> valHistory;
  std::vector<double> lossHistory;
};

inline TrainStats train_supervised(Model& model, const SampleSource& source, int64_t numSamples,
                                   const std::vector<double>& classWeights,
                                   const std::function<double()>& validate,
                                   const TrainConfig& cfg, const SupervisedLossSpec& ls = {}) {
  cfg.validate();
  check_cfg(numSamples > 0, "train_supervised: empty sample source");
  const std::vector<double> w =
      classWeights.empty() ? uniform_weights(model.n_classes()) : classWeights;
  check_dim(static_cast<int64_t>(w.size()) == model.n_classes(),
            "train_supervised: class weight count != classifier width");

  std::vector<QatParam*> params;
  model.collect_params(params);
  Adam adam{cfg.initialLr};
  PlateauScheduler sched;
  sched.factor = cfg.plateauFactor;
  sched.patience = cfg.plateauPatience;
  EarlyStopper stop;
  stop.patience = cfg.stopPatience;
  Rng rng(derive_seed(cfg.seed, 0x7a11));
  std::vector<int64_t> order(static_cast<size_t>(numSamples));
  std::iota(order.begin(), order.end(), 0);

  TrainStats st;
  ParamSnapshot best = snapshot_params(model);
  double lr = cfg.initialLr;
  for (int epoch = 0; epoch < cfg.maxEpochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epochLoss = 0.0;
    for (int64_t start = 0; start < numSamples; start += cfg.batchSize) {
      const int64_t b = std::min<int64_t>(cfg.batchSize, numSamples - start);
      model.zero_grads();
      for (int64_t k = 0; k < b; ++k) {
        const TrainSample s = source(order[static_cast<size_t>(start + k)], rng);
        ForwardCache cache;
        const IntTensor z = s.atLatent ? model.scores_from_latent(s.input, &cache)
                                       : model.scores(s.input, &cache);
        const RowLoss rl = supervised_row(ls, model.head.logits(z), s.label, w, b);
        epochLoss += rl.loss * static_cast<double>(b);
        model.backward(rl.grad, nullptr, cache);
      }
      adam.lr = lr;
      adam.begin_step();
      for (auto* p : params) adam.step(*p);
    }
    st.lossHistory.push_back(epochLoss / static_cast<double>(numSamples));
    const double val = validate();
    st.valHistory.push_back(val);
    st.epochsRun = epoch + 1;
    lr = sched.observe(val, lr);
    const bool improved = val > stop.best;
    const bool stopNow = stop.observe(val, epoch);
    if (improved) best = snapshot_params(model);
    if (stopNow) break;
  }
  st.bestEpoch = stop.bestEpoch;
  st.bestMetric = stop.best;
  restore_params(model, best);
  return st;
}

// ---------------------------------------------------------------------------
// Pre-training with the combined objective
//   alpha * classification + beta * twin-embedding decorrelation + gamma *
//   latent balance.
// The classification/balance terms use the standard augmentation; the twin
// views use the strong one and pass through a real-valued projector that is
// trained alongside the model and discarded afterwards.
// ---------------------------------------------------------------------------

struct PretrainSpec {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
  double btLambda = 1e-5;
  bool frSigned = false;
  int projectorHidden = 2048;
  SupervisedLossSpec sup;
  StrongAugmentConfig strong;
};

inline TrainStats train_pretrain(Model& model, const LabeledDataset& ds,
                                 const std::vector<int>& trainIdx,
                                 const std::vector<double>& classWeights,
                                 const std::function<double()>& validate, const EncodeSpec& enc,
                                 const TrainConfig& cfg, const PretrainSpec& ps,
                                 const std::unordered_map<int, int>* labelMap = nullptr) {
  cfg.validate();
  check_cfg(!trainIdx.empty(), "train_pretrain: empty training set");
  const bool useSsl = ps.beta != 0.0;
  const bool useFr = ps.gamma != 0.0;
  const int64_t n = static_cast<int64_t>(trainIdx.size());
  const int64_t D = model.latentDim;
  const std::vector<double> w =
      classWeights.empty() ? uniform_weights(model.n_classes()) : classWeights;

  std::vector<QatParam*> params;
  model.collect_params(params);
  Projector proj;
  Rng projRng(derive_seed(cfg.seed, 0x9201));
  if (useSsl) proj.init(static_cast<int>(D), ps.projectorHidden, projRng);
  Adam adam{cfg.initialLr};
  PlateauScheduler sched;
  sched.factor = cfg.plateauFactor;
  sched.patience = cfg.plateauPatience;
  EarlyStopper stop;
  stop.patience = cfg.stopPatience;
  Rng rng(derive_seed(cfg.seed, 0x7a11));
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  TrainStats st;
  ParamSnapshot best = snapshot_params(model);
  double lr = cfg.initialLr;
  for (int epoch = 0; epoch < cfg.maxEpochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epochLoss = 0.0;
    for (int64_t start = 0; start < n; start += cfg.batchSize) {
      const int64_t b = std::min<int64_t>(cfg.batchSize, n - start);
      model.zero_grads();
      std::fill(proj.w1.grad.begin(), proj.w1.grad.end(), 0.0);
      std::fill(proj.w2.grad.begin(), proj.w2.grad.end(), 0.0);

      // pass 1: materialize all views, collect logits and latents
      std::vector<BitTensor> inP(b), inA(useSsl ? b : 0), inB(useSsl ? b : 0);
      std::vector<int> labels(b);
      Tensor logits(Shape{b, model.n_classes()});
      Tensor latP(Shape{b, D}), latA, latB;
      if (useSsl) {
        latA = Tensor(Shape{b, D});
        latB = Tensor(Shape{b, D});
      }
      for (int64_t k = 0; k < b; ++k) {
        const int gi = trainIdx[static_cast<size_t>(order[static_cast<size_t>(start + k)])];
        const Image8& img = ds.images[gi];
        labels[static_cast<size_t>(k)] = labelMap ? labelMap->at(ds.labels[gi]) : ds.labels[gi];
        inP[k] = encode_input(cfg.augmentEnabled ? augment(img, rng, cfg.augment) : img, enc);
        if (useSsl) {
          inA[k] = encode_input(strong_augment(img, ps.strong, rng), enc);
          inB[k] = encode_input(strong_augment(img, ps.strong, rng), enc);
        }
        const BitTensor zl = model.forward_latent(inP[k], nullptr);
        const auto zr = zl.unpack_real();
        std::copy(zr.begin(), zr.end(), latP.v.begin() + k * D);
        const std::vector<double> lg = model.head.logits(model.scores_from_latent(zl, nullptr));
        std::copy(lg.begin(), lg.end(), logits.v.begin() + k * model.n_classes());
        if (useSsl) {
          const auto za = model.forward_latent(inA[k], nullptr).unpack_real();
          const auto zb = model.forward_latent(inB[k], nullptr).unpack_real();
          std::copy(za.begin(), za.end(), latA.v.begin() + k * D);
          std::copy(zb.begin(), zb.end(), latB.v.begin() + k * D);
        }
      }

      // batch-level losses and their input gradients
      LossGrad sup;
      switch (ps.sup.kind) {
        case SupervisedLossSpec::Kind::cce:
          sup = weighted_cce(logits, labels, w);
          break;
        case SupervisedLossSpec::Kind::fcce:
          sup = focal_cce(logits, labels, w, ps.sup.focalNu);
          break;
        case SupervisedLossSpec::Kind::hinge:
          sup = squared_hinge(logits, labels, w);
          break;
      }
      LossGrad fr;
      if (useFr) fr = feature_reg(latP, ps.frSigned);
      Tensor gxA, gxB;
      double sslLoss = 0.0;
      Projector::Ctx ctxA, ctxB;
      if (useSsl) {
        const Tensor outA = proj.forward(latA, ctxA);
        const Tensor outB = proj.forward(latB, ctxB);
        BarlowGrad bt = barlow_twins(outA, outB, ps.btLambda);
        sslLoss = bt.loss;
        for (auto& g : bt.g1.v) g *= ps.beta;
        for (auto& g : bt.g2.v) g *= ps.beta;
        gxA = proj.backward(bt.g1, ctxA);
        gxB = proj.backward(bt.g2, ctxB);
      }
      epochLoss += (ps.alpha * sup.loss + ps.beta * sslLoss + (useFr ? ps.gamma * fr.loss : 0.0)) *
                   static_cast<double>(b);

      // pass 2: re-run each view with a cache and push its gradient slice
      const std::vector<double> zeroLogits(static_cast<size_t>(model.n_classes()), 0.0);
      for (int64_t k = 0; k < b; ++k) {
        std::vector<double> gLog(zeroLogits.size());
        for (int64_t c = 0; c < model.n_classes(); ++c)
          gLog[static_cast<size_t>(c)] = ps.alpha * sup.grad[k * model.n_classes() + c];
        std::vector<double> gLat(static_cast<size_t>(D), 0.0);
        if (useFr)
          for (int64_t d = 0; d < D; ++d)
            gLat[static_cast<size_t>(d)] = ps.gamma * fr.grad[k * D + d];
        ForwardCache cache;
        model.scores(inP[k], &cache);
        model.backward(gLog, useFr ? &gLat : nullptr, cache);
        if (useSsl) {
          std::vector<double> ga(static_cast<size_t>(D)), gb(static_cast<size_t>(D));
          for (int64_t d = 0; d < D; ++d) {
            ga[static_cast<size_t>(d)] = gxA[k * D + d];
            gb[static_cast<size_t>(d)] = gxB[k * D + d];
          }
          ForwardCache ca, cb;
          model.scores(inA[k], &ca);
          model.backward(zeroLogits, &ga, ca);
          model.scores(inB[k], &cb);
          model.backward(zeroLogits, &gb, cb);
        }
      }

      adam.lr = lr;
      adam.begin_step();
      for (auto* p : params) adam.step(*p);
      if (useSsl) {
        adam.step(proj.w1);
        adam.step(proj.w2);
      }
    }
    st.lossHistory.push_back(epochLoss / static_cast<double>(n));
    const double val = validate();
    st.valHistory.push_back(val);
    st.epochsRun = epoch + 1;
    lr = sched.observe(val, lr);
    const bool improved = val > stop.best;
    const bool stopNow = stop.observe(val, epoch);
    if (improved) best = snapshot_params(model);
    if (stopNow) break;
  }
  st.bestEpoch = stop.bestEpoch;
  st.bestMetric = stop.best;
  restore_params(model, best);
  return st;
}

}  // namespace fbnn
