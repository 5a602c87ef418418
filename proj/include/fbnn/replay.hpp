#pragma once

#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "fbnn/train.hpp"

namespace fbnn {

enum class BufferMode { native, latent };

enum class Strategy { naive, naiveReset, cumulative, cumulativeReset, erNative, erLatent };

inline bool strategy_uses_buffer(Strategy s) {
  return s == Strategy::erNative || s == Strategy::erLatent;
}
inline bool strategy_resets(Strategy s) {
  return s == Strategy::naiveReset || s == Strategy::cumulativeReset;
}
inline bool strategy_cumulative(Strategy s) {
  return s == Strategy::cumulative || s == Strategy::cumulativeReset;
}

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::naive: return "naive";
    case Strategy::naiveReset: return "naive-reset";
    case Strategy::cumulative: return "cumulative";
    case Strategy::cumulativeReset: return "cumulative-reset";
    case Strategy::erNative: return "er-native";
    case Strategy::erLatent: return "er-latent";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& s) {
  if (s == "naive") return Strategy::naive;
  if (s == "naive-reset") return Strategy::naiveReset;
  if (s == "cumulative") return Strategy::cumulative;
  if (s == "cumulative-reset") return Strategy::cumulativeReset;
  if (s == "er-native") return Strategy::erNative;
  if (s == "er-latent") return Strategy::erLatent;
  throw ConfigError("unknown strategy: " + s);
}

// ---------------------------------------------------------------------------
// Memory accounting
// ---------------------------------------------------------------------------

inline int label_bits(int64_t totalClasses) {
  check_cfg(totalClasses >= 1, "label_bits: need at least one class");
  int bits = 0;
  while ((int64_t{1} << bits) < totalClasses) ++bits;
  return bits;
}

// Samples that fit in `maxBits` of replay memory. Native samples store the
// quantized image plus a label; latent samples store the latent plus a label.
inline int64_t capacity_from_bits(int64_t maxBits, BufferMode mode, int h, int w,
                                  int64_t totalClasses, int64_t latentDim = 1024,
                                  int bitsPerPixel = 0) {
  check_cfg(maxBits >= 0, "capacity_from_bits: negative budget");
  if (bitsPerPixel == 0) bitsPerPixel = native_bits_per_pixel(16);
  const int64_t payload = mode == BufferMode::native
                              ? static_cast<int64_t>(bitsPerPixel) * h * w
                              : latentDim;
  const int64_t perSample = payload + label_bits(totalClasses);
  const int64_t ms = maxBits / perSample;
  check_cfg(ms >= 1, "capacity_from_bits: budget below one sample (" +
                         std::to_string(perSample) + " bits needed)");
  return ms;
}

// ---------------------------------------------------------------------------
// Class-balanced bounded replay buffer
// ---------------------------------------------------------------------------

struct BufferEntry {
  QuantizedImage image;  // native payload
  BitTensor latent;      // latent payload
  int label = 0;         // global class id
};

struct ReplayBuffer {
  BufferMode mode = BufferMode::native;
  int64_t maxSamples = 0;  // hard sample cap
  int64_t maxBits = 0;     // informative bit budget (0 = derived per sample)
  int labelBits = 1;
  uint64_t seed = 0;
  int64_t updatesDone = 0;  // with `seed`, fully determines every past and future draw
  std::vector<BufferEntry> entries;
  int64_t quotaZeroClasses = 0;  // classes whose balanced quota reached 0

  ReplayBuffer() = default;
  ReplayBuffer(BufferMode m, int64_t ms, int lb, uint64_t seed_, int64_t mb = 0)
      : mode(m), maxSamples(ms), maxBits(mb), labelBits(lb), seed(seed_) {}

  int64_t size() const { return static_cast<int64_t>(entries.size()); }

  static int64_t payload_bits(const BufferEntry& e, BufferMode mode) {
    if (mode == BufferMode::latent) return e.latent.size();
    return static_cast<int64_t>(native_bits_per_pixel(e.image.n)) * e.image.h * e.image.w;
  }

  int64_t used_bits() const {
    int64_t total = 0;
    for (const auto& e : entries) total += payload_bits(e, mode) + labelBits;
    return total;
  }

  std::map<int, int64_t> class_counts() const {
    std::map<int, int64_t> c;
    for (const auto& e : entries) ++c[e.label];
    return c;
  }

  std::vector<int> classes() const {
    std::vector<int> out;
    for (const auto& [cls, n] : class_counts()) out.push_back(cls);
    return out;
  }

  // Balanced partition of maxSamples over the seen classes; remainder slots
  // go to randomly drawn classes.
  std::map<int, int64_t> quotas(const std::vector<int>& seenClasses, Rng& rng) {
    const auto k = static_cast<int64_t>(seenClasses.size());
    check_cfg(k > 0, "ReplayBuffer::quotas: no classes");
    std::map<int, int64_t> q;
    const int64_t base = maxSamples / k, rem = maxSamples % k;
    std::vector<int> order = seenClasses;
    std::shuffle(order.begin(), order.end(), rng);
    for (int64_t i = 0; i < k; ++i) q[order[i]] = base + (i < rem ? 1 : 0);
    quotaZeroClasses = 0;
    for (const auto& [cls, n] : q)
      if (n == 0) ++quotaZeroClasses;
    return q;
  }

  // Rebalances for the classes of a finished task: shrinks over-quota classes
  // by uniform random eviction, fills new classes with uniform random picks
  // from their pools. When some pool cannot reach its quota, the spare slots
  // go to the smallest classes that still have supply, so the buffer is as
  // full and as balanced as the data allows.
  void update(std::vector<BufferEntry> newSamples) {
    Rng rng(derive_seed(seed, 0xbf50000 + static_cast<uint64_t>(updatesDone)));
    ++updatesDone;
    std::map<int, std::vector<BufferEntry>> pools;
    for (auto& s : newSamples) pools[s.label].push_back(std::move(s));
    for (auto& [cls, pool] : pools) std::shuffle(pool.begin(), pool.end(), rng);

    std::map<int, std::vector<BufferEntry>> held;
    for (auto& e : entries) held[e.label].push_back(std::move(e));
    entries.clear();

    std::set<int> seen;
    for (const auto& [cls, v] : held) seen.insert(cls);
    for (const auto& [cls, v] : pools) {
      check_cfg(!held.count(cls), "ReplayBuffer::update: task classes must be new");
      seen.insert(cls);
    }
    const std::vector<int> seenVec(seen.begin(), seen.end());
    const auto quota = quotas(seenVec, rng);

    std::map<int, int64_t> target, supply;
    int64_t total = 0;
    for (int cls : seenVec) {
      supply[cls] = static_cast<int64_t>(held.count(cls) ? held[cls].size() : pools[cls].size());
      target[cls] = std::min(quota.at(cls), supply[cls]);
      total += target[cls];
    }
    while (total < maxSamples) {  // redistribute slots unused by small pools
      int best = -1;
      for (int cls : seenVec)
        if (target[cls] < supply[cls] && (best == -1 || target[cls] < target[best])) best = cls;
      if (best == -1) break;
      ++target[best];
      ++total;
    }

    for (int cls : seenVec) {
      auto& src = held.count(cls) ? held[cls] : pools[cls];
      std::shuffle(src.begin(), src.end(), rng);  // uniform eviction / selection
      for (int64_t i = 0; i < target[cls]; ++i) entries.push_back(std::move(src[i]));
    }
  }
};

// ---------------------------------------------------------------------------
// Class ordering: the head index of a class is its order of appearance in the
// scenario (pre-training classes first, then per task). Dataset labels are
// translated to head indices for training and back for evaluation.
// ---------------------------------------------------------------------------

struct ClassMap {
  std::vector<int> order;               // head index -> dataset class id
  std::unordered_map<int, int> toHead;  // dataset class id -> head index

  void extend(const std::vector<int>& classes) {
    for (int cls : classes) {
      check_cfg(!toHead.count(cls), "ClassMap: class appears twice in scenario");
      toHead[cls] = static_cast<int>(order.size());
      order.push_back(cls);
    }
  }
  int size() const { return static_cast<int>(order.size()); }
};

// ---------------------------------------------------------------------------
// Training stream over buffer ∪ current data: each epoch covers every buffered
// sample and every current-task sample exactly once (in shuffled order).
// Native buffered samples are decoded back to RGB and re-augmented per draw;
// latent buffered samples enter the network at the classifier.
// ---------------------------------------------------------------------------

struct TaskStream {
  int64_t count = 0;
  SampleSource source;
  std::vector<int64_t> headCounts;  // per-head-class sample counts of one epoch
};

inline TaskStream make_task_stream(const ReplayBuffer* buf, const LabeledDataset& ds,
                                   std::vector<int> idx, const ClassMap& cm,
                                   const EncodeSpec& enc, const TrainConfig& cfg, int headN) {
  TaskStream ts;
  const int64_t nBuf = buf ? buf->size() : 0;
  ts.count = nBuf + static_cast<int64_t>(idx.size());
  ts.headCounts.assign(static_cast<size_t>(headN), 0);
  if (buf)
    for (const auto& e : buf->entries) ++ts.headCounts[static_cast<size_t>(cm.toHead.at(e.label))];
  for (int i : idx) ++ts.headCounts[static_cast<size_t>(cm.toHead.at(ds.labels[i]))];

  ts.source = [buf, nBuf, &ds, idx = std::move(idx), toHead = cm.toHead, enc,
               cfg](int64_t i, Rng& rng) {
    TrainSample s;
    if (i < nBuf) {
      const BufferEntry& e = buf->entries[static_cast<size_t>(i)];
      if (buf->mode == BufferMode::latent) {
        s.input = e.latent;
        s.atLatent = true;
      } else {
        Image8 rgb = to_rgb(dequantize(e.image));
        if (cfg.augmentEnabled) rgb = augment(rgb, rng, cfg.augment);
        s.input = encode_input(rgb, enc);
      }
      s.label = toHead.at(e.label);
    } else {
      const Image8& img = ds.images[idx[static_cast<size_t>(i - nBuf)]];
      s.input = encode_input(cfg.augmentEnabled ? augment(img, rng, cfg.augment) : img, enc);
      s.label = toHead.at(ds.labels[idx[static_cast<size_t>(i - nBuf)]]);
    }
    return s;
  };
  return ts;
}

// Inverse-frequency weights over the classes present in the stream (absent
// classes get weight zero: nothing in the stream can reference them).
inline std::vector<double> stream_weights(const std::vector<int64_t>& headCounts) {
  std::vector<int64_t> present;
  for (int64_t c : headCounts)
    if (c > 0) present.push_back(c);
  const std::vector<double> wp = class_weights(present);
  std::vector<double> w(headCounts.size(), 0.0);
  size_t j = 0;
  for (size_t i = 0; i < headCounts.size(); ++i)
    if (headCounts[i] > 0) w[i] = wp[j++];
  return w;
}

// ---------------------------------------------------------------------------
// Evaluation: model predictions mapped back to dataset class ids.
// ---------------------------------------------------------------------------

inline std::vector<int> predict_globals(Model& model, const LabeledDataset& ds,
                                        const std::vector<int>& idx, const EncodeSpec& enc,
                                        const std::vector<int>& order) {
  std::vector<int> preds = predict_dataset(model, ds, idx, enc);
  for (int& p : preds) p = order[static_cast<size_t>(p)];
  return preds;
}

// Predictions on the stored buffer payloads themselves (no augmentation).
inline std::vector<int> predict_buffer(Model& model, const ReplayBuffer& buf,
                                       const EncodeSpec& enc, const std::vector<int>& order) {
  std::vector<int> preds;
  preds.reserve(buf.entries.size());
  for (const auto& e : buf.entries) {
    int p;
    if (buf.mode == BufferMode::latent) {
      const IntTensor z = model.scores_from_latent(e.latent, nullptr);
      p = static_cast<int>(std::max_element(z.v.begin(), z.v.end()) - z.v.begin());
    } else {
      p = model.predict(encode_input(to_rgb(dequantize(e.image)), enc));
    }
    preds.push_back(order[static_cast<size_t>(p)]);
  }
  return preds;
}

// ---------------------------------------------------------------------------
// Scenario driver
// ---------------------------------------------------------------------------

enum class PretrainReuse {
  full,          // keep the pre-trained classifier; pre-training data may be replayed
  featuresOnly,  // keep only the feature extractor; classifier re-initialized
};

using ModelFactory = std::function<Model(int nClasses, uint64_t seed)>;

struct ScenarioSpec {
  Strategy strategy = Strategy::erNative;
  PretrainReuse reuse = PretrainReuse::full;
  bool runPretrain = true;     // train on the pre-training classes first
  bool balanceLosses = true;   // inverse-frequency class weights over the stream
  SupervisedLossSpec loss{};
  TrainConfig taskTrain{};
  TrainConfig pretrainTrain{};
  PretrainSpec pretrainLoss{};
  EncodeSpec encode{};
  int64_t bufferBits = 0;      // replay memory budget in bits (used if > 0)
  int64_t bufferSamples = 0;   // direct sample cap (used when bufferBits == 0)
  int nativeBitsPerPixel = 0;  // 0: derived from the stored quantization
  uint64_t seed = 1;
};

struct ScenarioResult {
  RunReport report;
  Model model;
  ReplayBuffer buffer;
  std::vector<int> classOrder;
};

// Where a scenario stands: which phases completed, the class order so far,
// and every metric row emitted. Together with the model parameters and the
// buffer this is everything needed to continue the run bit-identically.
struct ScenarioProgress {
  bool pretrainDone = false;
  int tasksDone = 0;
  std::vector<int> classOrder;
  RunReport report;
};

struct ScenarioHooks {
  // called after the pre-training phase and after every completed task
  std::function<void(const ScenarioProgress&, Model&, const ReplayBuffer&)> afterPhase;
};

struct ScenarioResume {
  Model model;
  ReplayBuffer buffer;
  ScenarioProgress progress;
};

namespace detail {

inline void append_rows(RunReport& rep, int task, const std::string& subset,
                        const std::optional<EvalOutcome>& tr, const std::optional<EvalOutcome>& te,
                        int epochs, int64_t bufBits, int64_t bufSamples) {
  for (int s = 0; s < 2; ++s) {
    const auto& o = s == 0 ? tr : te;
    MetricRow r;
    r.task = task;
    r.subset = subset;
    r.split = s == 0 ? "train" : "test";
    if (o) {
      r.accuracy = o->accuracy;
      r.dispersion = o->dispersion;
    }
    r.epochs = epochs;
    r.bufferBits = bufBits;
    r.bufferSamples = bufSamples;
    rep.rows.push_back(std::move(r));
  }
}

struct EvalSets {
  std::vector<int> trainIdx, testIdx;   // all scenario-class samples
  std::vector<int> trainLabels, testLabels;
};

inline EvalSets make_eval_sets(const LabeledDataset& train, const LabeledDataset& test,
                               const TaskSplit& split, const std::vector<int>& allClasses,
                               bool hasPretrain) {
  EvalSets es;
  if (hasPretrain)
    for (int i : split.pretrain.train) es.trainIdx.push_back(i);
  for (const auto& ph : split.tasks)
    for (int i : ph.train) es.trainIdx.push_back(i);
  const std::unordered_set<int> all(allClasses.begin(), allClasses.end());
  for (size_t i = 0; i < test.labels.size(); ++i)
    if (all.count(test.labels[i])) es.testIdx.push_back(static_cast<int>(i));
  es.trainLabels = subset_labels(train, es.trainIdx);
  es.testLabels = subset_labels(test, es.testIdx);
  return es;
}

}  // namespace detail

// Appends the metric rows for one task evaluation: accuracy and per-class
// recall dispersion over the pre-training / old / new / seen / final class
// subsets plus the buffer contents, on both splits. Subsets with no samples
// (old classes at the first task, the buffer under a no-replay strategy)
// appear as explicit absent rows.
inline void evaluate_into(RunReport& rep, int task, Model& model, const LabeledDataset& train,
                          const LabeledDataset& test, const detail::EvalSets& es,
                          const ReplayBuffer& buffer, const EncodeSpec& enc,
                          const ClassMap& cm, const std::vector<int>& ptClasses,
                          const std::vector<int>& oldClasses, const std::vector<int>& newClasses,
                          const std::vector<int>& allClasses, int epochs) {
  const std::vector<int> predsTrain = predict_globals(model, train, es.trainIdx, enc, cm.order);
  const std::vector<int> predsTest = predict_globals(model, test, es.testIdx, enc, cm.order);

  std::vector<int> seenClasses = ptClasses;
  seenClasses.insert(seenClasses.end(), oldClasses.begin(), oldClasses.end());
  seenClasses.insert(seenClasses.end(), newClasses.begin(), newClasses.end());

  const int64_t bufBits = buffer.used_bits();
  const int64_t bufSamples = buffer.size();
  auto sub = [&](const std::vector<int>& classes) -> std::optional<EvalOutcome> {
    if (classes.empty()) return std::nullopt;
    return evaluate_filtered(predsTrain, es.trainLabels, classes);
  };
  auto subTest = [&](const std::vector<int>& classes) -> std::optional<EvalOutcome> {
    if (classes.empty()) return std::nullopt;
    return evaluate_filtered(predsTest, es.testLabels, classes);
  };
  auto row = [&](const std::string& name, const std::vector<int>& classes) {
    detail::append_rows(rep, task, name, sub(classes), subTest(classes), epochs, bufBits,
                        bufSamples);
  };
  row("pretrain", ptClasses);
  row("old", oldClasses);
  row("new", newClasses);
  row("seen", seenClasses);
  row("final", allClasses);

  std::optional<EvalOutcome> bufTrain, bufTest;
  if (buffer.size() > 0) {
    const std::vector<int> bufClasses = buffer.classes();
    std::vector<int> bufLabels;
    for (const auto& e : buffer.entries) bufLabels.push_back(e.label);
    bufTrain = evaluate_filtered(predict_buffer(model, buffer, enc, cm.order), bufLabels,
                                 bufClasses);
    bufTest = subTest(bufClasses);
  }
  detail::append_rows(rep, task, "buffer", bufTrain, bufTest, epochs, bufBits, bufSamples);
}

inline ScenarioResult run_scenario(const ModelFactory& factory, const LabeledDataset& train,
                                   const LabeledDataset& test, const TaskSplit& split,
                                   const ScenarioSpec& spec, const ScenarioHooks* hooks = nullptr,
                                   ScenarioResume* resume = nullptr) {
  check_cfg(split.taskClasses.size() == split.tasks.size(),
            "run_scenario: task class lists and index lists disagree");
  const bool hasPT = spec.runPretrain && !split.pretrainClasses.empty();
  const bool useBuffer = strategy_uses_buffer(spec.strategy);

  std::vector<int> allClasses = hasPT ? split.pretrainClasses : std::vector<int>{};
  for (const auto& cls : split.taskClasses) allClasses.insert(allClasses.end(), cls.begin(), cls.end());

  ClassMap cm;
  if (hasPT) cm.extend(split.pretrainClasses);

  const EncodeSpec enc = spec.encode;
  const int storeLevels = enc.kind == EncodeSpec::Kind::tycc ? enc.levels : 16;

  ScenarioProgress prog;
  Model model;
  ReplayBuffer buffer;
  if (resume) {
    prog = std::move(resume->progress);
    model = std::move(resume->model);
    buffer = std::move(resume->buffer);
    check_cfg(prog.tasksDone <= static_cast<int>(split.tasks.size()),
              "run_scenario: checkpoint is ahead of this scenario");
    check_cfg(!hasPT || prog.pretrainDone,
              "run_scenario: checkpoint predates the pre-training phase");
    // the stored class order must be exactly what the completed phases produced
    std::vector<int> expect = hasPT ? split.pretrainClasses : std::vector<int>{};
    for (int t = 0; t < prog.tasksDone; ++t)
      expect.insert(expect.end(), split.taskClasses[t].begin(), split.taskClasses[t].end());
    check_cfg(expect == prog.classOrder, "run_scenario: checkpoint does not match this split");
    if (spec.strategy == Strategy::erLatent) model.set_fe_frozen(true);
  } else {
    const int initialClasses = hasPT ? static_cast<int>(split.pretrainClasses.size())
                                     : static_cast<int>(split.taskClasses.at(0).size());
    model = factory(initialClasses, spec.seed);
    if (useBuffer) {
      const BufferMode mode =
          spec.strategy == Strategy::erLatent ? BufferMode::latent : BufferMode::native;
      const int lb = label_bits(static_cast<int64_t>(allClasses.size()));
      int64_t ms = spec.bufferSamples;
      if (ms <= 0) {
        check_cfg(spec.bufferBits > 0, "run_scenario: replay needs bufferBits or bufferSamples");
        const int bpp = spec.nativeBitsPerPixel > 0 ? spec.nativeBitsPerPixel
                                                    : native_bits_per_pixel(storeLevels);
        ms = capacity_from_bits(spec.bufferBits, mode, train.images.at(0).h, train.images.at(0).w,
                                static_cast<int64_t>(allClasses.size()), model.latentDim, bpp);
      }
      buffer = ReplayBuffer(mode, ms, lb, derive_seed(spec.seed, 0xb0f), spec.bufferBits);
    }
  }

  const detail::EvalSets es = detail::make_eval_sets(train, test, split, allClasses, hasPT);
  ScenarioResult out;

  auto make_entries = [&](const std::vector<int>& idx) {
    std::vector<BufferEntry> entries;
    entries.reserve(idx.size());
    for (int i : idx) {
      BufferEntry e;
      e.label = train.labels[i];
      if (buffer.mode == BufferMode::latent)
        e.latent = model.forward_latent(encode_input(train.images[i], enc), nullptr);
      else
        e.image = quantize(train.images[i], storeLevels);
      entries.push_back(std::move(e));
    }
    return entries;
  };

  // --- pre-training phase -------------------------------------------------
  if (hasPT && !prog.pretrainDone) {
    TrainConfig cfg = spec.pretrainTrain;
    cfg.seed = derive_seed(spec.seed, 0x11e7);
    std::vector<int64_t> counts(static_cast<size_t>(cm.size()), 0);
    for (int i : split.pretrain.train) ++counts[static_cast<size_t>(cm.toHead.at(train.labels[i]))];
    const std::vector<double> w = spec.balanceLosses ? stream_weights(counts)
                                                     : std::vector<double>{};
    auto validate = [&]() {
      const auto preds = predict_globals(model, train, split.pretrain.val, enc, cm.order);
      return accuracy(preds, subset_labels(train, split.pretrain.val));
    };
    const TrainStats st = train_pretrain(model, train, split.pretrain.train, w, validate, enc,
                                         cfg, spec.pretrainLoss, &cm.toHead);
    evaluate_into(prog.report, -1, model, train, test, es, buffer, enc, cm,
                  split.pretrainClasses, {}, {}, allClasses, st.epochsRun);

    if (spec.strategy == Strategy::erLatent) model.set_fe_frozen(true);
    if (spec.reuse == PretrainReuse::featuresOnly) {
      // keep the feature extractor, re-draw the classifier and head weights
      Rng rr(derive_seed(spec.seed, 0xfca));
      std::vector<QatParam*> ps;
      for (auto& b : model.clf) b->collect_params(ps);
      ps.push_back(&model.head.w);
      for (auto* p : ps) {
        p->init_uniform(rr);
        std::fill(p->m.begin(), p->m.end(), 0.0);
        std::fill(p->v.begin(), p->v.end(), 0.0);
      }
    } else if (useBuffer) {
      buffer.update(make_entries(split.pretrain.train));
    }
    prog.pretrainDone = true;
    prog.classOrder = cm.order;
    if (hooks && hooks->afterPhase) hooks->afterPhase(prog, model, buffer);
  } else if (spec.strategy == Strategy::erLatent) {
    model.set_fe_frozen(true);  // latents must stay stable from the start
  }

  // --- incremental tasks --------------------------------------------------
  std::vector<int> oldClasses;
  std::vector<int> cumulativeTrain, cumulativeVal;
  if (hasPT && spec.reuse == PretrainReuse::full) {
    cumulativeTrain = split.pretrain.train;
    cumulativeVal = split.pretrain.val;
  }

  for (size_t t = 0; t < split.tasks.size(); ++t) {
    const std::vector<int>& newClasses = split.taskClasses[t];
    cm.extend(newClasses);
    cumulativeTrain.insert(cumulativeTrain.end(), split.tasks[t].train.begin(),
                           split.tasks[t].train.end());
    cumulativeVal.insert(cumulativeVal.end(), split.tasks[t].val.begin(),
                         split.tasks[t].val.end());
    if (static_cast<int>(t) < prog.tasksDone) {  // already covered by the checkpoint
      oldClasses.insert(oldClasses.end(), newClasses.begin(), newClasses.end());
      continue;
    }

    const int target = cm.size();
    if (strategy_resets(spec.strategy)) {
      model = factory(target, derive_seed(spec.seed, 0x6e30 + static_cast<uint64_t>(t)));
    } else if (target > model.n_classes()) {
      grow_head(model, target, derive_seed(spec.seed, 0x6e30 + static_cast<uint64_t>(t)));
    }

    const std::vector<int>& streamIdx =
        strategy_cumulative(spec.strategy) ? cumulativeTrain : split.tasks[t].train;
    const ReplayBuffer* sb = useBuffer ? &buffer : nullptr;
    TrainConfig cfg = spec.taskTrain;
    cfg.seed = derive_seed(spec.seed, 0xa5c0 + static_cast<uint64_t>(t));
    const TaskStream ts = make_task_stream(sb, train, streamIdx, cm, enc, cfg, target);
    const std::vector<double> w = spec.balanceLosses ? stream_weights(ts.headCounts)
                                                     : std::vector<double>{};

    // validation pool: current-task validation split, the buffered samples,
    // and for cumulative strategies every earlier validation split
    const std::vector<int>& valIdx =
        strategy_cumulative(spec.strategy) ? cumulativeVal : split.tasks[t].val;
    std::vector<TrainSample> bufVal;
    if (useBuffer)
      for (const auto& e : buffer.entries) {
        TrainSample s;
        if (buffer.mode == BufferMode::latent) {
          s.input = e.latent;
          s.atLatent = true;
        } else {
          s.input = encode_input(to_rgb(dequantize(e.image)), enc);
        }
        s.label = cm.toHead.at(e.label);
        bufVal.push_back(std::move(s));
      }
    // Balanced (per-class mean recall) validation over the pool: the buffer
    // usually outnumbers the new-task validation split, and a plain pooled
    // accuracy would let pure retention outrank real learning progress.
    auto validate = [&]() {
      std::vector<int64_t> hit(static_cast<size_t>(target), 0);
      std::vector<int64_t> cnt(static_cast<size_t>(target), 0);
      const auto preds = predict_dataset(model, train, valIdx, enc);
      for (size_t i = 0; i < preds.size(); ++i) {
        const int lab = cm.toHead.at(train.labels[valIdx[i]]);
        ++cnt[static_cast<size_t>(lab)];
        hit[static_cast<size_t>(lab)] += preds[i] == lab;
      }
      for (const auto& s : bufVal) {
        const IntTensor z = s.atLatent ? model.scores_from_latent(s.input, nullptr)
                                       : model.scores(s.input, nullptr);
        const int p =
            static_cast<int>(std::max_element(z.v.begin(), z.v.end()) - z.v.begin());
        ++cnt[static_cast<size_t>(s.label)];
        hit[static_cast<size_t>(s.label)] += p == s.label;
      }
      double sum = 0.0;
      int64_t k = 0;
      for (size_t c = 0; c < cnt.size(); ++c)
        if (cnt[c] > 0) {
          sum += static_cast<double>(hit[c]) / static_cast<double>(cnt[c]);
          ++k;
        }
      return k == 0 ? 0.0 : sum / static_cast<double>(k);
    };

    const TrainStats st = train_supervised(model, ts.source, ts.count, w, validate, cfg, spec.loss);

    if (useBuffer) buffer.update(make_entries(split.tasks[t].train));

    evaluate_into(prog.report, static_cast<int>(t), model, train, test, es, buffer, enc, cm,
                  hasPT ? split.pretrainClasses : std::vector<int>{}, oldClasses, newClasses,
                  allClasses, st.epochsRun);
    oldClasses.insert(oldClasses.end(), newClasses.begin(), newClasses.end());

    prog.tasksDone = static_cast<int>(t) + 1;
    prog.classOrder = cm.order;
    if (hooks && hooks->afterPhase) hooks->afterPhase(prog, model, buffer);
  }

  out.report = std::move(prog.report);
  out.model = std::move(model);
  out.buffer = std::move(buffer);
  out.classOrder = cm.order;
  return out;
}

}  // namespace fbnn
