#pragma once

#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbnn/replay.hpp"

namespace fbnn {

// ---------------------------------------------------------------------------
// Run configuration: a strict key/value tree loaded from JSON. Every key is
// checked against the schema (unknown keys are rejected) and the whole config
// is validated before any compute starts.
// ---------------------------------------------------------------------------

// Defaults describe the quick synthetic demonstration that runs in seconds on
// a laptop core; full-scale runs (CIFAR-sized images, the 3 Mb model) set
// their sizes explicitly in the config file.
struct ArchSection {
  std::string kind = "bnn3mb";  // bnn3mb | resbnn
  int imageSize = 8;            // square inputs
  int width = 16;               // first-stage filters (bnn3mb) / stem channels (resbnn)
  int latentDim = 64;
  std::string encode = "tycc";  // tycc | trgb
  int levels = 16;              // chroma levels for tycc
};

struct LossSection {
  std::string kind = "cce";  // cce | fcce | hinge
  bool balance = true;       // inverse-frequency class weights
  double focalNu = 2.0;
  double alpha = 1.0;  // pre-training objective mix
  double beta = 0.0;
  double gamma = 0.0;
  double btLambda = 1e-5;
  bool frSigned = false;
  int projectorHidden = 2048;
};

struct ScenarioSection {
  std::string strategy = "er-native";
  std::string reuse = "full";  // full | features
  bool pretrain = true;
  double bufferMb = 0.0;           // replay budget in megabits (1e6 bits); wins over samples
  int64_t bufferSamples = 30;      // direct sample cap when bufferMb == 0
  std::vector<uint64_t> seeds{1};  // one run per seed
  std::vector<double> isoGridMb;   // non-empty: native/latent sweep over these budgets
};

struct DataSection {
  std::string kind = "synthetic";  // synthetic | cifar
  std::string dir;                 // directory of CIFAR binary files
  int classes = 4;                 // synthetic class count
  int trainPerClass = 30;
  int testPerClass = 10;
  int noise = 28;
  int pretrainClasses = 0;  // first classes used for pre-training
  int tasks = 2;            // incremental tasks over the remaining classes
  double valFrac = 0.15;
  bool shuffleClasses = false;  // shuffle class-to-phase assignment by seed
};

struct RunConfig {
  ArchSection arch;
  TrainConfig train;
  LossSection loss;
  ScenarioSection scenario;
  DataSection data;
  std::string outDir = "out";

  // quick-demo training defaults to match the quick-demo architecture
  RunConfig() {
    train.batchSize = 16;
    train.initialLr = 1e-2;
    train.maxEpochs = 80;
    train.stopPatience = 12;
    train.plateauPatience = 6;
    train.augmentEnabled = false;
  }

  void validate() const {
    check_cfg(arch.kind == "bnn3mb" || arch.kind == "resbnn",
              "arch.kind must be bnn3mb or resbnn");
    check_cfg(arch.encode == "tycc" || arch.encode == "trgb",
              "arch.encode must be tycc or trgb");
    check_cfg(arch.levels >= 1 && arch.levels <= 128, "arch.levels must be in [1, 128]");
    check_cfg(arch.imageSize >= 8, "arch.imageSize must be >= 8");
    if (arch.kind == "resbnn")
      check_cfg(arch.latentDim == 1024, "arch.latentDim must be 1024 for resbnn");
    train.validate();
    check_cfg(loss.kind == "cce" || loss.kind == "fcce" || loss.kind == "hinge",
              "loss.kind must be cce, fcce, or hinge");
    strategy_from_name(scenario.strategy);  // throws on unknown names
    check_cfg(scenario.reuse == "full" || scenario.reuse == "features",
              "scenario.reuse must be full or features");
    check_cfg(scenario.bufferMb >= 0, "scenario.bufferMb must be >= 0");
    check_cfg(scenario.bufferSamples >= 0, "scenario.bufferSamples must be >= 0");
    check_cfg(!scenario.seeds.empty(), "scenario.seeds must not be empty");
    for (double mb : scenario.isoGridMb)
      check_cfg(mb > 0, "scenario.isoGridMb entries must be > 0");
    check_cfg(data.kind == "synthetic" || data.kind == "cifar",
              "data.kind must be synthetic or cifar");
    if (data.kind == "cifar") check_cfg(!data.dir.empty(), "data.dir required for cifar");
    check_cfg(data.classes >= 1 && data.trainPerClass >= 1 && data.testPerClass >= 0,
              "data: synthetic sizes must be positive");
    check_cfg(data.pretrainClasses >= 0, "data.pretrainClasses must be >= 0");
    check_cfg(data.tasks >= 0, "data.tasks must be >= 0");
    check_cfg(data.valFrac >= 0 && data.valFrac < 1, "data.valFrac must be in [0, 1)");
    check_cfg(!outDir.empty(), "out directory must not be empty");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& section,
                           std::initializer_list<const char*> keys) {
  check_cfg(j.is_object(), "config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
  }
}

template <typename T>
void fetch(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig c;
  try {
    detail::reject_unknown(j, "", {"arch", "train", "loss", "scenario", "data", "out"});
    if (j.contains("arch")) {
      const auto& a = j.at("arch");
      detail::reject_unknown(a, "arch",
                             {"kind", "imageSize", "width", "latentDim", "encode", "levels"});
      detail::fetch(a, "kind", c.arch.kind);
      detail::fetch(a, "imageSize", c.arch.imageSize);
      detail::fetch(a, "width", c.arch.width);
      detail::fetch(a, "latentDim", c.arch.latentDim);
      detail::fetch(a, "encode", c.arch.encode);
      detail::fetch(a, "levels", c.arch.levels);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t, "train",
                             {"batchSize", "lr", "plateauFactor", "plateauPatience", "stopPatience",
                              "maxEpochs", "augment", "hflip", "maxTranslate", "contrastLo",
                              "contrastHi"});
      detail::fetch(t, "batchSize", c.train.batchSize);
      detail::fetch(t, "lr", c.train.initialLr);
      detail::fetch(t, "plateauFactor", c.train.plateauFactor);
      detail::fetch(t, "plateauPatience", c.train.plateauPatience);
      detail::fetch(t, "stopPatience", c.train.stopPatience);
      detail::fetch(t, "maxEpochs", c.train.maxEpochs);
      detail::fetch(t, "augment", c.train.augmentEnabled);
      detail::fetch(t, "hflip", c.train.augment.hflip);
      detail::fetch(t, "maxTranslate", c.train.augment.maxTranslate);
      detail::fetch(t, "contrastLo", c.train.augment.contrastLo);
      detail::fetch(t, "contrastHi", c.train.augment.contrastHi);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      detail::reject_unknown(l, "loss",
                             {"kind", "balance", "focalNu", "alpha", "beta", "gamma", "btLambda",
                              "frSigned", "projectorHidden"});
      detail::fetch(l, "kind", c.loss.kind);
      detail::fetch(l, "balance", c.loss.balance);
      detail::fetch(l, "focalNu", c.loss.focalNu);
      detail::fetch(l, "alpha", c.loss.alpha);
      detail::fetch(l, "beta", c.loss.beta);
      detail::fetch(l, "gamma", c.loss.gamma);
      detail::fetch(l, "btLambda", c.loss.btLambda);
      detail::fetch(l, "frSigned", c.loss.frSigned);
      detail::fetch(l, "projectorHidden", c.loss.projectorHidden);
    }
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      detail::reject_unknown(s, "scenario",
                             {"strategy", "reuse", "pretrain", "bufferMb", "bufferSamples", "seeds",
                              "isoGridMb"});
      detail::fetch(s, "strategy", c.scenario.strategy);
      detail::fetch(s, "reuse", c.scenario.reuse);
      detail::fetch(s, "pretrain", c.scenario.pretrain);
      detail::fetch(s, "bufferMb", c.scenario.bufferMb);
      detail::fetch(s, "bufferSamples", c.scenario.bufferSamples);
      detail::fetch(s, "seeds", c.scenario.seeds);
      detail::fetch(s, "isoGridMb", c.scenario.isoGridMb);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      detail::reject_unknown(d, "data",
                             {"kind", "dir", "classes", "trainPerClass", "testPerClass", "noise",
                              "pretrainClasses", "tasks", "valFrac", "shuffleClasses"});
      detail::fetch(d, "kind", c.data.kind);
      detail::fetch(d, "dir", c.data.dir);
      detail::fetch(d, "classes", c.data.classes);
      detail::fetch(d, "trainPerClass", c.data.trainPerClass);
      detail::fetch(d, "testPerClass", c.data.testPerClass);
      detail::fetch(d, "noise", c.data.noise);
      detail::fetch(d, "pretrainClasses", c.data.pretrainClasses);
      detail::fetch(d, "tasks", c.data.tasks);
      detail::fetch(d, "valFrac", c.data.valFrac);
      detail::fetch(d, "shuffleClasses", c.data.shuffleClasses);
    }
    detail::fetch(j, "out", c.outDir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value error: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

// Full resolved configuration (defaults included), echoed into manifests so
// every run records exactly what it executed.
inline nlohmann::json config_echo(const RunConfig& c) {
  nlohmann::json j;
  j["arch"] = {{"kind", c.arch.kind},         {"imageSize", c.arch.imageSize},
               {"width", c.arch.width},       {"latentDim", c.arch.latentDim},
               {"encode", c.arch.encode},     {"levels", c.arch.levels}};
  j["train"] = {{"batchSize", c.train.batchSize},
                {"lr", c.train.initialLr},
                {"plateauFactor", c.train.plateauFactor},
                {"plateauPatience", c.train.plateauPatience},
                {"stopPatience", c.train.stopPatience},
                {"maxEpochs", c.train.maxEpochs},
                {"augment", c.train.augmentEnabled},
                {"hflip", c.train.augment.hflip},
                {"maxTranslate", c.train.augment.maxTranslate},
                {"contrastLo", c.train.augment.contrastLo},
                {"contrastHi", c.train.augment.contrastHi}};
  j["loss"] = {{"kind", c.loss.kind},
               {"balance", c.loss.balance},
               {"focalNu", c.loss.focalNu},
               {"alpha", c.loss.alpha},
               {"beta", c.loss.beta},
               {"gamma", c.loss.gamma},
               {"btLambda", c.loss.btLambda},
               {"frSigned", c.loss.frSigned},
               {"projectorHidden", c.loss.projectorHidden}};
  j["scenario"] = {{"strategy", c.scenario.strategy}, {"reuse", c.scenario.reuse},
                   {"pretrain", c.scenario.pretrain}, {"bufferMb", c.scenario.bufferMb},
                   {"bufferSamples", c.scenario.bufferSamples}, {"seeds", c.scenario.seeds},
                   {"isoGridMb", c.scenario.isoGridMb}};
  j["data"] = {{"kind", c.data.kind},
               {"dir", c.data.dir},
               {"classes", c.data.classes},
               {"trainPerClass", c.data.trainPerClass},
               {"testPerClass", c.data.testPerClass},
               {"noise", c.data.noise},
               {"pretrainClasses", c.data.pretrainClasses},
               {"tasks", c.data.tasks},
               {"valFrac", c.data.valFrac},
               {"shuffleClasses", c.data.shuffleClasses}};
  j["out"] = c.outDir;
  return j;
}

// ---------------------------------------------------------------------------
// Bridges from config sections to the engine types.
// ---------------------------------------------------------------------------

inline EncodeSpec encode_spec_of(const ArchSection& a) {
  EncodeSpec e;
  e.kind = a.encode == "trgb" ? EncodeSpec::Kind::trgb : EncodeSpec::Kind::tycc;
  e.levels = a.levels;
  return e;
}

inline int encoded_channels(const ArchSection& a) {
  return a.encode == "trgb" ? 255 : 4 * a.levels;
}

inline SupervisedLossSpec supervised_spec_of(const LossSection& l) {
  SupervisedLossSpec s;
  s.kind = l.kind == "fcce"    ? SupervisedLossSpec::Kind::fcce
           : l.kind == "hinge" ? SupervisedLossSpec::Kind::hinge
                               : SupervisedLossSpec::Kind::cce;
  s.focalNu = l.focalNu;
  return s;
}

inline PretrainSpec pretrain_spec_of(const LossSection& l) {
  PretrainSpec p;
  p.alpha = l.alpha;
  p.beta = l.beta;
  p.gamma = l.gamma;
  p.btLambda = l.btLambda;
  p.frSigned = l.frSigned;
  p.projectorHidden = l.projectorHidden;
  p.sup = supervised_spec_of(l);
  return p;
}

inline ModelFactory model_factory_of(const ArchSection& a) {
  const int channels = encoded_channels(a);
  if (a.kind == "resbnn") {
    return [a, channels](int nClasses, uint64_t seed) {
      ResBnnConfig rc;
      rc.h = rc.w = a.imageSize;
      rc.inChannels = channels;
      rc.nClasses = nClasses;
      rc.stemChannels = a.width;
      rc.seed = seed;
      return build_res_bnn(rc);
    };
  }
  return [a, channels](int nClasses, uint64_t seed) {
    BnnConfig bc;
    bc.h = bc.w = a.imageSize;
    bc.inChannels = channels;
    bc.nClasses = nClasses;
    bc.width = a.width;
    bc.latentDim = a.latentDim;
    bc.seed = seed;
    return build_3mb_bnn(bc);
  };
}

inline ScenarioSpec scenario_spec_of(const RunConfig& c, uint64_t seed) {
  ScenarioSpec sp;
  sp.strategy = strategy_from_name(c.scenario.strategy);
  sp.reuse = c.scenario.reuse == "features" ? PretrainReuse::featuresOnly : PretrainReuse::full;
  sp.runPretrain = c.scenario.pretrain;
  sp.balanceLosses = c.loss.balance;
  sp.loss = supervised_spec_of(c.loss);
  sp.taskTrain = c.train;
  sp.pretrainTrain = c.train;
  sp.pretrainLoss = pretrain_spec_of(c.loss);
  sp.encode = encode_spec_of(c.arch);
  sp.bufferBits = static_cast<int64_t>(std::llround(c.scenario.bufferMb * 1e6));
  // an explicit bit budget overrides the sample cap
  sp.bufferSamples = sp.bufferBits > 0 ? 0 : c.scenario.bufferSamples;
  sp.seed = seed;
  return sp;
}

// ---------------------------------------------------------------------------
// Data assembly: synthetic class-template sets or CIFAR binaries from a
// directory, plus the class-to-phase split used by incremental runs.
// ---------------------------------------------------------------------------

inline SyntheticData load_data(const DataSection& d, int imageSize, uint64_t seed) {
  if (d.kind == "synthetic")
    return make_synthetic(d.classes, d.trainPerClass, d.testPerClass, imageSize, seed, d.noise);
  SyntheticData out;
  const std::string base = d.dir + "/";
  std::ifstream probe(base + "train.bin", std::ios::binary);
  if (probe) {  // CIFAR-100 layout
    out.train = load_cifar_binary(base + "train.bin");
    out.test = load_cifar_binary(base + "test.bin");
    return out;
  }
  for (int b = 1; b <= 5; ++b) {  // CIFAR-10 layout
    LabeledDataset part = load_cifar_binary(base + "data_batch_" + std::to_string(b) + ".bin");
    out.train.numClasses = part.numClasses;
    out.train.provenance = d.dir;
    for (size_t i = 0; i < part.images.size(); ++i) {
      out.train.images.push_back(std::move(part.images[i]));
      out.train.labels.push_back(part.labels[i]);
    }
  }
  out.test = load_cifar_binary(base + "test_batch.bin");
  return out;
}

// First `pretrainClasses` classes pre-train; the remaining classes are dealt
// into `tasks` equal consecutive groups (optionally over a seed-shuffled class
// order).
inline TaskSplit build_split(const DataSection& d, const LabeledDataset& train, uint64_t seed) {
  const int total = train.numClasses;
  check_cfg(d.pretrainClasses <= total, "data.pretrainClasses exceeds the class count");
  const int incremental = total - d.pretrainClasses;
  check_cfg(d.tasks >= 1, "data.tasks must be >= 1 for incremental runs");
  check_cfg(incremental % d.tasks == 0,
            "incremental classes (" + std::to_string(incremental) +
                ") must divide evenly into data.tasks (" + std::to_string(d.tasks) + ")");
  std::vector<int> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  if (d.shuffleClasses) {
    Rng rng(derive_seed(seed, 0xc1a55));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<int> pre(order.begin(), order.begin() + d.pretrainClasses);
  std::vector<std::vector<int>> tasks;
  const int per = incremental / d.tasks;
  for (int t = 0; t < d.tasks; ++t)
    tasks.emplace_back(order.begin() + d.pretrainClasses + t * per,
                       order.begin() + d.pretrainClasses + (t + 1) * per);
  return make_class_split(train, std::move(pre), std::move(tasks), d.valFrac, seed);
}

}  // namespace fbnn
