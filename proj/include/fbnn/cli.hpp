#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fbnn/config.hpp"
#include "fbnn/persist.hpp"

namespace fbnn {

// ---------------------------------------------------------------------------
// Output plumbing: every command writes its artifacts under the configured
// directory plus a manifest echoing the resolved config and the content
// digest of each file it produced.
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write on " + path);
}

inline std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot digest " + path);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(data);
}

inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           const std::vector<std::string>& files) {
  nlohmann::json m;
  m["command"] = command;
  m["config"] = config_echo(cfg);
  nlohmann::json outs = nlohmann::json::object();
  for (const auto& f : files)
    outs[std::filesystem::path(f).filename().string()] = hex64(file_digest(f));
  m["outputs"] = outs;
  write_text_file(cfg.outDir + "/manifest.json", m.dump(2) + "\n");
}

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.outDir);
  return cfg.outDir + "/" + name;
}

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "absent";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

inline std::vector<int> all_indices(const LabeledDataset& ds) {
  std::vector<int> idx(static_cast<size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

inline std::vector<int> all_classes(const LabeledDataset& ds) {
  std::vector<int> cls(static_cast<size_t>(ds.numClasses));
  std::iota(cls.begin(), cls.end(), 0);
  return cls;
}

inline std::vector<double> balanced_weights(const LabeledDataset& ds, const std::vector<int>& idx,
                                            int nClasses) {
  std::vector<int64_t> counts(static_cast<size_t>(nClasses), 0);
  for (int i : idx) ++counts[static_cast<size_t>(ds.labels[i])];
  return class_weights(counts);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// offline: conventional training on the full train split.
// Artifacts: checkpoint.bin, metrics.csv, curve.csv (per-epoch loss plus
// train/test/holdout accuracy), manifest.json.
// ---------------------------------------------------------------------------

inline int cmd_offline(const RunConfig& cfg) {
  cfg.validate();
  const uint64_t seed = cfg.scenario.seeds.front();
  const SyntheticData data = load_data(cfg.data, cfg.arch.imageSize, seed);
  const EncodeSpec enc = encode_spec_of(cfg.arch);
  Model model = model_factory_of(cfg.arch)(data.train.numClasses, seed);

  const std::vector<int> classes = detail::all_classes(data.train);
  const PhaseIndices split = stratified_holdout(data.train, classes, cfg.data.valFrac, seed);
  const std::vector<int> testIdx = detail::all_indices(data.test);

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const std::vector<double> w =
      cfg.loss.balance ? detail::balanced_weights(data.train, split.train, model.n_classes())
                       : std::vector<double>{};

  std::vector<double> curveTrain, curveTest, curveVal;
  auto validate = [&]() {
    curveTrain.push_back(accuracy_on(model, data.train, split.train, enc));
    curveTest.push_back(accuracy_on(model, data.test, testIdx, enc));
    const double v = split.val.empty() ? curveTrain.back()
                                       : accuracy_on(model, data.train, split.val, enc);
    curveVal.push_back(v);
    return v;
  };
  const TrainStats st = train_supervised(model, dataset_source(data.train, split.train, enc, tc),
                                         static_cast<int64_t>(split.train.size()), w, validate, tc,
                                         supervised_spec_of(cfg.loss));

  std::string curve = "epoch,loss,trainAccuracy,testAccuracy,holdoutAccuracy\n";
  for (int e = 0; e < st.epochsRun; ++e) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6f,%.6f\n", e, st.lossHistory[e],
                  curveTrain[e], curveTest[e], curveVal[e]);
    curve += line;
  }
  const std::string curvePath = out_path(cfg, "curve.csv");
  write_text_file(curvePath, curve);

  const auto trOut = evaluate_filtered(predict_dataset(model, data.train, split.train, enc),
                                       subset_labels(data.train, split.train), classes);
  const auto teOut = evaluate_filtered(predict_dataset(model, data.test, testIdx, enc),
                                       subset_labels(data.test, testIdx), classes);
  std::string metrics = "split,accuracy,dispersion,samples\n";
  metrics += "train," + detail::fmt_opt(trOut ? std::optional(trOut->accuracy) : std::nullopt) +
             "," + detail::fmt_opt(trOut ? std::optional(trOut->dispersion) : std::nullopt) + "," +
             std::to_string(split.train.size()) + "\n";
  metrics += "test," + detail::fmt_opt(teOut ? std::optional(teOut->accuracy) : std::nullopt) +
             "," + detail::fmt_opt(teOut ? std::optional(teOut->dispersion) : std::nullopt) + "," +
             std::to_string(testIdx.size()) + "\n";
  const std::string metricsPath = out_path(cfg, "metrics.csv");
  write_text_file(metricsPath, metrics);

  const std::string ckptPath = out_path(cfg, "checkpoint.bin");
  save_checkpoint(ckptPath, model, seed);
  write_manifest(cfg, "offline", {curvePath, metricsPath, ckptPath});

  std::cout << "offline: " << st.epochsRun << " epochs (best " << st.bestEpoch << "), train "
            << detail::fmt_opt(trOut ? std::optional(trOut->accuracy) : std::nullopt) << ", test "
            << detail::fmt_opt(teOut ? std::optional(teOut->accuracy) : std::nullopt) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain: the multi-objective first phase on the pre-training classes;
// emits the trained model checkpoint (the projector is a training-only aid
// and is not part of the model) plus train/test accuracy on those classes.
// ---------------------------------------------------------------------------

inline int cmd_pretrain(const RunConfig& cfg) {
  cfg.validate();
  check_cfg(cfg.data.pretrainClasses >= 1, "pretrain: data.pretrainClasses must be >= 1");
  const uint64_t seed = cfg.scenario.seeds.front();
  const SyntheticData data = load_data(cfg.data, cfg.arch.imageSize, seed);
  const EncodeSpec enc = encode_spec_of(cfg.arch);
  const TaskSplit split = build_split(cfg.data, data.train, seed);

  ClassMap cm;
  cm.extend(split.pretrainClasses);
  Model model = model_factory_of(cfg.arch)(cm.size(), seed);

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  std::vector<double> w;
  if (cfg.loss.balance) {
    std::vector<int64_t> counts(static_cast<size_t>(cm.size()), 0);
    for (int i : split.pretrain.train) ++counts[static_cast<size_t>(cm.toHead.at(data.train.labels[i]))];
    w = class_weights(counts);
  }
  auto validate = [&]() {
    const auto& idx = split.pretrain.val.empty() ? split.pretrain.train : split.pretrain.val;
    const auto preds = predict_dataset(model, data.train, idx, enc);
    int64_t hit = 0;
    for (size_t i = 0; i < preds.size(); ++i)
      hit += preds[i] == cm.toHead.at(data.train.labels[idx[i]]);
    return static_cast<double>(hit) / static_cast<double>(preds.size());
  };
  const TrainStats st = train_pretrain(model, data.train, split.pretrain.train, w, validate, enc,
                                       tc, pretrain_spec_of(cfg.loss), &cm.toHead);

  std::vector<int> testIdx;
  for (int64_t i = 0; i < data.test.size(); ++i)
    if (cm.toHead.count(data.test.labels[i])) testIdx.push_back(static_cast<int>(i));
  const auto trOut =
      evaluate_filtered(predict_globals(model, data.train, split.pretrain.train, enc, cm.order),
                        subset_labels(data.train, split.pretrain.train), split.pretrainClasses);
  const auto teOut = evaluate_filtered(predict_globals(model, data.test, testIdx, enc, cm.order),
                                       subset_labels(data.test, testIdx), split.pretrainClasses);

  std::string metrics = "subset,split,accuracy,dispersion,samples\n";
  metrics += "pretrain,train," +
             detail::fmt_opt(trOut ? std::optional(trOut->accuracy) : std::nullopt) + "," +
             detail::fmt_opt(trOut ? std::optional(trOut->dispersion) : std::nullopt) + "," +
             std::to_string(split.pretrain.train.size()) + "\n";
  metrics += "pretrain,test," +
             detail::fmt_opt(teOut ? std::optional(teOut->accuracy) : std::nullopt) + "," +
             detail::fmt_opt(teOut ? std::optional(teOut->dispersion) : std::nullopt) + "," +
             std::to_string(testIdx.size()) + "\n";
  const std::string metricsPath = out_path(cfg, "metrics.csv");
  write_text_file(metricsPath, metrics);

  const std::string ckptPath = out_path(cfg, "checkpoint.bin");
  save_checkpoint(ckptPath, model, seed);
  write_manifest(cfg, "pretrain", {metricsPath, ckptPath});

  std::cout << "pretrain: " << st.epochsRun << " epochs, a_train "
            << detail::fmt_opt(trOut ? std::optional(trOut->accuracy) : std::nullopt) << ", a_test "
            << detail::fmt_opt(teOut ? std::optional(teOut->accuracy) : std::nullopt) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cil: incremental scenario runs — one per seed, with per-seed row CSVs, a
// mean±std summary across seeds, a checkpoint after every completed phase
// (enabling mid-stream resume), and an optional native-vs-latent sweep over a
// grid of equal memory budgets.
// ---------------------------------------------------------------------------

struct IsoRow {
  double mb = 0.0;
  std::string mode;
  int64_t capacity = 0;  // samples the budget admits
  int64_t stored = 0;    // samples actually held at the end
  std::optional<double> aFinal, aNew, aBuffer;
};

inline std::vector<IsoRow> iso_memory_sweep(const ModelFactory& factory,
                                            const LabeledDataset& train,
                                            const LabeledDataset& test, const TaskSplit& split,
                                            const ScenarioSpec& base,
                                            const std::vector<double>& gridMb) {
  std::vector<IsoRow> rows;
  const int lastTask = static_cast<int>(split.taskClasses.size()) - 1;
  for (double mb : gridMb) {
    for (Strategy strat : {Strategy::erNative, Strategy::erLatent}) {
      ScenarioSpec sp = base;
      sp.strategy = strat;
      sp.bufferBits = static_cast<int64_t>(std::llround(mb * 1e6));
      sp.bufferSamples = 0;
      const ScenarioResult r = run_scenario(factory, train, test, split, sp);
      IsoRow row;
      row.mb = mb;
      row.mode = strat == Strategy::erNative ? "native" : "latent";
      row.capacity = r.buffer.maxSamples;
      row.stored = r.buffer.size();
      auto acc = [&](const char* subset, const char* sp_) -> std::optional<double> {
        const MetricRow* m = r.report.find(lastTask, subset, sp_);
        return m ? m->accuracy : std::nullopt;
      };
      row.aFinal = acc("final", "test");
      row.aNew = acc("new", "test");
      row.aBuffer = acc("buffer", "train");
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string iso_rows_csv(const std::vector<IsoRow>& rows) {
  std::string out = "mb,mode,capacitySamples,storedSamples,aFinal,aNew,aBuffer\n";
  for (const auto& r : rows) {
    char head[64];
    std::snprintf(head, sizeof head, "%.4f,", r.mb);
    out += head;
    out += r.mode + "," + std::to_string(r.capacity) + "," + std::to_string(r.stored) + "," +
           detail::fmt_opt(r.aFinal) + "," + detail::fmt_opt(r.aNew) + "," +
           detail::fmt_opt(r.aBuffer) + "\n";
  }
  return out;
}

inline int cmd_cil(const RunConfig& cfg, const std::string& resumePath = {}) {
  cfg.validate();
  const uint64_t firstSeed = cfg.scenario.seeds.front();
  const SyntheticData data = load_data(cfg.data, cfg.arch.imageSize, firstSeed);
  const TaskSplit split = build_split(cfg.data, data.train, firstSeed);
  const ModelFactory factory = model_factory_of(cfg.arch);
  if (!resumePath.empty())
    check_cfg(cfg.scenario.seeds.size() == 1, "cil: --resume requires a single seed");

  std::vector<RunReport> reports;
  std::vector<std::string> files;
  for (uint64_t seed : cfg.scenario.seeds) {
    const ScenarioSpec sp = scenario_spec_of(cfg, seed);
    const std::string ckptPath = out_path(cfg, "ckpt_seed" + std::to_string(seed) + ".bin");
    ScenarioHooks hooks;
    hooks.afterPhase = [&](const ScenarioProgress& prog, Model& m, const ReplayBuffer& b) {
      save_checkpoint(ckptPath, m, seed, false, &b, &prog);
    };
    ScenarioResult res;
    if (!resumePath.empty()) {
      const CheckpointInfo info = read_checkpoint_info(resumePath);
      check_cfg(info.seed == seed, "cil: checkpoint was created with seed " +
                                       std::to_string(info.seed) + "; rerun with that seed");
      Model m = factory(info.nClasses, info.seed);
      ScenarioResume rz;
      LoadedCheckpoint lc = load_checkpoint(resumePath, m);
      rz.model = std::move(m);
      rz.buffer = std::move(lc.buffer);
      rz.progress = std::move(lc.progress);
      res = run_scenario(factory, data.train, data.test, split, sp, &hooks, &rz);
    } else {
      res = run_scenario(factory, data.train, data.test, split, sp, &hooks);
    }
    const std::string reportPath = out_path(cfg, "report_seed" + std::to_string(seed) + ".csv");
    write_text_file(reportPath, res.report.to_csv());
    // end-state checkpoint, also covering a resume that had nothing left to run
    ScenarioProgress fin;
    fin.pretrainDone = sp.runPretrain && !split.pretrainClasses.empty();
    fin.tasksDone = static_cast<int>(split.taskClasses.size());
    fin.classOrder = res.classOrder;
    fin.report = res.report;
    save_checkpoint(ckptPath, res.model, seed, false, &res.buffer, &fin);
    files.push_back(reportPath);
    files.push_back(ckptPath);
    reports.push_back(std::move(res.report));
  }

  // mean±std across seeds, keyed by row identity in first-report order
  std::string summary = "task,subset,split,meanAccuracy,stdAccuracy,meanDispersion,stdDispersion,runs\n";
  auto meanStd = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  for (const auto& row : reports.front().rows) {
    std::vector<double> accs, disps;
    for (const auto& rep : reports) {
      const MetricRow* m = rep.find(row.task, row.subset, row.split);
      if (m && m->accuracy) accs.push_back(*m->accuracy);
      if (m && m->dispersion) disps.push_back(*m->dispersion);
    }
    summary += std::to_string(row.task) + "," + row.subset + "," + row.split + ",";
    if (accs.empty()) {
      summary += "absent,absent,";
    } else {
      const auto [ma, sa] = meanStd(accs);
      char buf[48];
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,", ma, sa);
      summary += buf;
    }
    if (disps.empty()) {
      summary += "absent,absent,";
    } else {
      const auto [md, sd] = meanStd(disps);
      char buf[48];
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,", md, sd);
      summary += buf;
    }
    summary += std::to_string(cfg.scenario.seeds.size()) + "\n";
  }
  const std::string summaryPath = out_path(cfg, "summary.csv");
  write_text_file(summaryPath, summary);
  files.push_back(summaryPath);

  if (!cfg.scenario.isoGridMb.empty()) {
    const auto rows = iso_memory_sweep(factory, data.train, data.test, split,
                                       scenario_spec_of(cfg, firstSeed), cfg.scenario.isoGridMb);
    const std::string isoPath = out_path(cfg, "iso.csv");
    write_text_file(isoPath, iso_rows_csv(rows));
    files.push_back(isoPath);
  }
  write_manifest(cfg, "cil", files);

  const int lastTask = static_cast<int>(split.taskClasses.size()) - 1;
  for (const char* subset : {"final", "new", "old"}) {
    std::vector<double> accs;
    for (const auto& rep : reports) {
      const MetricRow* m = rep.find(lastTask, subset, "test");
      if (m && m->accuracy) accs.push_back(*m->accuracy);
    }
    if (accs.empty()) continue;
    const auto [mean, sd] = meanStd(accs);
    std::printf("cil %s (%s): a_%s test %.4f +/- %.4f over %zu seed(s)\n",
                cfg.scenario.strategy.c_str(), cfg.data.kind.c_str(), subset, mean, sd,
                accs.size());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval: score a saved checkpoint on the configured dataset.
// ---------------------------------------------------------------------------

inline int cmd_eval(const RunConfig& cfg, const std::string& ckptPath) {
  cfg.validate();
  check_cfg(!ckptPath.empty(), "eval: --checkpoint is required");
  const CheckpointInfo info = read_checkpoint_info(ckptPath);
  Model model = model_factory_of(cfg.arch)(info.nClasses, info.seed);
  const LoadedCheckpoint lc = load_checkpoint(ckptPath, model);
  const SyntheticData data = load_data(cfg.data, cfg.arch.imageSize, cfg.scenario.seeds.front());
  const EncodeSpec enc = encode_spec_of(cfg.arch);

  // incremental checkpoints carry the class order; offline ones use identity
  const std::vector<int>& order = lc.progress.classOrder;
  auto evalOn = [&](const LabeledDataset& ds) {
    const std::vector<int> idx = detail::all_indices(ds);
    std::vector<int> preds = predict_dataset(model, ds, idx, enc);
    if (!order.empty())
      for (auto& p : preds) p = order[static_cast<size_t>(p)];
    std::vector<int> classes;
    if (order.empty()) {
      classes.resize(static_cast<size_t>(model.n_classes()));
      std::iota(classes.begin(), classes.end(), 0);
    } else {
      classes = order;
    }
    return std::pair{evaluate_filtered(preds, ds.labels, classes), idx.size()};
  };
  const auto [trOut, nTr] = evalOn(data.train);
  const auto [teOut, nTe] = evalOn(data.test);

  std::string metrics = "split,accuracy,dispersion,samples\n";
  metrics += "train," + detail::fmt_opt(trOut ? std::optional(trOut->accuracy) : std::nullopt) +
             "," + detail::fmt_opt(trOut ? std::optional(trOut->dispersion) : std::nullopt) + "," +
             std::to_string(nTr) + "\n";
  metrics += "test," + detail::fmt_opt(teOut ? std::optional(teOut->accuracy) : std::nullopt) +
             "," + detail::fmt_opt(teOut ? std::optional(teOut->dispersion) : std::nullopt) + "," +
             std::to_string(nTe) + "\n";
  const std::string metricsPath = out_path(cfg, "eval.csv");
  write_text_file(metricsPath, metrics);
  write_manifest(cfg, "eval", {metricsPath});

  std::cout << "eval " << ckptPath << (info.inferenceOnly ? " (inference-only)" : "") << ": train "
            << detail::fmt_opt(trOut ? std::optional(trOut->accuracy) : std::nullopt) << ", test "
            << detail::fmt_opt(teOut ? std::optional(teOut->accuracy) : std::nullopt) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// encode: inspect the input encoding — per-pixel quantization levels and
// thermometer channel bits, a black-pixel report, the storage cost per pixel,
// and a quantize/dequantize round-trip check.
// ---------------------------------------------------------------------------

struct EncodeCmdOptions {
  std::string imagePath;  // PPM (P6); empty = synthetic template
  int limit = 8;          // pixels to dump
};

inline Image8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        while (in.get(ch) && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    if (t.empty()) throw IoError("truncated PPM header: " + path);
    return t;
  };
  if (token() != "P6") throw IoError("unsupported image format (need binary PPM P6): " + path);
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  const int maxv = std::stoi(token());
  check_cfg(w >= 1 && h >= 1 && maxv == 255, "read_ppm: need positive dims and 8-bit samples");
  Image8 img(h, w, 3);
  in.read(reinterpret_cast<char*>(img.v.data()), static_cast<std::streamsize>(img.v.size()));
  if (!in) throw IoError("truncated PPM pixel data: " + path);
  return img;
}

inline std::string thermometer_str(int level, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += i < level ? '+' : '-';
  return s;
}

inline int cmd_encode(const RunConfig& cfg, const EncodeCmdOptions& opt) {
  cfg.validate();
  const bool trgb = cfg.arch.encode == "trgb";
  const int n = cfg.arch.levels;
  const Image8 img =
      opt.imagePath.empty()
          ? make_synthetic(1, 1, 0, cfg.arch.imageSize, cfg.scenario.seeds.front()).train.images[0]
          : read_ppm(opt.imagePath);

  std::string text;
  char line[256];
  std::snprintf(line, sizeof line, "encoding: %s, image %dx%d\n", cfg.arch.encode.c_str(), img.h,
                img.w);
  text += line;
  if (trgb) {
    text += "channels/pixel: 255 (85 per color)\n";
    std::snprintf(line, sizeof line, "storage: %d bits/pixel (3 x %d-bit levels)\n",
                  3 * bits_for_levels(85), bits_for_levels(85));
    text += line;
  } else {
    std::snprintf(line, sizeof line, "channels/pixel: %d (%d-level Y + %d-level Cb/Cr)\n", 4 * n,
                  2 * n, n);
    text += line;
    std::snprintf(line, sizeof line, "storage: %d bits/pixel (%d + 2 x %d)\n",
                  native_bits_per_pixel(n), bits_for_levels(2 * n), bits_for_levels(n));
    text += line;
  }

  const int limit = std::min<int>(opt.limit, img.h * img.w);
  for (int p = 0; p < limit; ++p) {
    const int y = p / img.w, x = p % img.w;
    const uint8_t r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
    if (trgb) {
      constexpr int k = 85;
      std::snprintf(line, sizeof line, "(%d,%d) rgb=(%d,%d,%d) levels r=%d g=%d b=%d\n", y, x, r,
                    g, b, quantize_value(r, k), quantize_value(g, k), quantize_value(b, k));
      text += line;
      text += "  r " + thermometer_str(quantize_value(r, 85), 85) + "\n";
      text += "  g " + thermometer_str(quantize_value(g, 85), 85) + "\n";
      text += "  b " + thermometer_str(quantize_value(b, 85), 85) + "\n";
    } else {
      const auto ycc = rgb_to_ycc(r, g, b);
      const int ly = quantize_value(ycc[0], 2 * n);
      const int lcb = quantize_value(ycc[1], n);
      const int lcr = quantize_value(ycc[2], n);
      std::snprintf(line, sizeof line,
                    "(%d,%d) rgb=(%d,%d,%d) ycc=(%d,%d,%d) levels y=%d cb=%d cr=%d\n", y, x, r, g,
                    b, ycc[0], ycc[1], ycc[2], ly, lcb, lcr);
      text += line;
      text += "  y  " + thermometer_str(ly, 2 * n) + "\n";
      text += "  cb " + thermometer_str(lcb, n) + "\n";
      text += "  cr " + thermometer_str(lcr, n) + "\n";
    }
  }

  Image8 black(1, 1, 3);
  std::fill(black.v.begin(), black.v.end(), uint8_t{0});
  const BitTensor blackBits =
      trgb ? encode_trgb(black) : encode_tycc(black, n);
  const int64_t pos = blackBits.popcount();
  std::snprintf(line, sizeof line, "black pixel: %lld of %lld channels +1%s\n",
                static_cast<long long>(pos), static_cast<long long>(blackBits.size()),
                pos == 0 ? " (all -1)" : "");
  text += line;

  bool roundTrip = true;
  if (!trgb) {
    const QuantizedImage q = quantize(img, n);
    roundTrip = q == quantize_ycc(dequantize(q), n);
    text += std::string("round trip: levels ") + (roundTrip ? "preserved" : "NOT preserved") +
            "\n";
  }

  const std::string dumpPath = out_path(cfg, "encode.txt");
  write_text_file(dumpPath, text);
  write_manifest(cfg, "encode", {dumpPath});
  std::cout << text;
  return roundTrip ? 0 : 1;
}

}  // namespace fbnn
