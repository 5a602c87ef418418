// Command-line front end: subcommands over the header-only training library.
// FBNN_THREADS caps evaluation parallelism for every command.

#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "fbnn/cli.hpp"

namespace {

struct CommonOpts {
  std::string configPath, outDir, dataDir, strategy;
  long long seed = -1;
  double bufferMb = -1.0;
  bool extended = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.configPath, "JSON run configuration file");
  cmd->add_option("--seed", o.seed, "override the run seed");
  cmd->add_option("--out", o.outDir, "output directory");
  cmd->add_option("--data", o.dataDir, "CIFAR binary directory (sets data.kind=cifar)");
  cmd->add_option("--strategy", o.strategy, "incremental strategy name");
  cmd->add_option("--buffer-mb", o.bufferMb, "replay budget in megabits");
  cmd->add_flag("--extended", o.extended, "allow long (CIFAR-scale) training runs");
}

// Config file first, then flag overrides, then validation — all before any
// compute touches the data.
fbnn::RunConfig resolve(const CommonOpts& o, bool trains) {
  fbnn::RunConfig cfg =
      o.configPath.empty() ? fbnn::RunConfig{} : fbnn::load_run_config(o.configPath);
  if (o.seed >= 0) cfg.scenario.seeds = {static_cast<uint64_t>(o.seed)};
  if (!o.outDir.empty()) cfg.outDir = o.outDir;
  if (!o.dataDir.empty()) {
    cfg.data.kind = "cifar";
    cfg.data.dir = o.dataDir;
  }
  if (!o.strategy.empty()) cfg.scenario.strategy = o.strategy;
  if (o.bufferMb >= 0) cfg.scenario.bufferMb = o.bufferMb;
  cfg.validate();
  if (trains && cfg.data.kind == "cifar")
    fbnn::check_cfg(o.extended, "CIFAR training runs take hours; pass --extended to confirm");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fully-binarized network training and incremental-learning tool"};
  app.require_subcommand(1);

  CommonOpts off, pre, cil, ev, enc;
  std::string resumePath, ckptPath;
  fbnn::EncodeCmdOptions encOpt;
  bool encTrgb = false;
  int encLevels = 0;

  auto* cOff = app.add_subcommand("offline", "train on the full dataset");
  add_common(cOff, off);
  auto* cPre = app.add_subcommand("pretrain", "first-phase training on the pre-training classes");
  add_common(cPre, pre);
  auto* cCil = app.add_subcommand("cil", "run a class-incremental scenario");
  add_common(cCil, cil);
  cCil->add_option("--resume", resumePath, "phase checkpoint to continue from");
  auto* cEval = app.add_subcommand("eval", "score a saved checkpoint");
  add_common(cEval, ev);
  cEval->add_option("--checkpoint", ckptPath, "checkpoint file to evaluate")->required();
  auto* cEnc = app.add_subcommand("encode", "inspect the binary input encoding");
  add_common(cEnc, enc);
  cEnc->add_option("--image", encOpt.imagePath, "binary PPM (P6) image; default: synthetic");
  cEnc->add_option("--limit", encOpt.limit, "pixels to dump");
  cEnc->add_flag("--trgb", encTrgb, "use the thermometer-RGB encoding");
  cEnc->add_option("--levels", encLevels, "chroma level count for the YCC encoding");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cOff->parsed()) return fbnn::cmd_offline(resolve(off, true));
    if (cPre->parsed()) return fbnn::cmd_pretrain(resolve(pre, true));
    if (cCil->parsed()) return fbnn::cmd_cil(resolve(cil, true), resumePath);
    if (cEval->parsed()) return fbnn::cmd_eval(resolve(ev, false), ckptPath);
    if (cEnc->parsed()) {
      fbnn::RunConfig cfg = resolve(enc, false);
      if (encTrgb) cfg.arch.encode = "trgb";
      if (encLevels > 0) cfg.arch.levels = encLevels;
      cfg.validate();
      return fbnn::cmd_encode(cfg, encOpt);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
