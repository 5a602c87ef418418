#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fbnn/arch.hpp"
#include "fbnn/replay.hpp"

namespace fbnn {

// ---------------------------------------------------------------------------
// Little-endian byte streams. All multi-byte integers are written LSB first by
// explicit byte composition, so files are identical across hosts; doubles
// travel as their IEEE-754 bit patterns.
// ---------------------------------------------------------------------------

struct ByteWriter {
  std::string buf;

  void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf.append(s);
  }
  void bytes(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
};

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void bytes(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
};

namespace detail {

constexpr char kMagic[4] = {'F', 'B', 'N', 'N'};
constexpr uint32_t kFormatVersion = 1;
constexpr uint8_t kFlagBuffer = 1;
constexpr uint8_t kFlagProgress = 2;

inline void write_shape(ByteWriter& w, const Shape& s) {
  w.u32(static_cast<uint32_t>(s.size()));
  for (int64_t d : s) w.i64(d);
}

inline Shape read_shape(ByteReader& r) {
  Shape s(r.u32());
  for (auto& d : s) d = r.i64();
  return s;
}

inline void write_bits(ByteWriter& w, const BitTensor& b) {
  write_shape(w, b.shape());
  const auto words = b.words();
  w.u32(static_cast<uint32_t>(words.size()));
  for (uint64_t x : words) w.u64(x);
}

inline BitTensor read_bits(ByteReader& r) {
  BitTensor b(read_shape(r));
  auto words = b.words();
  const uint32_t n = r.u32();
  if (n != words.size()) throw IoError("checkpoint: packed word count does not match shape");
  for (auto& x : words) x = r.u64();
  b.mask_padding();
  return b;
}

inline void write_f64_vec(ByteWriter& w, const std::vector<double>& v) {
  for (double x : v) w.f64(x);
}

inline void read_f64_vec(ByteReader& r, std::vector<double>& v) {
  for (auto& x : v) x = r.f64();
}

// Parameters in traversal order with structural names, matching
// Model::collect_params exactly.
inline std::vector<std::pair<std::string, QatParam*>> named_params(Model& m) {
  std::vector<std::pair<std::string, QatParam*>> out;
  auto add = [&](const char* section, std::vector<std::unique_ptr<Block>>& blocks) {
    for (size_t i = 0; i < blocks.size(); ++i) {
      std::vector<QatParam*> ps;
      blocks[i]->collect_params(ps);
      for (size_t j = 0; j < ps.size(); ++j)
        out.emplace_back(section + std::to_string(i) + ".p" + std::to_string(j), ps[j]);
    }
  };
  add("fe", m.fe);
  add("clf", m.clf);
  out.emplace_back("head.w", &m.head.w);
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

}  // namespace detail

// Header fields readable without touching the (large) parameter sections;
// enough to rebuild a structurally matching model via the factory.
struct CheckpointInfo {
  uint32_t version = 0;
  bool inferenceOnly = false;
  uint64_t seed = 0;
  uint64_t archDigest = 0;
  std::string archId;
  bool feFrozen = false;
  Shape inputShape;
  int latentDim = 0;
  int nClasses = 0;
  bool hasBuffer = false;
  bool hasProgress = false;
};

struct LoadedCheckpoint {
  CheckpointInfo info;
  ReplayBuffer buffer;        // default-empty when the file carries none
  ScenarioProgress progress;  // default when the file carries none
};

namespace detail {

inline CheckpointInfo read_header(ByteReader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint: bad magic bytes");
  CheckpointInfo h;
  h.version = r.u32();
  if (h.version != kFormatVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(h.version));
  h.inferenceOnly = r.u8() != 0;
  h.seed = r.u64();
  h.archDigest = r.u64();
  h.archId = r.str();
  const uint8_t flags = r.u8();
  h.hasBuffer = (flags & kFlagBuffer) != 0;
  h.hasProgress = (flags & kFlagProgress) != 0;
  h.feFrozen = r.u8() != 0;
  h.inputShape = read_shape(r);
  h.latentDim = r.i32();
  h.nClasses = r.i32();
  return h;
}

inline void write_buffer(ByteWriter& w, const ReplayBuffer& b) {
  w.u8(b.mode == BufferMode::latent ? 1 : 0);
  w.i64(b.maxSamples);
  w.i64(b.maxBits);
  w.i32(b.labelBits);
  w.u64(b.seed);
  w.i64(b.updatesDone);
  w.i64(b.quotaZeroClasses);
  w.i64(b.size());
  for (const auto& e : b.entries) {
    w.i32(e.label);
    if (b.mode == BufferMode::native) {
      const auto& img = e.image;
      const size_t px = static_cast<size_t>(img.h) * static_cast<size_t>(img.w);
      check_dim(img.yLevel.size() == px && img.cbLevel.size() == px && img.crLevel.size() == px,
                "write_buffer: image plane size mismatch");
      w.i32(img.h);
      w.i32(img.w);
      w.i32(img.n);
      w.bytes(img.yLevel.data(), px);
      w.bytes(img.cbLevel.data(), px);
      w.bytes(img.crLevel.data(), px);
    } else {
      write_bits(w, e.latent);
    }
  }
}

inline ReplayBuffer read_buffer(ByteReader& r) {
  ReplayBuffer b;
  b.mode = r.u8() != 0 ? BufferMode::latent : BufferMode::native;
  b.maxSamples = r.i64();
  b.maxBits = r.i64();
  b.labelBits = r.i32();
  b.seed = r.u64();
  b.updatesDone = r.i64();
  b.quotaZeroClasses = r.i64();
  const int64_t n = r.i64();
  b.entries.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    BufferEntry e;
    e.label = r.i32();
    if (b.mode == BufferMode::native) {
      const int h = r.i32(), w = r.i32(), lv = r.i32();
      e.image = QuantizedImage(h, w, lv);
      const size_t px = static_cast<size_t>(h) * static_cast<size_t>(w);
      r.bytes(e.image.yLevel.data(), px);
      r.bytes(e.image.cbLevel.data(), px);
      r.bytes(e.image.crLevel.data(), px);
    } else {
      e.latent = read_bits(r);
    }
    b.entries.push_back(std::move(e));
  }
  return b;
}

inline void write_progress(ByteWriter& w, const ScenarioProgress& p) {
  w.u8(p.pretrainDone ? 1 : 0);
  w.i32(p.tasksDone);
  w.u32(static_cast<uint32_t>(p.classOrder.size()));
  for (int c : p.classOrder) w.i32(c);
  w.u32(static_cast<uint32_t>(p.report.rows.size()));
  for (const auto& row : p.report.rows) {
    w.i32(row.task);
    w.str(row.subset);
    w.str(row.split);
    w.u8(row.accuracy.has_value() ? 1 : 0);
    w.f64(row.accuracy.value_or(0.0));
    w.u8(row.dispersion.has_value() ? 1 : 0);
    w.f64(row.dispersion.value_or(0.0));
    w.i32(row.epochs);
    w.i64(row.bufferBits);
    w.i64(row.bufferSamples);
  }
}

inline ScenarioProgress read_progress(ByteReader& r) {
  ScenarioProgress p;
  p.pretrainDone = r.u8() != 0;
  p.tasksDone = r.i32();
  p.classOrder.resize(r.u32());
  for (auto& c : p.classOrder) c = r.i32();
  p.report.rows.resize(r.u32());
  for (auto& row : p.report.rows) {
    row.task = r.i32();
    row.subset = r.str();
    row.split = r.str();
    const bool hasAcc = r.u8() != 0;
    const double acc = r.f64();
    if (hasAcc) row.accuracy = acc;
    const bool hasDisp = r.u8() != 0;
    const double disp = r.f64();
    if (hasDisp) row.dispersion = disp;
    row.epochs = r.i32();
    row.bufferBits = r.i64();
    row.bufferSamples = r.i64();
  }
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoint writing. Full checkpoints carry everything training needs
// (proxies, moments, freeze flags, buffer, scenario progress) so a resumed run
// is indistinguishable from one that never stopped. Inference-only exports
// keep just the packed sign weights: the binary view is authoritative at
// inference, so proxies and optimizer state add nothing.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path, Model& model, uint64_t seed,
                            bool inferenceOnly = false, const ReplayBuffer* buffer = nullptr,
                            const ScenarioProgress* progress = nullptr) {
  ByteWriter w;
  w.bytes(detail::kMagic, 4);
  w.u32(detail::kFormatVersion);
  w.u8(inferenceOnly ? 1 : 0);
  w.u64(seed);
  w.u64(model.arch_digest());
  w.str(model.archId);
  uint8_t flags = 0;
  if (buffer) flags |= detail::kFlagBuffer;
  if (progress) flags |= detail::kFlagProgress;
  w.u8(flags);
  w.u8(model.feFrozen ? 1 : 0);
  detail::write_shape(w, model.inputShape);
  w.i32(model.latentDim);
  w.i32(model.n_classes());

  const auto params = detail::named_params(model);
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    w.str(name);
    detail::write_shape(w, p->shape);
    detail::write_bits(w, p->bin);
    if (!inferenceOnly) {
      w.u8(p->frozen ? 1 : 0);
      detail::write_f64_vec(w, p->proxy);
      detail::write_f64_vec(w, p->m);
      detail::write_f64_vec(w, p->v);
    }
  }
  if (buffer) detail::write_buffer(w, *buffer);
  if (progress) detail::write_progress(w, *progress);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw IoError("short write on checkpoint: " + path);
}

inline CheckpointInfo read_checkpoint_info(const std::string& path) {
  const std::string data = detail::read_file(path);
  ByteReader r(data);
  return detail::read_header(r);
}

// Loads a checkpoint into a structurally matching model (same architecture
// digest; build it via the factory with the header's class count). Full
// checkpoints restore proxies, moments, and freeze flags bit-exactly;
// inference-only ones restore the packed weights and derive ±1 proxies.
inline LoadedCheckpoint load_checkpoint(const std::string& path, Model& model) {
  const std::string data = detail::read_file(path);
  ByteReader r(data);
  LoadedCheckpoint out;
  out.info = detail::read_header(r);
  if (out.info.archDigest != model.arch_digest())
    throw ConfigError("checkpoint architecture mismatch: file is '" + out.info.archId +
                      "', model is '" + model.archId + "'");

  const auto params = detail::named_params(model);
  const uint32_t count = r.u32();
  if (count != params.size()) throw IoError("checkpoint: parameter count mismatch");
  for (auto& [name, p] : params) {
    if (r.str() != name) throw IoError("checkpoint: parameter order mismatch at " + name);
    if (detail::read_shape(r) != p->shape)
      throw IoError("checkpoint: parameter shape mismatch at " + name);
    p->bin = detail::read_bits(r);
    if (!out.info.inferenceOnly) {
      p->frozen = r.u8() != 0;
      detail::read_f64_vec(r, p->proxy);
      detail::read_f64_vec(r, p->m);
      detail::read_f64_vec(r, p->v);
    } else {
      for (int64_t i = 0; i < p->size(); ++i) p->proxy[static_cast<size_t>(i)] = p->bin.get(i);
      std::fill(p->m.begin(), p->m.end(), 0.0);
      std::fill(p->v.begin(), p->v.end(), 0.0);
      p->frozen = false;
    }
    p->zero_grad();
  }
  model.feFrozen = out.info.feFrozen;

  if (out.info.hasBuffer) out.buffer = detail::read_buffer(r);
  if (out.info.hasProgress) out.progress = detail::read_progress(r);
  if (r.pos != data.size()) throw IoError("checkpoint: trailing bytes after payload");
  return out;
}

}  // namespace fbnn
