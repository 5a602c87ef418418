#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "fbnn/core.hpp"

namespace fbnn {

// Shaped container of {-1,+1} values packed 64 per word, row-major over the
// logical index order. Bit 1 encodes +1, bit 0 encodes -1. Padding bits past
// the logical length are kept at 0 so whole-word equality is meaningful.
class BitTensor {
 public:
  BitTensor() = default;

  explicit BitTensor(Shape shape)
      : shape_(std::move(shape)), size_(shape_numel(shape_)), words_((size_ + 63) / 64, 0) {}

  const Shape& shape() const { return shape_; }
  int64_t size() const { return size_; }
  std::span<const uint64_t> words() const { return words_; }
  std::span<uint64_t> words() { return words_; }

  // value at flat index, as +1/-1
  int get(int64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1 ? +1 : -1; }
  bool get_bit(int64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1; }

  void set(int64_t i, int pm1) {
    const uint64_t mask = 1ULL << (i & 63);
    if (pm1 >= 0)
      words_[i >> 6] |= mask;
    else
      words_[i >> 6] &= ~mask;
  }

  void set_bit(int64_t i, bool b) { set(i, b ? +1 : -1); }

  int64_t popcount() const {
    int64_t n = 0;
    for (uint64_t w : words_) n += std::popcount(w);
    return n;
  }

  void fill(int pm1) {
    const uint64_t v = pm1 >= 0 ? ~0ULL : 0ULL;
    for (auto& w : words_) w = v;
    mask_padding();
  }

  // Clears bits past the logical length; call after any word-level surgery.
  void mask_padding() {
    if (words_.empty()) return;
    const int rem = static_cast<int>(size_ & 63);
    if (rem != 0) words_.back() &= (1ULL << rem) - 1;
  }

  bool operator==(const BitTensor& o) const {
    return shape_ == o.shape_ && words_ == o.words_;
  }

  template <typename T>
  static BitTensor pack(Shape shape, std::span<const T> values) {
    BitTensor t(std::move(shape));
    check_dim(static_cast<int64_t>(values.size()) == t.size_, "pack: value count != shape numel");
    for (int64_t i = 0; i < t.size_; ++i)
      if (values[i] >= T(0)) t.words_[i >> 6] |= 1ULL << (i & 63);
    return t;
  }

  std::vector<int8_t> unpack() const {
    std::vector<int8_t> out(size_);
    for (int64_t i = 0; i < size_; ++i) out[i] = static_cast<int8_t>(get(i));
    return out;
  }

  std::vector<double> unpack_real() const {
    std::vector<double> out(size_);
    for (int64_t i = 0; i < size_; ++i) out[i] = get(i);
    return out;
  }

 private:
  Shape shape_;
  int64_t size_ = 0;
  std::vector<uint64_t> words_;
};

// Signed integer accumulations produced by the binary kernels.
struct IntTensor {
  Shape shape;
  std::vector<int32_t> v;

  IntTensor() = default;
  explicit IntTensor(Shape s) : shape(std::move(s)), v(shape_numel(shape), 0) {}
  int64_t size() const { return static_cast<int64_t>(v.size()); }
};

// Reads `len` bits starting at absolute bit offset `off` into a little-endian
// word window. Caller guarantees off+len <= tensor size.
inline uint64_t read_bits64(std::span<const uint64_t> words, int64_t off, int len) {
  const int64_t wi = off >> 6;
  const int sh = static_cast<int>(off & 63);
  uint64_t w = words[wi] >> sh;
  if (sh != 0 && wi + 1 < static_cast<int64_t>(words.size())) w |= words[wi + 1] << (64 - sh);
  if (len < 64) w &= (len == 0) ? 0ULL : ((~0ULL) >> (64 - len));
  return w;
}

// Popcount of XOR over two bit ranges of equal length at arbitrary offsets.
inline int64_t xor_popcount_range(std::span<const uint64_t> a, int64_t offA,
                                  std::span<const uint64_t> b, int64_t offB, int64_t len) {
  int64_t mismatches = 0;
  int64_t done = 0;
  while (done < len) {
    const int chunk = static_cast<int>(std::min<int64_t>(64, len - done));
    const uint64_t wa = read_bits64(a, offA + done, chunk);
    const uint64_t wb = read_bits64(b, offB + done, chunk);
    mismatches += std::popcount(wa ^ wb);
    done += chunk;
  }
  return mismatches;
}

}  // namespace fbnn
