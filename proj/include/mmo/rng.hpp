#ifndef MMO_RNG_HPP
#define MMO_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace mmo::rng {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// A draw is a pure function of (key, counter), so independent streams are
// obtained by placing the stream id in the counter block. Realization i of an
// experiment uses stream (base_seed, i); results do not depend on scheduling.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0],
             std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1],
             std::uint32_t(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

// One independent random stream, identified by (seed, stream).
// Uniforms are built from 64 bits and lie strictly inside (0,1); normals use
// Box-Muller on fixed pairs so the sequence is reproducible bit-for-bit
// across platforms and thread counts.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
        stream_lo_(std::uint32_t(stream)),
        stream_hi_(std::uint32_t(stream >> 32)) {}

  std::uint64_t next_u64() {
    if (pos_ == 0) {
      buf_ = Philox4x32::block(
          {std::uint32_t(counter_), std::uint32_t(counter_ >> 32), stream_lo_,
           stream_hi_},
          key_);
      ++counter_;
    }
    const std::uint64_t hi = buf_[pos_];
    const std::uint64_t lo = buf_[pos_ + 1];
    pos_ = (pos_ + 2) % 4;
    return (hi << 32) | lo;
  }

  // Uniform on the open interval (0,1).
  double uniform() {
    return double(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normals(double* out, int n) {
    for (int i = 0; i < n; ++i) out[i] = normal();
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mmo::rng

#endif  // MMO_RNG_HPP
