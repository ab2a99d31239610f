#pragma once

#include <cmath>
#include <cstdint>

namespace statfem {

/// Counter-based splittable RNG stream. Each stream is keyed by a 64-bit
/// key mixed from (seed, stream id); outputs are a strong bit-mix of a
/// Weyl-incremented counter, so streams never share state and any stream
/// can be reconstructed from (key, counter).
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  /// Derive a stream key from a base seed and a stream id.
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream + 0x7f4a7c159e3779b9ULL));
  }

  static RngStream derive(std::uint64_t seed, std::uint64_t stream) {
    return RngStream(derive_key(seed, stream));
  }

  /// Sub-stream of this stream (e.g. per-chain theta vs noise draws).
  RngStream substream(std::uint64_t id) const {
    return RngStream(derive_key(key_, id));
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    counter_ += 1;
    return mix(key_ + 0x9e3779b97f4a7c15ULL * counter_);
  }

  /// Uniform on (0, 1].
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (portable, unlike std::normal_distribution).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fixed stream ids so that parallel chains and sub-purposes never overlap.
namespace stream_id {
inline constexpr std::uint64_t kTheta = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kObsPoints = 4;
inline constexpr std::uint64_t kData = 5;
}  // namespace stream_id

}  // namespace statfem
