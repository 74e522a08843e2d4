#pragma once

#include <cmath>
#include <cstdint>

namespace pathlaw {

// Counter-based random stream (Philox4x32-10). A stream is addressed by
// (seed, purpose, stream_id); draws within a stream are indexed by a running
// counter, so any draw is reproducible independently of evaluation order or
// thread scheduling.
class CounterRng {
 public:
  enum class Purpose : std::uint32_t {
    Simulation = 1,
    PathSampling = 2,
    Augmentation = 3,
    Testing = 4,
  };

  CounterRng(std::uint64_t seed, Purpose purpose, std::uint64_t stream)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32) ^
              (0x9E3779B9u * static_cast<std::uint32_t>(purpose))),
        stream_(stream) {}

  // Uniform double in (0, 1).
  double uniform() {
    if (cache_count_ == 0) refill();
    --cache_count_;
    const std::uint64_t bits = cache_[cache_count_];
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b, std::uint32_t* lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    *lo = static_cast<std::uint32_t>(p);
    return static_cast<std::uint32_t>(p >> 32);
  }

  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
    std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t lo0, lo1;
      const std::uint32_t hi0 = mulhi(0xD2511F53u, c0, &lo0);
      const std::uint32_t hi1 = mulhi(0xCD9E8D57u, c2, &lo1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    cache_[0] = (static_cast<std::uint64_t>(c0) << 32) | c1;
    cache_[1] = (static_cast<std::uint64_t>(c2) << 32) | c3;
    cache_count_ = 2;
    ++counter_;
  }

  std::uint32_t key0_, key1_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t cache_[2] = {0, 0};
  int cache_count_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pathlaw
