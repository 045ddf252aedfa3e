#ifndef RSMFG_RNG_H_
#define RSMFG_RNG_H_

#include <cstdint>
#include <limits>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace rsmfg {

// SplitMix64 finalizer.
constexpr std::uint64_t Mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Key of an independent stream; depends only on its arguments, so any
// work item can recreate its stream without coordination.
constexpr std::uint64_t StreamKey(std::uint64_t seed, std::uint64_t a,
                                  std::uint64_t b = 0) {
  return Mix64(Mix64(Mix64(seed) ^ a) ^ (b + 0x632be59bd9b4e019ULL));
}

// SplitMix64 generator; cheap to construct, so one per path or agent.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

class NormalStream {
 public:
  explicit NormalStream(std::uint64_t key) : engine_(key) {}
  double operator()() { return dist_(engine_); }

 private:
  SplitMix64 engine_;
  boost::random::normal_distribution<double> dist_;  // ziggurat
};

}  // namespace rsmfg

#endif  // RSMFG_RNG_H_
