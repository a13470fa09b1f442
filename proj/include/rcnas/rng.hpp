#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace rcnas {

// 64-bit FNV-1a over raw bytes. Used for substream derivation and content keys.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Deterministic RNG with named substreams. Every stochastic site in the
// pipeline owns a stream derived from the run seed plus a purpose tag, so a
// rerun with the same seed replays draw-for-draw regardless of call order
// elsewhere. Distributions are implemented explicitly (not via <random>
// distribution classes, whose output is implementation-defined).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // Child stream keyed by (this stream's seed, tag[, index]). Independent of
  // the parent's draw position.
  RngStream derive(std::string_view tag) const;
  RngStream derive(std::string_view tag, std::uint64_t index) const;

  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  double normal();                     // N(0,1), Marsaglia polar
  std::uint64_t integer(std::uint64_t n);  // uniform on [0, n), n >= 1

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[integer(i)]);
    }
  }

  void fill_normal(float* dst, std::size_t n, double mean = 0.0, double stddev = 1.0);
  void fill_uniform(float* dst, std::size_t n, double lo, double hi);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rcnas
