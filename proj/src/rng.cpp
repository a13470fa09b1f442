#include "rcnas/rng.hpp"

#include <array>
#include <cmath>
#include <cstring>

namespace rcnas {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::array<char, 8> buf;
  std::memcpy(buf.data(), &seed, 8);
  std::uint64_t h = fnv1a64(std::string_view(buf.data(), 8));
  return fnv1a64(tag, h);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed), eng_(seed) {}

RngStream RngStream::derive(std::string_view tag) const {
  return RngStream(mix_seed(seed_, tag));
}

RngStream RngStream::derive(std::string_view tag, std::uint64_t index) const {
  std::string t(tag);
  t += '/';
  t += std::to_string(index);
  return RngStream(mix_seed(seed_, t));
}

double RngStream::uniform() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

std::uint64_t RngStream::integer(std::uint64_t n) {
  // rejection sampling on the top bits, unbiased for any n >= 1
  if (n <= 1) return 0;
  const std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return x % n;
}

void RngStream::fill_normal(float* dst, std::size_t n, double mean, double stddev) {
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = static_cast<float>(mean + stddev * normal());
  }
}

void RngStream::fill_uniform(float* dst, std::size_t n, double lo, double hi) {
  for (std::size_t i = 0; i < n; ++i) {
    dst[i] = static_cast<float>(uniform(lo, hi));
  }
}

}  // namespace rcnas
