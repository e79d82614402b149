#include "labelforge/rng.hpp"

#include <cmath>

namespace labelforge {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return mix(state_);
}

RngStream RngStream::derive(std::string_view label, std::uint64_t a,
                            std::uint64_t b) const {
  // FNV-1a over the label folded into the parent key, then scrambled
  std::uint64_t h = 0xcbf29ce484222325ull ^ state_;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  h = mix(h + kGolden * (a + 1));
  h = mix(h + kGolden * (b + 1));
  return RngStream(h);
}

float RngStream::uniform() {
  return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

float RngStream::uniform(float lo, float hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::uniform_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float RngStream::normal() {
  // u1 shifted away from zero so the log is finite
  double u1 = 1.0 - uniform_double();
  double u2 = uniform_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  return static_cast<float>(r * std::cos(2.0 * 3.14159265358979323846 * u2));
}

std::size_t RngStream::index(std::size_t n) {
  // multiply-shift bounded draw
  return static_cast<std::size_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

}  // namespace labelforge
