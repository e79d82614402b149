#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace labelforge {

// Keyed counter-based random stream built on the splitmix64 mixer.
//
// A stream's identity is a 64-bit key; derive() produces an independent child
// stream from (parent key, label, a, b) without advancing the parent. Work
// units (cells, epochs, samples) each derive their own stream, so results do
// not depend on scheduling order or thread count.
//
// All draws are implemented by hand rather than with <random> distributions,
// which are implementation-defined and would break byte-identical reruns
// across standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  RngStream derive(std::string_view label, std::uint64_t a = 0,
                   std::uint64_t b = 0) const;

  std::uint64_t next_u64();

  // uniform in [0, 1) with 24 bits of mantissa
  float uniform();
  float uniform(float lo, float hi);
  double uniform_double();  // [0, 1), 53 bits

  // standard normal via Box-Muller; consumes two draws
  float normal();

  // uniform index in [0, n); n must be positive
  std::size_t index(std::size_t n);

  bool bernoulli(float p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace labelforge
