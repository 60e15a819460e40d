#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pe {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define PE_DEFINE_ERROR(Name)        \
  struct Name : Error {              \
    using Error::Error;              \
  };

PE_DEFINE_ERROR(MissingFile)
PE_DEFINE_ERROR(HeaderMismatch)
PE_DEFINE_ERROR(HuRangeViolation)
PE_DEFINE_ERROR(DimMismatch)
PE_DEFINE_ERROR(EmptyMask)
PE_DEFINE_ERROR(BoxOutOfRange)
PE_DEFINE_ERROR(EmptyInput)
PE_DEFINE_ERROR(ShapeMismatch)
PE_DEFINE_ERROR(LabelOutOfRange)
PE_DEFINE_ERROR(ConfigInvalid)
PE_DEFINE_ERROR(MissingPrerequisite)
PE_DEFINE_ERROR(DegenerateValidationSet)
PE_DEFINE_ERROR(LengthMismatch)
PE_DEFINE_ERROR(OutOfEncodableRange)
PE_DEFINE_ERROR(NoPresentLandmarks)
PE_DEFINE_ERROR(IoError)

#undef PE_DEFINE_ERROR

// Counter-based generator: splitmix64 over (seed, counter). A fixed
// (seed, counter) pair always yields the same stream, independent of
// call history elsewhere, so reruns are portable across platforms.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() {
    uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (++counter_);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // standard normal via Box-Muller
  double next_gaussian() {
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  CounterRng r(base ^ (0xa0761d6478bd642fULL * (index + 1)));
  return r.next_u64();
}

}  // namespace pe
