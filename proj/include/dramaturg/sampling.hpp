#pragma once

#include <cstdint>

namespace dramaturg {

/// Decoding knobs sent with every completion request.
struct SamplingConfig {
  double nucleus_mass = 0.9;
  double temperature = 1.0;
  int max_tokens = 511;
  std::uint64_t seed = 0;

  /// Throws Error(InvalidInput) when a knob is out of range.
  void validate() const;

  friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

}  // namespace dramaturg
