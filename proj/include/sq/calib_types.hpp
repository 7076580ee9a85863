#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sq/smooth.hpp"

namespace sq {

struct CalibConfig {
  std::size_t sample_count = 512;
  std::size_t sequence_length = 64;
  float clip_fraction = 0.0f;  // in [0, 0.5); 0.02 clips the top 2% token rows
  std::uint64_t seed = 0;
};

// Everything the static pipeline needs, collected in one fp32 pass over the
// calibration samples: per-channel maxima at the smoothing attachment
// points, per-token row maxima, and the (optionally clipped) global absmax
// per quantized-operator input.
struct CalibResult {
  std::map<std::string, ChannelStats> stats;
  std::map<std::string, float> static_absmax;
  std::map<std::string, std::vector<float>> token_maxima;
  std::optional<float> alpha_used;
  std::size_t sample_count = 0;
  float clip_fraction = 0.0f;

  bool has(const std::string& key) const { return static_absmax.count(key) != 0; }
  // Static quantization step for one operator input.
  float static_scale(const std::string& key, int bits = 8) const;
};

}  // namespace sq
