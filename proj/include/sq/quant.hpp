#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sq/tensor.hpp"

namespace sq {

// Scale granularity over the 2-D view of a tensor (rows x channels).
// PerToken attaches one scale per row; PerChannel one per column; GroupWise
// one per fixed-size column group.
enum class Granularity : std::uint8_t { PerTensor, PerToken, PerChannel, GroupWise };

enum class Timing : std::uint8_t { Static, Dynamic };

struct QuantScheme {
  Granularity granularity = Granularity::PerTensor;
  Timing timing = Timing::Dynamic;
  int bits = 8;
  std::size_t group_size = 128;  // GroupWise only

  static QuantScheme per_tensor(Timing t = Timing::Dynamic, int bits = 8) {
    return {Granularity::PerTensor, t, bits, 0};
  }
  static QuantScheme per_token(Timing t = Timing::Dynamic, int bits = 8) {
    return {Granularity::PerToken, t, bits, 0};
  }
  static QuantScheme per_channel(Timing t = Timing::Dynamic, int bits = 8) {
    return {Granularity::PerChannel, t, bits, 0};
  }
  static QuantScheme group_wise(std::size_t group_size, Timing t = Timing::Dynamic, int bits = 8) {
    return {Granularity::GroupWise, t, bits, group_size};
  }
};

// Symmetric integer codes plus the scale vector that maps them back to
// floats. Codes stay within +/-(2^(bits-1)-1); the most negative code is
// never emitted.
struct QuantizedTensor {
  std::vector<std::size_t> dims;
  std::vector<std::int8_t> values;
  std::vector<float> scales;  // length 1 | rows | cols | cols/group_size
  QuantScheme scheme;

  std::size_t size() const { return values.size(); }
  std::size_t cols() const;
  std::size_t rows() const;
  int qmax() const { return (1 << (scheme.bits - 1)) - 1; }
};

// Weight/activation scheme pairs for the three efficiency levels:
//   O1: per-tensor weights, per-token dynamic activations
//   O2: per-tensor weights, per-tensor dynamic activations
//   O3: per-tensor weights, per-tensor static activations
enum class SettingLevel : std::uint8_t { O1, O2, O3 };

struct LevelSchemes {
  QuantScheme weight;
  QuantScheme activation;
};

LevelSchemes resolve(SettingLevel level);
const char* level_name(SettingLevel level);
std::optional<SettingLevel> parse_level(const std::string& s);

// Quantization step for a symmetric b-bit quantizer: absmax / (2^(b-1)-1),
// with the degenerate all-zero tensor mapped to step 1.
float compute_step(float absmax, int bits);

// Round-half-away-from-zero to codes, clamped to +/-(2^(bits-1)-1). Dynamic
// timing derives scales from x at the scheme's granularity; Static timing
// requires caller-provided scales of the matching length.
QuantizedTensor quantize(const Tensor& x, const QuantScheme& scheme,
                         const std::vector<float>* static_scales = nullptr);

Tensor dequantize(const QuantizedTensor& q);

// quantize followed by dequantize; simulates quantization error in float.
Tensor fake_quant(const Tensor& x, const QuantScheme& scheme,
                  const std::vector<float>* static_scales = nullptr);

// Number of integer levels actually usable by a channel with absolute
// maximum m_i under a shared scale derived from the tensor maximum m:
// 2^bits * m_i / m.
double effective_levels(double channel_absmax, double tensor_absmax, int bits);

// Mixed int8/float split of an activation tensor: channels whose absolute
// maximum reaches the threshold are zeroed in the int8 part and kept exactly
// in the float part. dequantize(dense) + sparse recomposes the input up to
// quantization error in the non-outlier channels.
struct OutlierParts {
  QuantizedTensor dense;
  Tensor sparse;
  std::vector<std::size_t> channels;  // indices moved to the float part
};

OutlierParts decompose_outliers(const Tensor& x, float threshold,
                                const QuantScheme& dense_scheme = QuantScheme::per_tensor());

// 2-D transpose; PerToken and PerChannel swap roles, scales are shared.
QuantizedTensor transposed(const QuantizedTensor& q);

namespace serial {
QuantizedTensor quantize(const Tensor& x, const QuantScheme& scheme,
                         const std::vector<float>* static_scales = nullptr);
}

}  // namespace sq
