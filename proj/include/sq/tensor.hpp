#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sq/error.hpp"

namespace sq {

// Dense row-major float32 tensor. The last extent is the channel dimension;
// all leading extents together form the row (token) dimension, so a [B,T,C]
// batch and a [T,C] matrix share the same 2-D view.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> d, std::vector<float> values);

  static Tensor zeros(std::vector<std::size_t> d);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return dims.size(); }
  std::size_t cols() const;  // last extent
  std::size_t rows() const;  // product of leading extents

  float operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  float& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
};

bool all_finite(const Tensor& x);

// Channels amplified by a fixed multiplicative factor. The channel set is a
// function of (seed, channel count) only, so it persists across every token
// row and every sample drawn against the same spec.
struct OutlierSpec {
  double outlier_channel_fraction = 0.0;  // in [0,1]
  double outlier_scale = 1.0;
  std::uint64_t seed = 0;
};

// Float matrix product, float32 accumulation in a fixed left-to-right order
// per output element. Rows of the output are computed in parallel.
Tensor matmul(const Tensor& a, const Tensor& b);

// Per-channel absolute maximum over all rows: entry j = max_t |x[t,j]|.
std::vector<float> channel_absmax(const Tensor& x);

// Per-row absolute maximum: entry t = max_j |x[t,j]|.
std::vector<float> row_absmax(const Tensor& x);

// The fixed outlier channel set for a given spec and channel count:
// ceil(fraction * channels) distinct indices drawn by partial Fisher-Yates
// from SplitMix64(spec.seed), sorted ascending.
std::vector<std::size_t> outlier_channels(std::size_t channels, const OutlierSpec& spec);

// i.i.d. standard normal entries (row-major fill order), then the outlier
// channels multiplied by spec.outlier_scale. data_seed selects the sample
// stream; the channel set depends on spec.seed only.
Tensor gen_outlier_activations(std::size_t tokens, std::size_t channels, const OutlierSpec& spec);
Tensor gen_outlier_activations(std::size_t tokens, std::size_t channels, const OutlierSpec& spec,
                               std::uint64_t data_seed);

// Serial scalar kernels used as oracles by the test and benchmark targets.
// Same arithmetic, no OpenMP; results are bit-identical to the parallel
// versions above.
namespace serial {
Tensor matmul(const Tensor& a, const Tensor& b);
std::vector<float> channel_absmax(const Tensor& x);
}  // namespace serial

}  // namespace sq
