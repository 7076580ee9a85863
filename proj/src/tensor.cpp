#include "sq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>

#include "sq/rng.hpp"

namespace sq {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> d, std::vector<float> values)
    : dims(std::move(d)), data(std::move(values)) {
  if (checked_product(dims) != data.size() || dims.empty())
    throw DimensionError("tensor: extents do not match data length");
}

Tensor Tensor::zeros(std::vector<std::size_t> d) {
  const std::size_t n = checked_product(d);
  if (d.empty()) throw DimensionError("tensor: rank 0");
  Tensor t;
  t.dims = std::move(d);
  t.data.assign(n, 0.0f);
  return t;
}

std::size_t Tensor::cols() const { return dims.empty() ? 0 : dims.back(); }

std::size_t Tensor::rows() const {
  if (dims.empty() || dims.back() == 0) return 0;
  return data.size() / dims.back();
}

bool all_finite(const Tensor& x) {
  return std::all_of(x.data.begin(), x.data.end(), [](float v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be rank 2");
  const std::size_t t = a.dims[0], k = a.dims[1], m = b.dims[1];
  if (b.dims[0] != k) throw DimensionError("matmul: inner extents disagree");

  Tensor y = Tensor::zeros({t, m});
  const float* pa = a.data.data();
  const float* pb = b.data.data();
  float* py = y.data.data();

#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(t); ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      float acc = 0.0f;  // fixed left-to-right fp32 accumulation
      for (std::size_t i = 0; i < k; ++i) acc += pa[r * k + i] * pb[i * m + c];
      py[r * m + c] = acc;
    }
  }
  return y;
}

std::vector<float> channel_absmax(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (rows == 0 || cols == 0) throw DimensionError("channel_absmax: empty tensor");

  std::vector<float> out(cols, 0.0f);
  const float* p = x.data.data();

#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(cols); ++c) {
    float m = 0.0f;
    for (std::size_t r = 0; r < rows; ++r) m = std::max(m, std::fabs(p[r * cols + c]));
    out[static_cast<std::size_t>(c)] = m;
  }
  return out;
}

std::vector<float> row_absmax(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (rows == 0 || cols == 0) throw DimensionError("row_absmax: empty tensor");

  std::vector<float> out(rows, 0.0f);
  const float* p = x.data.data();

#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    float m = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) m = std::max(m, std::fabs(p[r * cols + c]));
    out[static_cast<std::size_t>(r)] = m;
  }
  return out;
}

std::vector<std::size_t> outlier_channels(std::size_t channels, const OutlierSpec& spec) {
  if (spec.outlier_channel_fraction < 0.0 || spec.outlier_channel_fraction > 1.0)
    throw ParameterError("outlier fraction must be in [0,1]");
  const std::size_t count = static_cast<std::size_t>(
      std::ceil(spec.outlier_channel_fraction * static_cast<double>(channels)));
  std::vector<std::size_t> pool(channels);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  SplitMix64 rng(spec.seed);
  // partial Fisher-Yates: the first `count` slots end up with the chosen set
  for (std::size_t i = 0; i < count && channels > 0; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (channels - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + count);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

Tensor gen_outlier_activations(std::size_t tokens, std::size_t channels, const OutlierSpec& spec) {
  return gen_outlier_activations(tokens, channels, spec, spec.seed);
}

Tensor gen_outlier_activations(std::size_t tokens, std::size_t channels, const OutlierSpec& spec,
                               std::uint64_t data_seed) {
  if (channels < 1) throw DimensionError("gen_outlier_activations: channels must be >= 1");
  const std::vector<std::size_t> chosen = outlier_channels(channels, spec);

  Tensor x = Tensor::zeros({tokens, channels});
  SplitMix64 rng(data_seed);
  for (float& v : x.data) v = static_cast<float>(rng.normal());

  std::vector<char> is_outlier(channels, 0);
  for (std::size_t c : chosen) is_outlier[c] = 1;
  const float scale = static_cast<float>(spec.outlier_scale);
  for (std::size_t r = 0; r < tokens; ++r)
    for (std::size_t c = 0; c < channels; ++c)
      if (is_outlier[c]) x.data[r * channels + c] *= scale;
  return x;
}

}  // namespace sq
