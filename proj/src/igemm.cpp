#include "sq/igemm.hpp"

#include <cstdint>

namespace sq {

namespace {

constexpr std::size_t kMaxInnerDim = 65536;  // keeps |acc| <= 127*127*2^16 < 2^31

void check_outer_scales(const QuantizedTensor& xq, const QuantizedTensor& wq) {
  // Activation scales may run over rows (tokens) or be scalar; weight scales
  // over output columns or scalar. A per-channel activation scale or a
  // per-token weight scale lies along the contraction dimension and cannot
  // be applied after the integer product.
  const Granularity gx = xq.scheme.granularity;
  if (gx != Granularity::PerTensor && gx != Granularity::PerToken)
    throw UnsupportedGranularityError(
        "activation scales along the inner (input channel) dimension are not "
        "supported by integer GEMM rescaling");
  const Granularity gw = wq.scheme.granularity;
  if (gw != Granularity::PerTensor && gw != Granularity::PerChannel)
    throw UnsupportedGranularityError(
        "weight scales must be per-tensor or per-output-channel for integer "
        "GEMM rescaling");
}

}  // namespace

IntAccumulator int8_gemm(const QuantizedTensor& xq, const QuantizedTensor& wq) {
  if (xq.dims.size() != 2 || wq.dims.size() != 2)
    throw DimensionError("int8_gemm: operands must be rank 2");
  const std::size_t t = xq.dims[0], k = xq.dims[1], m = wq.dims[1];
  if (wq.dims[0] != k) throw DimensionError("int8_gemm: inner extents disagree");
  if (k > kMaxInnerDim) throw DimensionError("int8_gemm: inner extent exceeds 65536");

  IntAccumulator acc;
  acc.dims = {t, m};
  acc.data.assign(t * m, 0);

  const std::int8_t* px = xq.values.data();
  const std::int8_t* pw = wq.values.data();
  std::int32_t* pa = acc.data.data();

#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(t); ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      std::int32_t s = 0;
      for (std::size_t i = 0; i < k; ++i)
        s += static_cast<std::int32_t>(px[r * k + i]) * static_cast<std::int32_t>(pw[i * m + c]);
      pa[r * m + c] = s;
    }
  }
  return acc;
}

Tensor rescale(const IntAccumulator& acc, const QuantizedTensor& xq, const QuantizedTensor& wq,
               const std::vector<float>* bias) {
  check_outer_scales(xq, wq);
  const std::size_t t = acc.rows(), m = acc.cols();
  if (xq.rows() != t || wq.cols() != m)
    throw DimensionError("rescale: accumulator shape does not match operands");
  if (bias != nullptr && bias->size() != m)
    throw DimensionError("rescale: bias length must match output channels");

  const bool x_per_token = xq.scheme.granularity == Granularity::PerToken;
  const bool w_per_channel = wq.scheme.granularity == Granularity::PerChannel;
  if ((x_per_token && xq.scales.size() != t) || (!x_per_token && xq.scales.size() != 1))
    throw DimensionError("rescale: activation scale count mismatch");
  if ((w_per_channel && wq.scales.size() != m) || (!w_per_channel && wq.scales.size() != 1))
    throw DimensionError("rescale: weight scale count mismatch");

  Tensor y = Tensor::zeros({t, m});
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(t); ++r) {
    const float dx = xq.scales[x_per_token ? static_cast<std::size_t>(r) : 0];
    for (std::size_t c = 0; c < m; ++c) {
      const float dw = wq.scales[w_per_channel ? c : 0];
      float v = static_cast<float>(acc.data[r * m + c]) * dx * dw;
      if (bias != nullptr) v += (*bias)[c];
      y.data[r * m + c] = v;
    }
  }
  return y;
}

Tensor quantized_linear(const Tensor& x, const Tensor& w, SettingLevel level,
                        std::optional<float> act_static_scale, const std::vector<float>* bias) {
  const LevelSchemes schemes = resolve(level);

  QuantizedTensor xq;
  if (schemes.activation.timing == Timing::Static) {
    if (!act_static_scale.has_value())
      throw ConfigError("static activation quantization requires a calibrated scale");
    const std::vector<float> scales{*act_static_scale};
    xq = quantize(x, schemes.activation, &scales);
  } else {
    xq = quantize(x, schemes.activation);
  }

  const QuantizedTensor wq = quantize(w, schemes.weight);
  const IntAccumulator acc = int8_gemm(xq, wq);
  return rescale(acc, xq, wq, bias);
}

}  // namespace sq
