#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sq/quant.hpp"
#include "sq/tensor.hpp"

namespace sq {

// Exact int32 accumulator of an int8 matrix product. With K <= 65536 and
// codes in [-127,127] the dot products stay below 2^30, so no saturation.
struct IntAccumulator {
  std::vector<std::size_t> dims;  // [T, C_out]
  std::vector<std::int32_t> data;

  std::size_t rows() const { return dims.empty() ? 0 : dims[0]; }
  std::size_t cols() const { return dims.size() < 2 ? 0 : dims[1]; }
};

// Integer GEMM: exact int32 products and sums of the int8 codes. Scales are
// ignored here; rescale() applies them afterwards.
IntAccumulator int8_gemm(const QuantizedTensor& xq, const QuantizedTensor& wq);

// Y[t,o] = acc[t,o] * dx(t) * dw(o) (+ bias[o]). Scales may only run along
// the outer dimensions: per-tensor or per-token on x, per-tensor or
// per-channel on w. Anything laid out along the contraction dimension is
// rejected, which is exactly the restriction of hardware INT8 GEMM kernels.
Tensor rescale(const IntAccumulator& acc, const QuantizedTensor& xq, const QuantizedTensor& wq,
               const std::vector<float>* bias = nullptr);

// quantize -> int8_gemm -> rescale for one linear layer at a given setting
// level. Static activation timing (O3) needs the calibrated activation
// scale; weights are quantized per-tensor from their own range.
Tensor quantized_linear(const Tensor& x, const Tensor& w, SettingLevel level,
                        std::optional<float> act_static_scale = std::nullopt,
                        const std::vector<float>* bias = nullptr);

namespace serial {
IntAccumulator int8_gemm(const QuantizedTensor& xq, const QuantizedTensor& wq);
}

}  // namespace sq
