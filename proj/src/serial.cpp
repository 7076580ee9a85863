// Serial scalar kernels. These mirror the OpenMP versions instruction for
// instruction (same per-element accumulation order), so the test suite can
// assert bit-identical results and the benchmark can measure the speedup.

#include <algorithm>
#include <cmath>

#include "sq/igemm.hpp"
#include "sq/quant.hpp"
#include "sq/tensor.hpp"

namespace sq::serial {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be rank 2");
  const std::size_t t = a.dims[0], k = a.dims[1], m = b.dims[1];
  if (b.dims[0] != k) throw DimensionError("matmul: inner extents disagree");

  Tensor y = Tensor::zeros({t, m});
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < k; ++i) acc += a.data[r * k + i] * b.data[i * m + c];
      y.data[r * m + c] = acc;
    }
  }
  return y;
}

std::vector<float> channel_absmax(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (rows == 0 || cols == 0) throw DimensionError("channel_absmax: empty tensor");

  std::vector<float> out(cols, 0.0f);
  for (std::size_t c = 0; c < cols; ++c) {
    float m = 0.0f;
    for (std::size_t r = 0; r < rows; ++r) m = std::max(m, std::fabs(x.data[r * cols + c]));
    out[c] = m;
  }
  return out;
}

IntAccumulator int8_gemm(const QuantizedTensor& xq, const QuantizedTensor& wq) {
  if (xq.dims.size() != 2 || wq.dims.size() != 2)
    throw DimensionError("int8_gemm: operands must be rank 2");
  const std::size_t t = xq.dims[0], k = xq.dims[1], m = wq.dims[1];
  if (wq.dims[0] != k) throw DimensionError("int8_gemm: inner extents disagree");

  IntAccumulator acc;
  acc.dims = {t, m};
  acc.data.assign(t * m, 0);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      std::int32_t s = 0;
      for (std::size_t i = 0; i < k; ++i)
        s += static_cast<std::int32_t>(xq.values[r * k + i]) *
             static_cast<std::int32_t>(wq.values[i * m + c]);
      acc.data[r * m + c] = s;
    }
  }
  return acc;
}

}  // namespace sq::serial
