#include "sq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace sq {

namespace {

void validate_scheme(const QuantScheme& scheme, std::size_t cols) {
  if (scheme.bits < 2 || scheme.bits > 8)
    throw ParameterError("quantizer bits must be in [2,8]");
  if (scheme.granularity == Granularity::GroupWise) {
    if (scheme.group_size == 0 || cols % scheme.group_size != 0)
      throw ParameterError("group size must divide the channel extent");
  }
}

std::size_t scale_count(const QuantScheme& scheme, std::size_t rows, std::size_t cols) {
  switch (scheme.granularity) {
    case Granularity::PerTensor: return 1;
    case Granularity::PerToken: return rows;
    case Granularity::PerChannel: return cols;
    case Granularity::GroupWise: return cols / scheme.group_size;
  }
  return 1;
}

std::size_t scale_index(const QuantScheme& scheme, std::size_t r, std::size_t c) {
  switch (scheme.granularity) {
    case Granularity::PerTensor: return 0;
    case Granularity::PerToken: return r;
    case Granularity::PerChannel: return c;
    case Granularity::GroupWise: return c / scheme.group_size;
  }
  return 0;
}

std::vector<float> dynamic_scales(const Tensor& x, const QuantScheme& scheme) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<float> absmax;
  switch (scheme.granularity) {
    case Granularity::PerTensor: {
      float m = 0.0f;
      for (float v : x.data) m = std::max(m, std::fabs(v));
      absmax.assign(1, m);
      break;
    }
    case Granularity::PerToken:
      absmax = row_absmax(x);
      break;
    case Granularity::PerChannel:
      absmax = channel_absmax(x);
      break;
    case Granularity::GroupWise: {
      const std::size_t groups = cols / scheme.group_size;
      absmax.assign(groups, 0.0f);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          absmax[c / scheme.group_size] =
              std::max(absmax[c / scheme.group_size], std::fabs(x.data[r * cols + c]));
      break;
    }
  }
  std::vector<float> scales(absmax.size());
  for (std::size_t i = 0; i < absmax.size(); ++i) scales[i] = compute_step(absmax[i], scheme.bits);
  return scales;
}

std::vector<float> resolve_scales(const Tensor& x, const QuantScheme& scheme,
                                  const std::vector<float>* static_scales) {
  if (scheme.timing == Timing::Static) {
    if (static_scales == nullptr)
      throw ConfigError("static quantization requires calibrated scales");
    if (static_scales->size() != scale_count(scheme, x.rows(), x.cols()))
      throw ConfigError("static scale count does not match the scheme granularity");
    for (float s : *static_scales)
      if (!(s > 0.0f) || !std::isfinite(s)) throw DataError("quantization scale must be positive");
    return *static_scales;
  }
  return dynamic_scales(x, scheme);
}

inline std::int8_t encode_one(float v, float scale, int qmax) {
  const double q = std::round(static_cast<double>(v) / static_cast<double>(scale));
  const double lim = static_cast<double>(qmax);
  return static_cast<std::int8_t>(std::clamp(q, -lim, lim));
}

}  // namespace

std::size_t QuantizedTensor::cols() const { return dims.empty() ? 0 : dims.back(); }

std::size_t QuantizedTensor::rows() const {
  if (dims.empty() || dims.back() == 0) return 0;
  return values.size() / dims.back();
}

LevelSchemes resolve(SettingLevel level) {
  const QuantScheme w = QuantScheme::per_tensor(Timing::Dynamic);
  switch (level) {
    case SettingLevel::O1: return {w, QuantScheme::per_token(Timing::Dynamic)};
    case SettingLevel::O2: return {w, QuantScheme::per_tensor(Timing::Dynamic)};
    case SettingLevel::O3: return {w, QuantScheme::per_tensor(Timing::Static)};
  }
  return {w, QuantScheme::per_tensor(Timing::Dynamic)};
}

const char* level_name(SettingLevel level) {
  switch (level) {
    case SettingLevel::O1: return "O1";
    case SettingLevel::O2: return "O2";
    case SettingLevel::O3: return "O3";
  }
  return "?";
}

std::optional<SettingLevel> parse_level(const std::string& s) {
  if (s == "O1" || s == "o1") return SettingLevel::O1;
  if (s == "O2" || s == "o2") return SettingLevel::O2;
  if (s == "O3" || s == "o3") return SettingLevel::O3;
  return std::nullopt;
}

float compute_step(float absmax, int bits) {
  if (bits < 2 || bits > 8) throw ParameterError("quantizer bits must be in [2,8]");
  if (!(absmax >= 0.0f) || !std::isfinite(absmax))
    throw ParameterError("absmax must be finite and non-negative");
  if (absmax == 0.0f) return 1.0f;  // dead tensor: any step works, pick 1
  return absmax / static_cast<float>((1 << (bits - 1)) - 1);
}

QuantizedTensor quantize(const Tensor& x, const QuantScheme& scheme,
                         const std::vector<float>* static_scales) {
  validate_scheme(scheme, x.cols());
  if (x.size() == 0) throw DimensionError("quantize: empty tensor");

  QuantizedTensor q;
  q.dims = x.dims;
  q.scheme = scheme;
  q.scales = resolve_scales(x, scheme, static_scales);
  q.values.resize(x.size());

  const std::size_t rows = x.rows(), cols = x.cols();
  const int qmax = q.qmax();
  const float* px = x.data.data();
  const float* ps = q.scales.data();
  std::int8_t* pv = q.values.data();

#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      pv[i] = encode_one(px[i], ps[scale_index(scheme, static_cast<std::size_t>(r), c)], qmax);
    }
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  Tensor x;
  x.dims = q.dims;
  x.data.resize(q.values.size());

  const std::size_t rows = q.rows(), cols = q.cols();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      x.data[i] = static_cast<float>(q.values[i]) *
                  q.scales[scale_index(q.scheme, static_cast<std::size_t>(r), c)];
    }
  }
  return x;
}

Tensor fake_quant(const Tensor& x, const QuantScheme& scheme,
                  const std::vector<float>* static_scales) {
  return dequantize(quantize(x, scheme, static_scales));
}

double effective_levels(double channel_absmax, double tensor_absmax, int bits) {
  if (bits < 2 || bits > 8) throw ParameterError("quantizer bits must be in [2,8]");
  if (!(tensor_absmax > 0.0)) throw ParameterError("tensor absmax must be positive");
  if (channel_absmax < 0.0 || channel_absmax > tensor_absmax)
    throw DataError("channel absmax must lie in [0, tensor absmax]");
  // multiply by 2^bits via exponent shift; exact
  return std::ldexp(channel_absmax / tensor_absmax, bits);
}

OutlierParts decompose_outliers(const Tensor& x, float threshold,
                                const QuantScheme& dense_scheme) {
  if (!(threshold > 0.0f)) throw ParameterError("decompose threshold must be positive");

  const std::vector<float> cmax = channel_absmax(x);
  const std::size_t rows = x.rows(), cols = x.cols();

  OutlierParts parts;
  for (std::size_t c = 0; c < cols; ++c)
    if (cmax[c] >= threshold) parts.channels.push_back(c);

  Tensor dense_f = x;
  parts.sparse = Tensor::zeros(x.dims);
  for (std::size_t c : parts.channels) {
    for (std::size_t r = 0; r < rows; ++r) {
      parts.sparse.data[r * cols + c] = x.data[r * cols + c];
      dense_f.data[r * cols + c] = 0.0f;
    }
  }
  parts.dense = quantize(dense_f, dense_scheme);
  return parts;
}

QuantizedTensor transposed(const QuantizedTensor& q) {
  if (q.dims.size() != 2) throw DimensionError("transposed: rank 2 only");
  if (q.scheme.granularity == Granularity::GroupWise)
    throw ParameterError("transposed: group-wise scales do not transpose");

  QuantizedTensor t;
  t.dims = {q.dims[1], q.dims[0]};
  t.scales = q.scales;
  t.scheme = q.scheme;
  if (q.scheme.granularity == Granularity::PerToken)
    t.scheme.granularity = Granularity::PerChannel;
  else if (q.scheme.granularity == Granularity::PerChannel)
    t.scheme.granularity = Granularity::PerToken;

  const std::size_t r0 = q.dims[0], c0 = q.dims[1];
  t.values.resize(q.values.size());
  for (std::size_t r = 0; r < r0; ++r)
    for (std::size_t c = 0; c < c0; ++c) t.values[c * r0 + r] = q.values[r * c0 + c];
  return t;
}

namespace serial {

QuantizedTensor quantize(const Tensor& x, const QuantScheme& scheme,
                         const std::vector<float>* static_scales) {
  validate_scheme(scheme, x.cols());
  if (x.size() == 0) throw DimensionError("quantize: empty tensor");

  QuantizedTensor q;
  q.dims = x.dims;
  q.scheme = scheme;
  q.scales = resolve_scales(x, scheme, static_scales);
  q.values.resize(x.size());

  const std::size_t rows = x.rows(), cols = x.cols();
  const int qmax = q.qmax();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      q.values[r * cols + c] =
          encode_one(x.data[r * cols + c], q.scales[scale_index(scheme, r, c)], qmax);
  return q;
}

}  // namespace serial

}  // namespace sq
