#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sq/metrics.hpp"
#include "sq/quant.hpp"
#include "sq/rng.hpp"

using namespace sq;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, float scale = 1.0f) {
  Tensor t = Tensor::zeros({r, c});
  SplitMix64 rng(seed);
  for (float& v : t.data) v = scale * static_cast<float>(rng.normal());
  return t;
}

float local_scale(const QuantizedTensor& q, std::size_t r, std::size_t c) {
  switch (q.scheme.granularity) {
    case Granularity::PerTensor: return q.scales[0];
    case Granularity::PerToken: return q.scales[r];
    case Granularity::PerChannel: return q.scales[c];
    case Granularity::GroupWise: return q.scales[c / q.scheme.group_size];
  }
  return 1.0f;
}

}  // namespace

TEST_CASE("compute_step") {
  CHECK(compute_step(127.0f, 8) == 1.0f);
  CHECK(compute_step(0.0f, 8) == 1.0f);
  CHECK(compute_step(100.0f, 8) == doctest::Approx(0.78740157).epsilon(1e-6));
  CHECK_THROWS_AS(compute_step(1.0f, 1), ParameterError);
  CHECK_THROWS_AS(compute_step(1.0f, 9), ParameterError);
  CHECK_THROWS_AS(compute_step(-1.0f, 8), ParameterError);
}

TEST_CASE("quantize per-tensor dynamic example") {
  Tensor x({3}, {100.0f, 0.5f, -0.5f});
  QuantizedTensor q = quantize(x, QuantScheme::per_tensor());
  CHECK(q.values == std::vector<std::int8_t>{127, 1, -1});
  CHECK(q.scales[0] == doctest::Approx(0.7874).epsilon(1e-3));
}

TEST_CASE("quantize zero tensor") {
  Tensor x = Tensor::zeros({2, 3});
  QuantizedTensor q = quantize(x, QuantScheme::per_tensor());
  CHECK(q.scales[0] == 1.0f);
  for (auto v : q.values) CHECK(v == 0);
}

TEST_CASE("quantize per-token row scales") {
  Tensor x({2, 2}, {1, 2, 10, 20});
  QuantizedTensor q = quantize(x, QuantScheme::per_token());
  REQUIRE(q.scales.size() == 2);
  CHECK(q.scales[0] == 2.0f / 127.0f);
  CHECK(q.scales[1] == 20.0f / 127.0f);
}

TEST_CASE("static timing requires scales and positivity") {
  Tensor x = random_tensor(4, 4, 1);
  CHECK_THROWS_AS(quantize(x, QuantScheme::per_tensor(Timing::Static)), ConfigError);
  std::vector<float> bad{-1.0f};
  CHECK_THROWS_AS(quantize(x, QuantScheme::per_tensor(Timing::Static), &bad), DataError);
  std::vector<float> wrong_len{1.0f, 2.0f};
  CHECK_THROWS_AS(quantize(x, QuantScheme::per_tensor(Timing::Static), &wrong_len), ConfigError);
}

TEST_CASE("dequantize unit scale and lattice round-trip") {
  QuantizedTensor q;
  q.dims = {1};
  q.values = {127};
  q.scales = {1.0f};
  q.scheme = QuantScheme::per_tensor();
  CHECK(dequantize(q).data[0] == 127.0f);

  // integer multiples of 0.5 with absmax 63.5 give an exact step of 0.5
  Tensor lattice = Tensor::zeros({1, 255});
  for (int i = 0; i < 255; ++i) lattice.data[i] = 0.5f * static_cast<float>(i - 127);
  Tensor rt = dequantize(quantize(lattice, QuantScheme::per_tensor()));
  CHECK(rt.data == lattice.data);
}

TEST_CASE("round-trip error bounded by half a step") {
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    Tensor x = random_tensor(4, 8, seed, 3.0f);
    QuantizedTensor q = quantize(x, QuantScheme::per_tensor());
    Tensor back = dequantize(q);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float bound = q.scales[0] * 0.5f * (1.0f + 1e-4f) + 1e-30f;
      CHECK(std::fabs(x.data[i] - back.data[i]) <= bound);
    }
  }
}

TEST_CASE("fake-quant per-element bound at every granularity") {
  Tensor x = gen_outlier_activations(32, 64, {0.02, 100.0, 3});
  for (auto scheme : {QuantScheme::per_tensor(), QuantScheme::per_token(),
                      QuantScheme::per_channel(), QuantScheme::group_wise(16)}) {
    QuantizedTensor q = quantize(x, scheme);
    Tensor fq = dequantize(q);
    for (std::size_t r = 0; r < 32; ++r)
      for (std::size_t c = 0; c < 64; ++c) {
        const float d = local_scale(q, r, c);
        CHECK(std::fabs(x(r, c) - fq(r, c)) <= d * 0.5f * (1.0f + 1e-4f) + 1e-30f);
      }
  }
  CHECK(fake_quant(Tensor::zeros({2, 2}), QuantScheme::per_tensor()).data ==
        Tensor::zeros({2, 2}).data);
}

TEST_CASE("per-tensor collapse of small channels to few codes") {
  // channel 0 spans +/-0.01 of the tensor max: at most 3 distinct codes
  Tensor x = Tensor::zeros({16, 2});
  SplitMix64 rng(5);
  for (std::size_t r = 0; r < 16; ++r) {
    x(r, 0) = 0.01f * (2.0f * static_cast<float>(rng.uniform()) - 1.0f);
    x(r, 1) = (r % 2 == 0) ? 1.0f : -1.0f;
  }
  QuantizedTensor q = quantize(x, QuantScheme::per_tensor());
  std::set<std::int8_t> codes;
  for (std::size_t r = 0; r < 16; ++r) codes.insert(q.values[r * 2]);
  CHECK(codes.size() <= 3);
}

TEST_CASE("effective_levels") {
  CHECK(effective_levels(1.0, 100.0, 8) == 2.56);
  CHECK(effective_levels(5.0, 5.0, 8) == 256.0);
  CHECK(effective_levels(0.5, 1.0, 8) == 128.0);
  CHECK_THROWS_AS(effective_levels(2.0, 1.0, 8), DataError);
  CHECK_THROWS_AS(effective_levels(1.0, 0.0, 8), ParameterError);
  CHECK_THROWS_AS(effective_levels(1.0, 1.0, 12), ParameterError);
}

TEST_CASE("symmetric range never emits the most negative code") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Tensor x = random_tensor(8, 8, seed, 10.0f);
    for (auto scheme : {QuantScheme::per_tensor(), QuantScheme::per_token()}) {
      QuantizedTensor q = quantize(x, scheme);
      for (auto v : q.values) CHECK(v != -128);
    }
  }
  // adversarial static scale far below the data range forces saturation
  Tensor x = random_tensor(8, 8, 99, 100.0f);
  std::vector<float> tiny{0.01f};
  QuantizedTensor q = quantize(x, QuantScheme::per_tensor(Timing::Static), &tiny);
  bool saturated = false;
  for (auto v : q.values) {
    CHECK(v >= -127);
    CHECK(v <= 127);
    if (v == 127 || v == -127) saturated = true;
  }
  CHECK(saturated);
}

TEST_CASE("dynamic equals static calibrated on the same tensor") {
  Tensor x = random_tensor(16, 16, 11, 2.0f);
  QuantizedTensor dyn = quantize(x, QuantScheme::per_tensor(Timing::Dynamic));
  std::vector<float> scales{dyn.scales[0]};
  QuantizedTensor stat = quantize(x, QuantScheme::per_tensor(Timing::Static), &scales);
  CHECK(dyn.values == stat.values);
  CHECK(dyn.scales == stat.scales);
}

TEST_CASE("granularity ordering on outlier activations") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Tensor x = gen_outlier_activations(64, 128, {0.01, 100.0, seed});
    const double m_pt = mse(fake_quant(x, QuantScheme::per_tensor()), x);
    const double m_tok = mse(fake_quant(x, QuantScheme::per_token()), x);
    const double m_ch = mse(fake_quant(x, QuantScheme::per_channel()), x);
    CHECK(m_ch <= 0.1 * m_pt);
    CHECK(m_tok <= 2.0 * m_pt);
  }
}

TEST_CASE("group-wise validation and scale count") {
  Tensor x = random_tensor(4, 32, 2);
  QuantizedTensor q = quantize(x, QuantScheme::group_wise(8));
  CHECK(q.scales.size() == 4);
  CHECK_THROWS_AS(quantize(x, QuantScheme::group_wise(5)), ParameterError);
  CHECK_THROWS_AS(quantize(x, QuantScheme::group_wise(0)), ParameterError);
}

TEST_CASE("bit widths below 8") {
  Tensor x = random_tensor(8, 8, 21, 5.0f);
  QuantizedTensor q = quantize(x, QuantScheme{Granularity::PerTensor, Timing::Dynamic, 4, 0});
  for (auto v : q.values) {
    CHECK(v >= -7);
    CHECK(v <= 7);
  }
}

TEST_CASE("decompose_outliers") {
  Tensor x = gen_outlier_activations(16, 32, {0.05, 100.0, 4});
  const auto chans = outlier_channels(32, {0.05, 100.0, 4});

  SUBCASE("threshold above the global max keeps everything dense") {
    OutlierParts parts = decompose_outliers(x, 1e6f);
    CHECK(parts.channels.empty());
    for (float v : parts.sparse.data) CHECK(v == 0.0f);
  }

  SUBCASE("small threshold moves the outlier channels to the float part") {
    OutlierParts parts = decompose_outliers(x, 50.0f);
    CHECK(parts.channels == chans);
    // recomposition error is confined to non-outlier channels
    Tensor recomposed = dequantize(parts.dense);
    for (std::size_t i = 0; i < recomposed.size(); ++i)
      recomposed.data[i] += parts.sparse.data[i];
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c : chans) CHECK(recomposed(r, c) == x(r, c));
  }

  SUBCASE("threshold must be positive") {
    CHECK_THROWS_AS(decompose_outliers(x, 0.0f), ParameterError);
  }
}

TEST_CASE("decompose recomposition exact on lattice non-outliers") {
  // non-outlier channel on an exact step lattice, outlier channel huge
  Tensor x = Tensor::zeros({4, 2});
  for (std::size_t r = 0; r < 4; ++r) {
    x(r, 0) = 0.5f * static_cast<float>(r) - 1.0f;  // lattice values
    x(r, 1) = 1000.0f;
  }
  OutlierParts parts = decompose_outliers(x, 10.0f);
  REQUIRE(parts.channels == std::vector<std::size_t>{1});
  // after zeroing the outlier channel the dense absmax is 1.0 -> step 1/127;
  // rebuild on a lattice matching that step instead
  Tensor lat = Tensor::zeros({4, 2});
  const float step = compute_step(1.0f, 8);
  for (std::size_t r = 0; r < 4; ++r) {
    lat(r, 0) = step * static_cast<float>(static_cast<int>(r) * 40 - 60);
    lat(r, 1) = 1000.0f;
  }
  // force absmax 127*step = 1.0 exactly
  lat(0, 0) = -1.0f;
  OutlierParts p2 = decompose_outliers(lat, 10.0f);
  Tensor recomposed = dequantize(p2.dense);
  for (std::size_t i = 0; i < recomposed.size(); ++i) recomposed.data[i] += p2.sparse.data[i];
  CHECK(recomposed.data == lat.data);
}

TEST_CASE("transpose swaps token and channel scales") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  QuantizedTensor q = quantize(x, QuantScheme::per_token());
  QuantizedTensor t = transposed(q);
  CHECK(t.dims == std::vector<std::size_t>{3, 2});
  CHECK(t.scheme.granularity == Granularity::PerChannel);
  CHECK(t.scales == q.scales);
  CHECK(t.values[0 * 2 + 1] == q.values[1 * 3 + 0]);
}
