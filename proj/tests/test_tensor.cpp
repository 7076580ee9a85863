#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sq/metrics.hpp"
#include "sq/rng.hpp"
#include "sq/tensor.hpp"

using namespace sq;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Tensor t = Tensor::zeros({r, c});
  SplitMix64 rng(seed);
  for (float& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

// double-precision triple loop, independent of the library kernel
std::vector<double> matmul_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t t = a.dims[0], k = a.dims[1], m = b.dims[1];
  std::vector<double> y(t * m, 0.0);
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        acc += static_cast<double>(a.data[r * k + i]) * static_cast<double>(b.data[i * m + c]);
      y[r * m + c] = acc;
    }
  return y;
}

}  // namespace

TEST_CASE("matmul identity and zero") {
  Tensor w = random_tensor(2, 3, 42);
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor y = matmul(eye, w);
  CHECK(y.data == w.data);

  Tensor zero_row = Tensor::zeros({1, 2});
  Tensor z = matmul(zero_row, w);
  for (float v : z.data) CHECK(v == 0.0f);
}

TEST_CASE("matmul agrees with scalar oracle") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SplitMix64 pick(seed);
    const std::size_t t = 1 + pick.next_u64() % 64;
    const std::size_t k = 1 + pick.next_u64() % 64;
    const std::size_t m = 1 + pick.next_u64() % 64;
    Tensor a = random_tensor(t, k, seed * 3 + 1);
    Tensor b = random_tensor(k, m, seed * 3 + 2);
    Tensor y = matmul(a, b);
    const std::vector<double> ref = matmul_oracle(a, b);
    double ref_max = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref_max = std::max(ref_max, std::fabs(ref[i]));
      diff = std::max(diff, std::fabs(static_cast<double>(y.data[i]) - ref[i]));
    }
    CHECK(diff <= 1e-6 * std::max(ref_max, 1.0));
  }
}

TEST_CASE("matmul shape mismatch") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("channel_absmax basics") {
  Tensor x({2, 2}, {1, -3, 2, 0});
  CHECK(channel_absmax(x) == std::vector<float>{2, 3});

  Tensor z = Tensor::zeros({3, 4});
  for (float v : channel_absmax(z)) CHECK(v == 0.0f);

  CHECK_THROWS_AS(channel_absmax(Tensor{}), DimensionError);
}

TEST_CASE("channel_absmax agrees with brute-force scan") {
  Tensor x = gen_outlier_activations(64, 128, {0.01, 100.0, 7});
  const std::vector<float> got = channel_absmax(x);
  for (std::size_t c = 0; c < 128; ++c) {
    float m = 0.0f;
    for (std::size_t r = 0; r < 64; ++r) m = std::max(m, std::fabs(x(r, c)));
    CHECK(got[c] == m);
  }
}

TEST_CASE("channel_absmax is token-permutation equivariant") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Tensor x = random_tensor(17, 9, seed);
    const std::vector<float> before = channel_absmax(x);

    std::vector<std::size_t> perm(17);
    for (std::size_t i = 0; i < 17; ++i) perm[i] = i;
    SplitMix64 rng(seed ^ 0x5555);
    for (std::size_t i = 16; i > 0; --i) std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);

    Tensor shuffled = Tensor::zeros({17, 9});
    for (std::size_t r = 0; r < 17; ++r)
      for (std::size_t c = 0; c < 9; ++c) shuffled(r, c) = x(perm[r], c);
    CHECK(channel_absmax(shuffled) == before);
  }
}

TEST_CASE("outlier generator channel count and determinism") {
  const OutlierSpec spec{0.01, 100.0, 123};
  CHECK(outlier_channels(128, spec).size() == 2);  // ceil(1.28)
  CHECK(outlier_channels(128, {0.0, 100.0, 123}).empty());

  Tensor a = gen_outlier_activations(16, 128, spec);
  Tensor b = gen_outlier_activations(16, 128, spec);
  CHECK(a.data == b.data);

  const std::vector<float> cmax = channel_absmax(a);
  const auto chans = outlier_channels(128, spec);
  std::vector<float> normal;
  for (std::size_t c = 0; c < 128; ++c)
    if (std::find(chans.begin(), chans.end(), c) == chans.end()) normal.push_back(cmax[c]);
  std::sort(normal.begin(), normal.end());
  const float median = normal[normal.size() / 2];
  for (std::size_t c : chans) CHECK(cmax[c] / median > 10.0f);
}

TEST_CASE("outlier ratio property") {
  for (double scale : {10.0, 50.0, 100.0}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const OutlierSpec spec{0.02, scale, seed};
      Tensor x = gen_outlier_activations(32, 64, spec);
      const std::vector<float> cmax = channel_absmax(x);
      const auto chans = outlier_channels(64, spec);
      float out_max = 0.0f;
      std::vector<float> normal;
      for (std::size_t c = 0; c < 64; ++c) {
        if (std::find(chans.begin(), chans.end(), c) != chans.end())
          out_max = std::max(out_max, cmax[c]);
        else
          normal.push_back(cmax[c]);
      }
      std::sort(normal.begin(), normal.end());
      CHECK(out_max / normal[normal.size() / 2] >= scale / 4.0);
    }
  }
}

TEST_CASE("outlier generator rejects bad fraction") {
  CHECK_THROWS_AS(gen_outlier_activations(4, 4, {1.5, 2.0, 0}), ParameterError);
  CHECK_THROWS_AS(gen_outlier_activations(4, 4, {-0.1, 2.0, 0}), ParameterError);
}

TEST_CASE("generated tensors are finite") {
  Tensor x = gen_outlier_activations(64, 128, {0.05, 100.0, 9});
  CHECK(all_finite(x));
}

TEST_CASE("tensor constructor validates extents") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), DimensionError);
  CHECK_THROWS_AS(Tensor({}, {}), DimensionError);
}
