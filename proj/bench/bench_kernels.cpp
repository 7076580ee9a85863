// Times the OpenMP kernels against their serial references.
//
//   ./sq_bench [reps]

#include <chrono>
#include <cstdio>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sq/igemm.hpp"
#include "sq/quant.hpp"
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

template <typename F>
double time_ms(int reps, F&& fn) {
  fn();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

void row(const char* name, const char* size, double serial_ms, double omp_ms) {
  std::printf("%-16s %-14s %10.3f %10.3f %9.2fx\n", name, size, serial_ms, omp_ms,
              serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;

#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run serial code\n");
#endif
  std::printf("%-16s %-14s %10s %10s %10s\n", "kernel", "size", "serial ms", "omp ms",
              "speedup");

  {
    const Tensor a = random_tensor(512, 512, 1);
    const Tensor b = random_tensor(512, 512, 2);
    const double s = time_ms(reps, [&] { (void)serial::matmul(a, b); });
    const double p = time_ms(reps, [&] { (void)matmul(a, b); });
    row("matmul", "512x512x512", s, p);
  }
  {
    const Tensor a = random_tensor(1024, 1024, 3);
    const QuantizedTensor aq = quantize(a, QuantScheme::per_token());
    const Tensor b = random_tensor(1024, 512, 4);
    const QuantizedTensor bq = quantize(b, QuantScheme::per_channel());
    const double s = time_ms(reps, [&] { (void)serial::int8_gemm(aq, bq); });
    const double p = time_ms(reps, [&] { (void)int8_gemm(aq, bq); });
    row("int8_gemm", "1024x1024x512", s, p);
  }
  {
    const Tensor x = random_tensor(4096, 1024, 5);
    const double s = time_ms(reps, [&] { (void)serial::quantize(x, QuantScheme::per_token()); });
    const double p = time_ms(reps, [&] { (void)quantize(x, QuantScheme::per_token()); });
    row("quantize", "4096x1024", s, p);
  }
  {
    const Tensor x = random_tensor(4096, 2048, 6);
    const double s = time_ms(reps, [&] { (void)serial::channel_absmax(x); });
    const double p = time_ms(reps, [&] { (void)channel_absmax(x); });
    row("channel_absmax", "4096x2048", s, p);
  }
  return 0;
}
