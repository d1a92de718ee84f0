// Times the serial reference kernels against their OpenMP counterparts at the
// shapes the two architectures actually use, and checks they agree bit-exactly.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "slagflow/kernels.hpp"
#include "slagflow/rng.hpp"

using namespace slagflow;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> random_vec(size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

double time_ms(int iters, const std::function<void()>& fn) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int i = 0; i < iters; ++i) fn();
  const auto end = Clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / iters;
}

struct ConvCase {
  const char* name;
  int64_t n, cin, lin, cout, k, pad;
};

void bench_conv(const ConvCase& c, Rng& rng) {
  const int64_t lout = c.lin + 2 * c.pad - c.k + 1;
  const auto x = random_vec(static_cast<size_t>(c.n * c.cin * c.lin), rng);
  const auto w = random_vec(static_cast<size_t>(c.cout * c.cin * c.k), rng);
  const auto b = random_vec(static_cast<size_t>(c.cout), rng);
  std::vector<float> y_ref(static_cast<size_t>(c.n * c.cout * lout));
  std::vector<float> y_par(y_ref.size());

  const double flops = 2.0 * static_cast<double>(c.n) * c.cout * c.cin * c.k * lout;
  const int iters = std::max(1, static_cast<int>(2e9 / flops));

  const double serial_ms = time_ms(iters, [&] {
    nn::ref::conv1d_forward(x.data(), c.n, c.cin, c.lin, w.data(), b.data(), c.cout,
                            c.k, c.pad, y_ref.data());
  });
  const double parallel_ms = time_ms(iters, [&] {
    nn::par::conv1d_forward(x.data(), c.n, c.cin, c.lin, w.data(), b.data(), c.cout,
                            c.k, c.pad, y_par.data());
  });
  const bool equal =
      std::memcmp(y_ref.data(), y_par.data(), y_ref.size() * sizeof(float)) == 0;

  std::printf("%-28s %8.2f ms %8.2f ms  %5.2fx  %6.2f GF/s  %s\n", c.name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, flops / parallel_ms / 1e6,
              equal ? "exact" : "MISMATCH");

  // backward passes at the same shape
  const auto dy = random_vec(y_ref.size(), rng);
  std::vector<float> dx_ref(x.size()), dx_par(x.size());
  const double bd_serial = time_ms(iters, [&] {
    nn::ref::conv1d_backward_data(dy.data(), c.n, c.cout, lout, w.data(), c.cin, c.k,
                                  c.pad, c.lin, dx_ref.data());
  });
  const double bd_parallel = time_ms(iters, [&] {
    nn::par::conv1d_backward_data(dy.data(), c.n, c.cout, lout, w.data(), c.cin, c.k,
                                  c.pad, c.lin, dx_par.data());
  });
  std::vector<float> dw_ref(w.size()), dw_par(w.size()), db_ref(b.size()),
      db_par(b.size());
  const double bf_serial = time_ms(iters, [&] {
    std::fill(dw_ref.begin(), dw_ref.end(), 0.0f);
    std::fill(db_ref.begin(), db_ref.end(), 0.0f);
    nn::ref::conv1d_backward_filter(dy.data(), x.data(), c.n, c.cin, c.lin, c.cout,
                                    c.k, c.pad, dw_ref.data(), db_ref.data());
  });
  const double bf_parallel = time_ms(iters, [&] {
    std::fill(dw_par.begin(), dw_par.end(), 0.0f);
    std::fill(db_par.begin(), db_par.end(), 0.0f);
    nn::par::conv1d_backward_filter(dy.data(), x.data(), c.n, c.cin, c.lin, c.cout,
                                    c.k, c.pad, dw_par.data(), db_par.data());
  });
  const bool bwd_equal =
      std::memcmp(dx_ref.data(), dx_par.data(), dx_ref.size() * sizeof(float)) == 0 &&
      std::memcmp(dw_ref.data(), dw_par.data(), dw_ref.size() * sizeof(float)) == 0;
  std::printf("%-28s %8.2f ms %8.2f ms  %5.2fx  (bwd data)     %s\n", "", bd_serial,
              bd_parallel, bd_serial / bd_parallel, bwd_equal ? "exact" : "MISMATCH");
  std::printf("%-28s %8.2f ms %8.2f ms  %5.2fx  (bwd filter)\n", "", bf_serial,
              bf_parallel, bf_serial / bf_parallel);
}

void bench_linear(const char* name, int64_t n, int64_t in, int64_t out, Rng& rng) {
  const auto x = random_vec(static_cast<size_t>(n * in), rng);
  const auto w = random_vec(static_cast<size_t>(out * in), rng);
  const auto b = random_vec(static_cast<size_t>(out), rng);
  std::vector<float> y_ref(static_cast<size_t>(n * out)), y_par(y_ref.size());
  const double flops = 2.0 * static_cast<double>(n) * in * out;
  const int iters = std::max(1, static_cast<int>(5e8 / flops));
  const double serial_ms = time_ms(iters, [&] {
    nn::ref::linear_forward(x.data(), n, in, w.data(), b.data(), out, false,
                            y_ref.data());
  });
  const double parallel_ms = time_ms(iters, [&] {
    nn::par::linear_forward(x.data(), n, in, w.data(), b.data(), out, false,
                            y_par.data());
  });
  const bool equal =
      std::memcmp(y_ref.data(), y_par.data(), y_ref.size() * sizeof(float)) == 0;
  std::printf("%-28s %8.2f ms %8.2f ms  %5.2fx  %6.2f GF/s  %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, flops / parallel_ms / 1e6,
              equal ? "exact" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(7);
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel variants run serially\n");
#endif
  std::printf("%-28s %11s %11s %7s\n", "kernel", "serial", "parallel", "speedup");

  // conv stack shapes for window length 512
  bench_conv({"cnn conv1 1>16 k15 L512", 64, 1, 512, 16, 15, 0}, rng);
  bench_conv({"cnn conv4 64>128 k3 L246", 64, 64, 246, 128, 3, 0}, rng);
  bench_conv({"lstm conv2 32>64 k3 L514", 64, 32, 514, 64, 3, 2}, rng);
  bench_conv({"lstm conv3 64>128 k3 L258", 64, 64, 258, 128, 3, 1}, rng);
  bench_conv({"lstm conv4 128>256 k3 L258", 64, 128, 258, 256, 3, 1}, rng);
  bench_linear("fc 512>256 n64", 64, 512, 256, rng);
  bench_linear("lstm gates 256>400 n64", 64, 256, 400, rng);
  return 0;
}
