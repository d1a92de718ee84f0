#pragma once

// Numeric kernels behind the network layers. Every compute-heavy kernel has a
// plain serial reference (ref::) and an OpenMP variant (par::) that threads
// over independent output slices only, so the two produce bit-identical
// results; tests assert exact equality and bench_kernels compares throughput.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <vector>

#include "slagflow/errors.hpp"
#include "slagflow/rng.hpp"
#include "slagflow/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slagflow::nn {

enum class Exec { Serial, Parallel };

inline std::atomic<Exec>& exec_state() {
  static std::atomic<Exec> state = [] {
#ifdef _OPENMP
    return std::getenv("SLAGFLOW_SERIAL") ? Exec::Serial : Exec::Parallel;
#else
    return Exec::Serial;
#endif
  }();
  return state;
}

inline Exec default_exec() { return exec_state().load(std::memory_order_relaxed); }
inline void set_default_exec(Exec e) { exec_state().store(e, std::memory_order_relaxed); }

// Per-slice helpers are noinline so the serial and OpenMP callers execute the
// exact same machine code; inlining them separately can vectorize reductions
// differently and break bit-exact agreement.
#if defined(__GNUC__)
#define SLAGFLOW_NOINLINE __attribute__((noinline))
#else
#define SLAGFLOW_NOINLINE
#endif

namespace detail {

template <class T>
inline void axpy(int64_t len, T a, const T* __restrict x, T* __restrict y) {
  for (int64_t i = 0; i < len; ++i) y[i] += a * x[i];
}

// Lane-split reduction: the lane assignment and combine order are fixed, so
// the result is deterministic (though not the naive left-to-right sum), and
// independent vector accumulators hide FMA latency. Used by both ref and par
// kernels, which keeps them bit-identical.
#if defined(__GNUC__) || defined(__clang__)

template <class T>
struct VecTraits;
template <>
struct VecTraits<float> {
  typedef float V __attribute__((vector_size(32)));
  static constexpr int64_t width = 8;
};
template <>
struct VecTraits<double> {
  typedef double V __attribute__((vector_size(32)));
  static constexpr int64_t width = 4;
};

template <class T>
inline T dot(int64_t len, const T* __restrict x, const T* __restrict y) {
  using V = typename VecTraits<T>::V;
  constexpr int64_t kW = VecTraits<T>::width;
  V acc0 = {}, acc1 = {}, acc2 = {}, acc3 = {};
  int64_t i = 0;
  for (; i + 4 * kW <= len; i += 4 * kW) {
    V x0, x1, x2, x3, y0, y1, y2, y3;
    std::memcpy(&x0, x + i, sizeof(V));
    std::memcpy(&y0, y + i, sizeof(V));
    std::memcpy(&x1, x + i + kW, sizeof(V));
    std::memcpy(&y1, y + i + kW, sizeof(V));
    std::memcpy(&x2, x + i + 2 * kW, sizeof(V));
    std::memcpy(&y2, y + i + 2 * kW, sizeof(V));
    std::memcpy(&x3, x + i + 3 * kW, sizeof(V));
    std::memcpy(&y3, y + i + 3 * kW, sizeof(V));
    acc0 += x0 * y0;
    acc1 += x1 * y1;
    acc2 += x2 * y2;
    acc3 += x3 * y3;
  }
  const V acc = (acc0 + acc1) + (acc2 + acc3);
  T total = 0;
  for (; i < len; ++i) total += x[i] * y[i];
  for (int64_t j = 0; j < kW; ++j) total += acc[j];
  return total;
}

#else

template <class T>
inline T dot(int64_t len, const T* x, const T* y) {
  T acc = 0;
  for (int64_t i = 0; i < len; ++i) acc += x[i] * y[i];
  return acc;
}

#endif

// One (sample, out-channel) row of the convolution output.
template <class T>
SLAGFLOW_NOINLINE void conv1d_row(const T* x, int64_t cin, int64_t lin, const T* w_oc, T bias,
                       int64_t k, int64_t pad, int64_t lout, T* y_row) {
  std::fill(y_row, y_row + lout, bias);
  for (int64_t ic = 0; ic < cin; ++ic) {
    const T* x_row = x + ic * lin;
    const T* w_row = w_oc + ic * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const int64_t shift = kk - pad;  // input position = t + shift
      const int64_t t0 = std::max<int64_t>(0, -shift);
      const int64_t t1 = std::min<int64_t>(lout, lin - shift);
      if (t1 > t0) axpy(t1 - t0, w_row[kk], x_row + t0 + shift, y_row + t0);
    }
  }
}

// One (sample, in-channel) row of the input gradient.
template <class T>
SLAGFLOW_NOINLINE void conv1d_grad_row(const T* dy, int64_t cout, int64_t lout, const T* w,
                            int64_t cin, int64_t ic, int64_t k, int64_t pad,
                            int64_t lin, T* dx_row) {
  std::fill(dx_row, dx_row + lin, T(0));
  for (int64_t oc = 0; oc < cout; ++oc) {
    const T* dy_row = dy + oc * lout;
    const T* w_row = w + (oc * cin + ic) * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const int64_t shift = kk - pad;  // output position = s - shift
      const int64_t s0 = std::max<int64_t>(0, shift);
      const int64_t s1 = std::min<int64_t>(lin, lout + shift);
      if (s1 > s0) axpy(s1 - s0, w_row[kk], dy_row + s0 - shift, dx_row + s0);
    }
  }
}

// Weight gradient for one (out-channel, in-channel) filter slice.
template <class T>
SLAGFLOW_NOINLINE void conv1d_filter_row(const T* dy, const T* x, int64_t n, int64_t cin,
                              int64_t lin, int64_t cout, int64_t oc, int64_t ic,
                              int64_t k, int64_t pad, int64_t lout, T* dw_row) {
  for (int64_t kk = 0; kk < k; ++kk) {
    const int64_t shift = kk - pad;
    const int64_t t0 = std::max<int64_t>(0, -shift);
    const int64_t t1 = std::min<int64_t>(lout, lin - shift);
    T acc = 0;
    for (int64_t i = 0; i < n; ++i) {
      const T* dy_row = dy + (i * cout + oc) * lout;
      const T* x_row = x + (i * cin + ic) * lin;
      if (t1 > t0) acc += dot(t1 - t0, dy_row + t0, x_row + t0 + shift);
    }
    dw_row[kk] += acc;
  }
}

template <class T>
SLAGFLOW_NOINLINE void linear_row(const T* x_row, const T* w, const T* b, int64_t in,
                       int64_t out, bool accumulate, T* y_row) {
  for (int64_t o = 0; o < out; ++o) {
    T base = accumulate ? y_row[o] : T(0);
    if (b) base += b[o];
    y_row[o] = base + dot(in, x_row, w + o * in);
  }
}

template <class T>
SLAGFLOW_NOINLINE void bn_channel_train(const T* x, int64_t n, int64_t c, int64_t l, int64_t ch,
                             T gamma, T beta, T momentum, T eps, T* y, T* xhat,
                             T* invstd, T* running_mean, T* running_var) {
  const int64_t cnt = n * l;
  T mean = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = x + (i * c + ch) * l;
    for (int64_t t = 0; t < l; ++t) mean += row[t];
  }
  mean /= static_cast<T>(cnt);
  T var = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = x + (i * c + ch) * l;
    for (int64_t t = 0; t < l; ++t) {
      const T d = row[t] - mean;
      var += d * d;
    }
  }
  var /= static_cast<T>(cnt);
  const T istd = T(1) / std::sqrt(var + eps);
  invstd[ch] = istd;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = x + (i * c + ch) * l;
    T* y_row = y + (i * c + ch) * l;
    T* xh_row = xhat + (i * c + ch) * l;
    for (int64_t t = 0; t < l; ++t) {
      const T xh = (row[t] - mean) * istd;
      xh_row[t] = xh;
      y_row[t] = gamma * xh + beta;
    }
  }
  const T unbiased = cnt > 1 ? var * static_cast<T>(cnt) / static_cast<T>(cnt - 1) : var;
  running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean;
  running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
}

template <class T>
SLAGFLOW_NOINLINE void bn_channel_eval(const T* x, int64_t n, int64_t c, int64_t l, int64_t ch,
                            T gamma, T beta, T rm, T rv, T eps, T* y) {
  const T istd = T(1) / std::sqrt(rv + eps);
  for (int64_t i = 0; i < n; ++i) {
    const T* row = x + (i * c + ch) * l;
    T* y_row = y + (i * c + ch) * l;
    for (int64_t t = 0; t < l; ++t) y_row[t] = gamma * (row[t] - rm) * istd + beta;
  }
}

template <class T>
SLAGFLOW_NOINLINE void bn_channel_backward(const T* dy, int64_t n, int64_t c, int64_t l,
                                int64_t ch, T gamma, const T* xhat, T istd, T* dx,
                                T* dgamma, T* dbeta) {
  const int64_t cnt = n * l;
  T sum_dy = 0, sum_dy_xhat = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* dy_row = dy + (i * c + ch) * l;
    const T* xh_row = xhat + (i * c + ch) * l;
    for (int64_t t = 0; t < l; ++t) {
      sum_dy += dy_row[t];
      sum_dy_xhat += dy_row[t] * xh_row[t];
    }
  }
  dgamma[ch] += sum_dy_xhat;
  dbeta[ch] += sum_dy;
  const T inv_cnt = T(1) / static_cast<T>(cnt);
  for (int64_t i = 0; i < n; ++i) {
    const T* dy_row = dy + (i * c + ch) * l;
    const T* xh_row = xhat + (i * c + ch) * l;
    T* dx_row = dx + (i * c + ch) * l;
    for (int64_t t = 0; t < l; ++t) {
      dx_row[t] = gamma * istd *
                  (dy_row[t] - sum_dy * inv_cnt - xh_row[t] * sum_dy_xhat * inv_cnt);
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serial reference kernels.
// ---------------------------------------------------------------------------
namespace ref {

template <class T>
void conv1d_forward(const T* x, int64_t n, int64_t cin, int64_t lin, const T* w,
                    const T* b, int64_t cout, int64_t k, int64_t pad, T* y) {
  const int64_t lout = lin + 2 * pad - k + 1;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t oc = 0; oc < cout; ++oc)
      detail::conv1d_row(x + i * cin * lin, cin, lin, w + oc * cin * k,
                         b ? b[oc] : T(0), k, pad, lout, y + (i * cout + oc) * lout);
}

template <class T>
void conv1d_backward_data(const T* dy, int64_t n, int64_t cout, int64_t lout,
                          const T* w, int64_t cin, int64_t k, int64_t pad,
                          int64_t lin, T* dx) {
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ic = 0; ic < cin; ++ic)
      detail::conv1d_grad_row(dy + i * cout * lout, cout, lout, w, cin, ic, k, pad,
                              lin, dx + (i * cin + ic) * lin);
}

template <class T>
void conv1d_backward_filter(const T* dy, const T* x, int64_t n, int64_t cin,
                            int64_t lin, int64_t cout, int64_t k, int64_t pad,
                            T* dw, T* db) {
  const int64_t lout = lin + 2 * pad - k + 1;
  for (int64_t oc = 0; oc < cout; ++oc)
    for (int64_t ic = 0; ic < cin; ++ic)
      detail::conv1d_filter_row(dy, x, n, cin, lin, cout, oc, ic, k, pad, lout,
                                dw + (oc * cin + ic) * k);
  if (db) {
    for (int64_t oc = 0; oc < cout; ++oc) {
      T acc = 0;
      for (int64_t i = 0; i < n; ++i) {
        const T* dy_row = dy + (i * cout + oc) * lout;
        for (int64_t t = 0; t < lout; ++t) acc += dy_row[t];
      }
      db[oc] += acc;
    }
  }
}

template <class T>
void linear_forward(const T* x, int64_t n, int64_t in, const T* w, const T* b,
                    int64_t out, bool accumulate, T* y) {
  for (int64_t i = 0; i < n; ++i)
    detail::linear_row(x + i * in, w, b, in, out, accumulate, y + i * out);
}

template <class T>
void linear_backward_data(const T* dy, int64_t n, int64_t out, const T* w,
                          int64_t in, bool accumulate, T* dx) {
  for (int64_t i = 0; i < n; ++i) {
    T* dx_row = dx + i * in;
    if (!accumulate) std::fill(dx_row, dx_row + in, T(0));
    const T* dy_row = dy + i * out;
    for (int64_t o = 0; o < out; ++o) detail::axpy(in, dy_row[o], w + o * in, dx_row);
  }
}

template <class T>
void linear_backward_filter(const T* dy, const T* x, int64_t n, int64_t in,
                            int64_t out, T* dw, T* db) {
  for (int64_t o = 0; o < out; ++o) {
    T* dw_row = dw + o * in;
    T bacc = 0;
    for (int64_t i = 0; i < n; ++i) {
      const T g = dy[i * out + o];
      detail::axpy(in, g, x + i * in, dw_row);
      bacc += g;
    }
    if (db) db[o] += bacc;
  }
}

template <class T>
void bn_forward_train(const T* x, int64_t n, int64_t c, int64_t l, const T* gamma,
                      const T* beta, T momentum, T eps, T* y, T* xhat, T* invstd,
                      T* running_mean, T* running_var) {
  for (int64_t ch = 0; ch < c; ++ch)
    detail::bn_channel_train(x, n, c, l, ch, gamma[ch], beta[ch], momentum, eps, y,
                             xhat, invstd, running_mean, running_var);
}

template <class T>
void bn_forward_eval(const T* x, int64_t n, int64_t c, int64_t l, const T* gamma,
                     const T* beta, const T* running_mean, const T* running_var,
                     T eps, T* y) {
  for (int64_t ch = 0; ch < c; ++ch)
    detail::bn_channel_eval(x, n, c, l, ch, gamma[ch], beta[ch], running_mean[ch],
                            running_var[ch], eps, y);
}

template <class T>
void bn_backward(const T* dy, int64_t n, int64_t c, int64_t l, const T* gamma,
                 const T* xhat, const T* invstd, T* dx, T* dgamma, T* dbeta) {
  for (int64_t ch = 0; ch < c; ++ch)
    detail::bn_channel_backward(dy, n, c, l, ch, gamma[ch], xhat, invstd[ch], dx,
                                dgamma, dbeta);
}

}  // namespace ref

// ---------------------------------------------------------------------------
// OpenMP kernels. Threads partition output slices; per-element arithmetic is
// the shared detail:: helpers, so results match ref:: exactly.
// ---------------------------------------------------------------------------
namespace par {

template <class T>
void conv1d_forward(const T* x, int64_t n, int64_t cin, int64_t lin, const T* w,
                    const T* b, int64_t cout, int64_t k, int64_t pad, T* y) {
  const int64_t lout = lin + 2 * pad - k + 1;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i)
    for (int64_t oc = 0; oc < cout; ++oc)
      detail::conv1d_row(x + i * cin * lin, cin, lin, w + oc * cin * k,
                         b ? b[oc] : T(0), k, pad, lout, y + (i * cout + oc) * lout);
}

template <class T>
void conv1d_backward_data(const T* dy, int64_t n, int64_t cout, int64_t lout,
                          const T* w, int64_t cin, int64_t k, int64_t pad,
                          int64_t lin, T* dx) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ic = 0; ic < cin; ++ic)
      detail::conv1d_grad_row(dy + i * cout * lout, cout, lout, w, cin, ic, k, pad,
                              lin, dx + (i * cin + ic) * lin);
}

template <class T>
void conv1d_backward_filter(const T* dy, const T* x, int64_t n, int64_t cin,
                            int64_t lin, int64_t cout, int64_t k, int64_t pad,
                            T* dw, T* db) {
  const int64_t lout = lin + 2 * pad - k + 1;
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
  for (int64_t oc = 0; oc < cout; ++oc)
    for (int64_t ic = 0; ic < cin; ++ic)
      detail::conv1d_filter_row(dy, x, n, cin, lin, cout, oc, ic, k, pad, lout,
                                dw + (oc * cin + ic) * k);
  if (db) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t oc = 0; oc < cout; ++oc) {
      T acc = 0;
      for (int64_t i = 0; i < n; ++i) {
        const T* dy_row = dy + (i * cout + oc) * lout;
        for (int64_t t = 0; t < lout; ++t) acc += dy_row[t];
      }
      db[oc] += acc;
    }
  }
}

template <class T>
void linear_forward(const T* x, int64_t n, int64_t in, const T* w, const T* b,
                    int64_t out, bool accumulate, T* y) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i)
    detail::linear_row(x + i * in, w, b, in, out, accumulate, y + i * out);
}

template <class T>
void linear_backward_data(const T* dy, int64_t n, int64_t out, const T* w,
                          int64_t in, bool accumulate, T* dx) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) {
    T* dx_row = dx + i * in;
    if (!accumulate) std::fill(dx_row, dx_row + in, T(0));
    const T* dy_row = dy + i * out;
    for (int64_t o = 0; o < out; ++o) detail::axpy(in, dy_row[o], w + o * in, dx_row);
  }
}

template <class T>
void linear_backward_filter(const T* dy, const T* x, int64_t n, int64_t in,
                            int64_t out, T* dw, T* db) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t o = 0; o < out; ++o) {
    T* dw_row = dw + o * in;
    T bacc = 0;
    for (int64_t i = 0; i < n; ++i) {
      const T g = dy[i * out + o];
      detail::axpy(in, g, x + i * in, dw_row);
      bacc += g;
    }
    if (db) db[o] += bacc;
  }
}

template <class T>
void bn_forward_train(const T* x, int64_t n, int64_t c, int64_t l, const T* gamma,
                      const T* beta, T momentum, T eps, T* y, T* xhat, T* invstd,
                      T* running_mean, T* running_var) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t ch = 0; ch < c; ++ch)
    detail::bn_channel_train(x, n, c, l, ch, gamma[ch], beta[ch], momentum, eps, y,
                             xhat, invstd, running_mean, running_var);
}

template <class T>
void bn_forward_eval(const T* x, int64_t n, int64_t c, int64_t l, const T* gamma,
                     const T* beta, const T* running_mean, const T* running_var,
                     T eps, T* y) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t ch = 0; ch < c; ++ch)
    detail::bn_channel_eval(x, n, c, l, ch, gamma[ch], beta[ch], running_mean[ch],
                            running_var[ch], eps, y);
}

template <class T>
void bn_backward(const T* dy, int64_t n, int64_t c, int64_t l, const T* gamma,
                 const T* xhat, const T* invstd, T* dx, T* dgamma, T* dbeta) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t ch = 0; ch < c; ++ch)
    detail::bn_channel_backward(dy, n, c, l, ch, gamma[ch], xhat, invstd[ch], dx,
                                dgamma, dbeta);
}

}  // namespace par

// ---------------------------------------------------------------------------
// Dispatchers.
// ---------------------------------------------------------------------------

template <class T>
void conv1d_forward(const T* x, int64_t n, int64_t cin, int64_t lin, const T* w,
                    const T* b, int64_t cout, int64_t k, int64_t pad, T* y,
                    Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::conv1d_forward(x, n, cin, lin, w, b, cout, k, pad, y);
  else
    ref::conv1d_forward(x, n, cin, lin, w, b, cout, k, pad, y);
}

template <class T>
void conv1d_backward_data(const T* dy, int64_t n, int64_t cout, int64_t lout,
                          const T* w, int64_t cin, int64_t k, int64_t pad,
                          int64_t lin, T* dx, Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::conv1d_backward_data(dy, n, cout, lout, w, cin, k, pad, lin, dx);
  else
    ref::conv1d_backward_data(dy, n, cout, lout, w, cin, k, pad, lin, dx);
}

template <class T>
void conv1d_backward_filter(const T* dy, const T* x, int64_t n, int64_t cin,
                            int64_t lin, int64_t cout, int64_t k, int64_t pad,
                            T* dw, T* db, Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::conv1d_backward_filter(dy, x, n, cin, lin, cout, k, pad, dw, db);
  else
    ref::conv1d_backward_filter(dy, x, n, cin, lin, cout, k, pad, dw, db);
}

template <class T>
void linear_forward(const T* x, int64_t n, int64_t in, const T* w, const T* b,
                    int64_t out, bool accumulate, T* y, Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::linear_forward(x, n, in, w, b, out, accumulate, y);
  else
    ref::linear_forward(x, n, in, w, b, out, accumulate, y);
}

template <class T>
void linear_backward_data(const T* dy, int64_t n, int64_t out, const T* w,
                          int64_t in, bool accumulate, T* dx,
                          Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::linear_backward_data(dy, n, out, w, in, accumulate, dx);
  else
    ref::linear_backward_data(dy, n, out, w, in, accumulate, dx);
}

template <class T>
void linear_backward_filter(const T* dy, const T* x, int64_t n, int64_t in,
                            int64_t out, T* dw, T* db, Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::linear_backward_filter(dy, x, n, in, out, dw, db);
  else
    ref::linear_backward_filter(dy, x, n, in, out, dw, db);
}

template <class T>
void bn_forward_train(const T* x, int64_t n, int64_t c, int64_t l, const T* gamma,
                      const T* beta, T momentum, T eps, T* y, T* xhat, T* invstd,
                      T* running_mean, T* running_var, Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::bn_forward_train(x, n, c, l, gamma, beta, momentum, eps, y, xhat, invstd,
                          running_mean, running_var);
  else
    ref::bn_forward_train(x, n, c, l, gamma, beta, momentum, eps, y, xhat, invstd,
                          running_mean, running_var);
}

template <class T>
void bn_forward_eval(const T* x, int64_t n, int64_t c, int64_t l, const T* gamma,
                     const T* beta, const T* running_mean, const T* running_var,
                     T eps, T* y, Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::bn_forward_eval(x, n, c, l, gamma, beta, running_mean, running_var, eps, y);
  else
    ref::bn_forward_eval(x, n, c, l, gamma, beta, running_mean, running_var, eps, y);
}

template <class T>
void bn_backward(const T* dy, int64_t n, int64_t c, int64_t l, const T* gamma,
                 const T* xhat, const T* invstd, T* dx, T* dgamma, T* dbeta,
                 Exec exec = default_exec()) {
  if (exec == Exec::Parallel)
    par::bn_backward(dy, n, c, l, gamma, xhat, invstd, dx, dgamma, dbeta);
  else
    ref::bn_backward(dy, n, c, l, gamma, xhat, invstd, dx, dgamma, dbeta);
}

// ---------------------------------------------------------------------------
// Cheap elementwise / reduction pieces (single implementation).
// ---------------------------------------------------------------------------

template <class T>
void relu_forward(const T* x, int64_t n, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const T* dy, const T* y, int64_t n, T* dx) {
  for (int64_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
}

// kernel 2, stride 2; remainder sample dropped
template <class T>
void maxpool2_forward(const T* x, int64_t rows, int64_t lin, T* y, int64_t* argmax) {
  const int64_t lout = lin / 2;
  for (int64_t r = 0; r < rows; ++r) {
    const T* x_row = x + r * lin;
    for (int64_t t = 0; t < lout; ++t) {
      const int64_t a = 2 * t;
      const int64_t best = x_row[a] >= x_row[a + 1] ? a : a + 1;
      argmax[r * lout + t] = best;
      y[r * lout + t] = x_row[best];
    }
  }
}

template <class T>
void maxpool2_backward(const T* dy, int64_t rows, int64_t lout, const int64_t* argmax,
                       int64_t lin, T* dx) {
  std::fill(dx, dx + rows * lin, T(0));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t t = 0; t < lout; ++t)
      dx[r * lin + argmax[r * lout + t]] += dy[r * lout + t];
}

template <class T>
void adaptive_maxpool_forward(const T* x, int64_t rows, int64_t lin, int64_t lout,
                              T* y, int64_t* argmax) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* x_row = x + r * lin;
    for (int64_t t = 0; t < lout; ++t) {
      const int64_t start = (t * lin) / lout;
      const int64_t end = ((t + 1) * lin + lout - 1) / lout;
      int64_t best = start;
      for (int64_t s = start + 1; s < end; ++s)
        if (x_row[s] > x_row[best]) best = s;
      argmax[r * lout + t] = best;
      y[r * lout + t] = x_row[best];
    }
  }
}

template <class T>
void adaptive_maxpool_backward(const T* dy, int64_t rows, int64_t lout,
                               const int64_t* argmax, int64_t lin, T* dx) {
  std::fill(dx, dx + rows * lin, T(0));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t t = 0; t < lout; ++t)
      dx[r * lin + argmax[r * lout + t]] += dy[r * lout + t];
}

// Inverted dropout; the mask holds 0 or 1/(1-p).
inline void dropout_mask(Rng& rng, double p, int64_t n, float* mask) {
  const float scale = static_cast<float>(1.0 / (1.0 - p));
  for (int64_t i = 0; i < n; ++i) mask[i] = rng.uniform() < p ? 0.0f : scale;
}

template <class T>
void apply_mask(const T* x, const float* mask, int64_t n, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] * static_cast<T>(mask[i]);
}

template <class T>
void softmax_rows(const T* logits, int64_t n, int64_t k, T* probs) {
  for (int64_t i = 0; i < n; ++i) {
    const T* row = logits + i * k;
    T* p = probs + i * k;
    T m = row[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    T sum = 0;
    for (int64_t j = 0; j < k; ++j) {
      p[j] = std::exp(row[j] - m);
      sum += p[j];
    }
    for (int64_t j = 0; j < k; ++j) p[j] /= sum;
  }
}

// Mean categorical cross-entropy; fills probs as a side product.
template <class T>
T softmax_xent_forward(const T* logits, int64_t n, int64_t k, const int* labels,
                       T* probs) {
  softmax_rows(logits, n, k, probs);
  T loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T p = probs[i * k + labels[i]];
    loss -= std::log(std::max(p, std::numeric_limits<T>::min()));
  }
  return loss / static_cast<T>(n);
}

template <class T>
void softmax_xent_backward(const T* probs, int64_t n, int64_t k, const int* labels,
                           T* dlogits) {
  const T inv_n = T(1) / static_cast<T>(n);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < k; ++j) dlogits[i * k + j] = probs[i * k + j] * inv_n;
    dlogits[i * k + labels[i]] -= inv_n;
  }
}

}  // namespace slagflow::nn
