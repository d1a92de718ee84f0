#pragma once

// Multi-layer bidirectional LSTM built on the linear kernels. Sequences are
// step-major: a sequence is a vector of [N, features] tensors. Gate layout in
// the stacked weight matrices is (input, forget, cell, output).

#include <cstdint>
#include <vector>

#include "slagflow/kernels.hpp"
#include "slagflow/rng.hpp"
#include "slagflow/tensor.hpp"

namespace slagflow::nn {

template <class T>
struct LstmWeights {
  int64_t input_size = 0;
  int64_t hidden = 0;
  int64_t layers = 0;
  // indexed layer * 2 + direction (0 forward, 1 reverse)
  std::vector<TensorT<T>> w_ih;  // [4H, in_l]
  std::vector<TensorT<T>> w_hh;  // [4H, H]
  std::vector<TensorT<T>> b_ih;  // [4H]
  std::vector<TensorT<T>> b_hh;  // [4H]

  static LstmWeights shaped(int64_t input_size, int64_t hidden, int64_t layers) {
    LstmWeights w;
    w.input_size = input_size;
    w.hidden = hidden;
    w.layers = layers;
    for (int64_t l = 0; l < layers; ++l) {
      const int64_t in_l = l == 0 ? input_size : 2 * hidden;
      for (int dir = 0; dir < 2; ++dir) {
        w.w_ih.push_back(TensorT<T>({4 * hidden, in_l}));
        w.w_hh.push_back(TensorT<T>({4 * hidden, hidden}));
        w.b_ih.push_back(TensorT<T>({4 * hidden}));
        w.b_hh.push_back(TensorT<T>({4 * hidden}));
      }
    }
    return w;
  }
};

template <class T>
struct LstmCache {
  int64_t n = 0;
  int64_t steps = 0;
  // per layer: the sequence actually fed to it (post inter-layer dropout)
  std::vector<std::vector<TensorT<T>>> layer_inputs;
  // per layer boundary (layers-1 of them): dropout mask over steps*N*2H
  std::vector<std::vector<float>> dropout_masks;
  struct DirCache {
    std::vector<TensorT<T>> gates;  // post-activation [N, 4H] per step
    std::vector<TensorT<T>> c;      // [N, H]
    std::vector<TensorT<T>> hc;     // tanh(c)
    std::vector<TensorT<T>> h;      // [N, H]
  };
  std::vector<DirCache> dirs;               // layer * 2 + dir
  std::vector<TensorT<T>> output_seq;       // [N, 2H] per step (last layer)
};

namespace detail {

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace detail

// Runs the full stack; fills `cache` for backward. Inter-layer dropout is
// applied only when train && dropout_p > 0, consuming from `rng`.
template <class T>
void lstm_forward(const LstmWeights<T>& w, const std::vector<TensorT<T>>& x_seq,
                  bool train, double dropout_p, Rng* rng, LstmCache<T>& cache,
                  Exec exec = default_exec()) {
  const int64_t steps = static_cast<int64_t>(x_seq.size());
  const int64_t n = x_seq[0].dim(0);
  const int64_t h = w.hidden;

  cache.n = n;
  cache.steps = steps;
  cache.layer_inputs.assign(static_cast<size_t>(w.layers), {});
  cache.dropout_masks.assign(static_cast<size_t>(w.layers > 0 ? w.layers - 1 : 0), {});
  cache.dirs.assign(static_cast<size_t>(w.layers * 2), {});

  std::vector<TensorT<T>> input = x_seq;
  for (int64_t l = 0; l < w.layers; ++l) {
    cache.layer_inputs[l] = input;
    std::vector<TensorT<T>> out_seq(steps, TensorT<T>({n, 2 * h}));

    for (int dir = 0; dir < 2; ++dir) {
      auto& dc = cache.dirs[l * 2 + dir];
      dc.gates.assign(steps, TensorT<T>({n, 4 * h}));
      dc.c.assign(steps, TensorT<T>({n, h}));
      dc.hc.assign(steps, TensorT<T>({n, h}));
      dc.h.assign(steps, TensorT<T>({n, h}));

      const TensorT<T>& wih = w.w_ih[l * 2 + dir];
      const TensorT<T>& whh = w.w_hh[l * 2 + dir];
      const int64_t in_l = wih.dim(1);

      TensorT<T> h_prev({n, h});
      TensorT<T> c_prev({n, h});
      for (int64_t s = 0; s < steps; ++s) {
        const int64_t t = dir == 0 ? s : steps - 1 - s;
        auto& gates = dc.gates[t];
        linear_forward(input[t].ptr(), n, in_l, wih.ptr(), w.b_ih[l * 2 + dir].ptr(),
                       4 * h, false, gates.ptr(), exec);
        linear_forward(h_prev.ptr(), n, h, whh.ptr(), w.b_hh[l * 2 + dir].ptr(),
                       4 * h, true, gates.ptr(), exec);
        for (int64_t i = 0; i < n; ++i) {
          T* g = gates.ptr() + i * 4 * h;
          const T* cp = c_prev.ptr() + i * h;
          T* c_t = dc.c[t].ptr() + i * h;
          T* hc_t = dc.hc[t].ptr() + i * h;
          T* h_t = dc.h[t].ptr() + i * h;
          for (int64_t j = 0; j < h; ++j) {
            const T ig = detail::sigmoid(g[j]);
            const T fg = detail::sigmoid(g[h + j]);
            const T gg = std::tanh(g[2 * h + j]);
            const T og = detail::sigmoid(g[3 * h + j]);
            g[j] = ig;
            g[h + j] = fg;
            g[2 * h + j] = gg;
            g[3 * h + j] = og;
            const T c_new = fg * cp[j] + ig * gg;
            c_t[j] = c_new;
            const T thc = std::tanh(c_new);
            hc_t[j] = thc;
            h_t[j] = og * thc;
          }
        }
        h_prev = dc.h[t];
        c_prev = dc.c[t];
      }
      for (int64_t t = 0; t < steps; ++t)
        for (int64_t i = 0; i < n; ++i)
          std::copy(dc.h[t].ptr() + i * h, dc.h[t].ptr() + (i + 1) * h,
                    out_seq[t].ptr() + i * 2 * h + dir * h);
    }

    if (l + 1 < w.layers) {
      if (train && dropout_p > 0.0) {
        auto& mask = cache.dropout_masks[l];
        mask.resize(static_cast<size_t>(steps * n * 2 * h));
        dropout_mask(*rng, dropout_p, steps * n * 2 * h, mask.data());
        for (int64_t t = 0; t < steps; ++t)
          apply_mask(out_seq[t].ptr(), mask.data() + t * n * 2 * h, n * 2 * h,
                     out_seq[t].ptr());
      }
      input = out_seq;
    } else {
      cache.output_seq = std::move(out_seq);
    }
  }
}

// dy_seq matches output_seq shapes. Gradients accumulate into `grads` (same
// shapes as the weights); dx_seq is overwritten.
template <class T>
void lstm_backward(const LstmWeights<T>& w, const LstmCache<T>& cache,
                   const std::vector<TensorT<T>>& dy_seq, LstmWeights<T>& grads,
                   std::vector<TensorT<T>>& dx_seq, Exec exec = default_exec()) {
  const int64_t steps = cache.steps;
  const int64_t n = cache.n;
  const int64_t h = w.hidden;

  std::vector<TensorT<T>> d_out = dy_seq;
  for (int64_t l = w.layers - 1; l >= 0; --l) {
    const int64_t in_l = w.w_ih[l * 2].dim(1);
    std::vector<TensorT<T>> d_in(steps, TensorT<T>({n, in_l}));

    for (int dir = 0; dir < 2; ++dir) {
      const auto& dc = cache.dirs[l * 2 + dir];
      const TensorT<T>& wih = w.w_ih[l * 2 + dir];
      const TensorT<T>& whh = w.w_hh[l * 2 + dir];

      TensorT<T> dh_next({n, h});
      TensorT<T> dc_next({n, h});
      TensorT<T> dgates({n, 4 * h});
      // reverse of the processing order
      for (int64_t s = steps - 1; s >= 0; --s) {
        const int64_t t = dir == 0 ? s : steps - 1 - s;
        const int64_t t_prev = dir == 0 ? t - 1 : t + 1;
        const bool has_prev = dir == 0 ? t > 0 : t < steps - 1;

        for (int64_t i = 0; i < n; ++i) {
          const T* g = dc.gates[t].ptr() + i * 4 * h;
          const T* hc_t = dc.hc[t].ptr() + i * h;
          const T* d_out_row = d_out[t].ptr() + i * 2 * h + dir * h;
          T* dh_row = dh_next.ptr() + i * h;
          T* dcn_row = dc_next.ptr() + i * h;
          T* dg = dgates.ptr() + i * 4 * h;
          const T* cp = has_prev ? dc.c[t_prev].ptr() + i * h : nullptr;
          for (int64_t j = 0; j < h; ++j) {
            const T ig = g[j], fg = g[h + j], gg = g[2 * h + j], og = g[3 * h + j];
            const T dh = d_out_row[j] + dh_row[j];
            const T dog = dh * hc_t[j];
            T dcv = dcn_row[j] + dh * og * (T(1) - hc_t[j] * hc_t[j]);
            const T dig = dcv * gg;
            const T dgg = dcv * ig;
            const T dfg = cp ? dcv * cp[j] : T(0);
            dcn_row[j] = dcv * fg;
            dg[j] = dig * ig * (T(1) - ig);
            dg[h + j] = dfg * fg * (T(1) - fg);
            dg[2 * h + j] = dgg * (T(1) - gg * gg);
            dg[3 * h + j] = dog * og * (T(1) - og);
          }
        }

        linear_backward_filter(dgates.ptr(), cache.layer_inputs[l][t].ptr(), n, in_l,
                               4 * h, grads.w_ih[l * 2 + dir].ptr(),
                               grads.b_ih[l * 2 + dir].ptr(), exec);
        linear_backward_data(dgates.ptr(), n, 4 * h, wih.ptr(), in_l, true,
                             d_in[t].ptr(), exec);
        if (has_prev) {
          linear_backward_filter(dgates.ptr(), dc.h[t_prev].ptr(), n, h, 4 * h,
                                 grads.w_hh[l * 2 + dir].ptr(),
                                 grads.b_hh[l * 2 + dir].ptr(), exec);
          linear_backward_data(dgates.ptr(), n, 4 * h, whh.ptr(), h, false,
                               dh_next.ptr(), exec);
        } else {
          // h_prev is the zero initial state: w_hh gets no contribution from it
          TensorT<T> zeros({n, h});
          linear_backward_filter(dgates.ptr(), zeros.ptr(), n, h, 4 * h,
                                 grads.w_hh[l * 2 + dir].ptr(),
                                 grads.b_hh[l * 2 + dir].ptr(), exec);
          dh_next.fill(T(0));
        }
      }
    }

    if (l > 0 && !cache.dropout_masks[l - 1].empty()) {
      const auto& mask = cache.dropout_masks[l - 1];
      for (int64_t t = 0; t < steps; ++t)
        apply_mask(d_in[t].ptr(), mask.data() + t * n * in_l, n * in_l, d_in[t].ptr());
    }
    if (l == 0)
      dx_seq = std::move(d_in);
    else
      d_out = std::move(d_in);
  }
}

}  // namespace slagflow::nn
