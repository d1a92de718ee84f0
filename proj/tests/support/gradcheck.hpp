#pragma once

// Finite-difference gradient checking for the templated kernels at double
// precision. The miniature stack here (one k3 conv with 2 filters + affine
// head + cross-entropy) is deliberately independent of the float layer glue.

#include <cmath>
#include <cstdint>
#include <vector>

#include "slagflow/kernels.hpp"
#include "slagflow/rng.hpp"

namespace testsupport {

inline double rel_error(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

struct ConvAffineStack {
  static constexpr int64_t kN = 2, kCin = 1, kLin = 8, kCout = 2, kK = 3, kPad = 0;
  static constexpr int64_t kLout = kLin + 2 * kPad - kK + 1;  // 6
  static constexpr int64_t kFlat = kCout * kLout;             // 12
  static constexpr int64_t kClasses = 2;

  std::vector<double> x, conv_w, conv_b, fc_w, fc_b;
  std::vector<int> labels;

  explicit ConvAffineStack(uint64_t seed) {
    slagflow::Rng rng(seed);
    const auto fill = [&rng](std::vector<double>& v, size_t n) {
      v.resize(n);
      for (auto& e : v) e = rng.uniform(-1.0, 1.0);
    };
    fill(x, kN * kCin * kLin);
    fill(conv_w, kCout * kCin * kK);
    fill(conv_b, kCout);
    fill(fc_w, kClasses * kFlat);
    fill(fc_b, kClasses);
    labels = {0, 1};
  }

  double loss() const {
    std::vector<double> conv_out(kN * kCout * kLout);
    slagflow::nn::conv1d_forward(x.data(), kN, kCin, kLin, conv_w.data(),
                                 conv_b.data(), kCout, kK, kPad, conv_out.data(),
                                 slagflow::nn::Exec::Serial);
    std::vector<double> act(conv_out.size());
    slagflow::nn::relu_forward(conv_out.data(),
                               static_cast<int64_t>(conv_out.size()), act.data());
    std::vector<double> logits(kN * kClasses);
    slagflow::nn::linear_forward(act.data(), kN, kFlat, fc_w.data(), fc_b.data(),
                                 kClasses, false, logits.data(),
                                 slagflow::nn::Exec::Serial);
    std::vector<double> probs(logits.size());
    return slagflow::nn::softmax_xent_forward(logits.data(), kN, kClasses,
                                              labels.data(), probs.data());
  }

  struct Grads {
    std::vector<double> x, conv_w, conv_b, fc_w, fc_b;
  };

  Grads analytic_grads() const {
    std::vector<double> conv_out(kN * kCout * kLout);
    slagflow::nn::conv1d_forward(x.data(), kN, kCin, kLin, conv_w.data(),
                                 conv_b.data(), kCout, kK, kPad, conv_out.data(),
                                 slagflow::nn::Exec::Serial);
    std::vector<double> act(conv_out.size());
    slagflow::nn::relu_forward(conv_out.data(),
                               static_cast<int64_t>(conv_out.size()), act.data());
    std::vector<double> logits(kN * kClasses);
    slagflow::nn::linear_forward(act.data(), kN, kFlat, fc_w.data(), fc_b.data(),
                                 kClasses, false, logits.data(),
                                 slagflow::nn::Exec::Serial);
    std::vector<double> probs(logits.size());
    slagflow::nn::softmax_xent_forward(logits.data(), kN, kClasses, labels.data(),
                                       probs.data());

    Grads g;
    std::vector<double> dlogits(logits.size());
    slagflow::nn::softmax_xent_backward(probs.data(), kN, kClasses, labels.data(),
                                        dlogits.data());
    g.fc_w.assign(fc_w.size(), 0.0);
    g.fc_b.assign(fc_b.size(), 0.0);
    slagflow::nn::linear_backward_filter(dlogits.data(), act.data(), kN, kFlat,
                                         kClasses, g.fc_w.data(), g.fc_b.data(),
                                         slagflow::nn::Exec::Serial);
    std::vector<double> dact(act.size());
    slagflow::nn::linear_backward_data(dlogits.data(), kN, kClasses, fc_w.data(),
                                       kFlat, false, dact.data(),
                                       slagflow::nn::Exec::Serial);
    std::vector<double> dconv(conv_out.size());
    slagflow::nn::relu_backward(dact.data(), act.data(),
                                static_cast<int64_t>(act.size()), dconv.data());
    g.conv_w.assign(conv_w.size(), 0.0);
    g.conv_b.assign(conv_b.size(), 0.0);
    slagflow::nn::conv1d_backward_filter(dconv.data(), x.data(), kN, kCin, kLin,
                                         kCout, kK, kPad, g.conv_w.data(),
                                         g.conv_b.data(), slagflow::nn::Exec::Serial);
    g.x.assign(x.size(), 0.0);
    slagflow::nn::conv1d_backward_data(dconv.data(), kN, kCout, kLout, conv_w.data(),
                                       kCin, kK, kPad, kLin, g.x.data(),
                                       slagflow::nn::Exec::Serial);
    return g;
  }

  // central finite differences against the analytic gradients, worst case
  double max_rel_error(double eps = 1e-6) {
    const Grads g = analytic_grads();
    double worst = 0.0;
    const auto check = [&](std::vector<double>& values, const std::vector<double>& grad) {
      for (size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double up = loss();
        values[i] = saved - eps;
        const double down = loss();
        values[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        worst = std::max(worst, rel_error(fd, grad[i]));
      }
    };
    check(conv_w, g.conv_w);
    check(conv_b, g.conv_b);
    check(fc_w, g.fc_w);
    check(fc_b, g.fc_b);
    check(x, g.x);
    return worst;
  }
};

}  // namespace testsupport
