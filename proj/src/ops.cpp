// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/ops.hpp"

#include <cmath>

namespace afiu::ops {

using kernels::ConvParams;
using kernels::Interp;

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

thread_local BranchRecorder* active_recorder = nullptr;

// Packs a boolean pattern into 64-bit words for the active recorder.
template <typename Pred>
void record_pattern(int64_t n, Pred&& bit) {
  if (active_recorder == nullptr) return;
  uint64_t word = 0;
  for (int64_t i = 0; i < n; ++i) {
    word = (word << 1) | (bit(i) ? 1u : 0u);
    if (i % 64 == 63) active_recorder->record(word);
  }
  active_recorder->record(word);
}

}  // namespace

BranchRecorder::BranchRecorder() : previous_(active_recorder) { active_recorder = this; }

BranchRecorder::~BranchRecorder() { active_recorder = previous_; }

void BranchRecorder::record(uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    digest_ ^= (word >> (8 * b)) & 0xffu;
    digest_ *= 1099511628211ull;
  }
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias, const ConvParams& p) {
  Tensor<T> out = kernels::conv2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, p);
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return make_result<T>(std::move(out), std::move(inputs), [p, has_bias](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    Node<T>& w = *self.inputs[1];
    Tensor<T>* gx = in.requires_grad ? &in.grad_buffer() : nullptr;
    Tensor<T>* gw = w.requires_grad ? &w.grad_buffer() : nullptr;
    Tensor<T>* gb = (has_bias && self.inputs[2]->requires_grad) ? &self.inputs[2]->grad_buffer() : nullptr;
    kernels::conv2d_backward(in.value, w.value, self.grad, p, gx, gw, gb);
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const BatchNormOptions& opt) {
  require_feature_map(x.value(), "batch_norm");
  const int64_t channels = x.value().c();
  Tensor<T> x_hat;
  Tensor<T> out;
  std::vector<double> inv_std(static_cast<size_t>(channels));
  if (opt.training) {
    std::vector<double> mean, var;
    out = kernels::batch_norm_train(x.value(), gamma.value(), beta.value(), opt.eps, mean, var, x_hat);
    const double count = static_cast<double>(x.value().numel() / channels);
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    for (int64_t c = 0; c < channels; ++c) {
      inv_std[c] = 1.0 / std::sqrt(var[c] + opt.eps);
      running_mean[c] = static_cast<T>((1 - opt.momentum) * running_mean[c] + opt.momentum * mean[c]);
      running_var[c] = static_cast<T>((1 - opt.momentum) * running_var[c] + opt.momentum * var[c] * unbias);
    }
  } else {
    const bool need_grad = grad_enabled() && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    out = kernels::batch_norm_eval(x.value(), gamma.value(), beta.value(), running_mean, running_var, opt.eps,
                                   need_grad ? &x_hat : nullptr);
    for (int64_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + opt.eps);
  }
  const bool batch_stats = opt.training;
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [x_hat = std::move(x_hat), inv_std = std::move(inv_std), batch_stats](Node<T>& self) {
                          Node<T>& in = *self.inputs[0];
                          Node<T>& g = *self.inputs[1];
                          Node<T>& b = *self.inputs[2];
                          kernels::batch_norm_backward(self.grad, x_hat, g.value, inv_std, batch_stats,
                                                       in.requires_grad ? &in.grad_buffer() : nullptr,
                                                       g.requires_grad ? &g.grad_buffer() : nullptr,
                                                       b.requires_grad ? &b.grad_buffer() : nullptr);
                        });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  kernels::relu_forward(x.value().data(), out.data(), out.numel());
  record_pattern(out.numel(), [&](int64_t i) { return out[i] > T(0); });
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    kernels::relu_backward(self.value.data(), self.grad.data(), in.grad_buffer().data(), self.value.numel());
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  kernels::sigmoid_forward(x.value().data(), out.data(), out.numel());
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) {
      const T y = self.value[i];
      g[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> out = x.value();
  // Written so that NaN passes through instead of snapping to a bound.
  for (T& v : out.values()) v = v < lo ? lo : (v > hi ? hi : v);
  record_pattern(out.numel(), [&](int64_t i) { return x.value()[i] < lo || x.value()[i] > hi; });
  return make_result<T>(std::move(out), {x}, [lo, hi](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    Tensor<T>& g = in.grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (in.value[i] >= lo && in.value[i] <= hi) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  kernels::add_into(out.data(), b.value().data(), out.numel());
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate_grad(self.grad);
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& lhs = *self.inputs[0];
    Node<T>& rhs = *self.inputs[1];
    if (lhs.requires_grad) {
      Tensor<T>& g = lhs.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * rhs.value[i];
    }
    if (rhs.requires_grad) {
      Tensor<T>& g = rhs.grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * lhs.value[i];
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  std::vector<const Tensor<T>*> values;
  values.reserve(parts.size());
  for (const Var<T>& p : parts) values.push_back(&p.value());
  Tensor<T> out = kernels::concat_channels(values);
  return make_result<T>(std::move(out), parts, [](Node<T>& self) {
    const int64_t batch = self.value.n(), total = self.value.c(), plane = self.value.h() * self.value.w();
    int64_t offset = 0;
    for (auto& in : self.inputs) {
      const int64_t ch = in->value.c();
      if (in->requires_grad) {
        Tensor<T>& g = in->grad_buffer();
        for (int64_t n = 0; n < batch; ++n) {
          kernels::add_into(g.data() + n * ch * plane, self.grad.data() + (n * total + offset) * plane, ch * plane);
        }
      }
      offset += ch;
    }
  });
}

template <typename T>
Var<T> resize(const Var<T>& x, int64_t out_h, int64_t out_w, Interp mode) {
  Tensor<T> out = kernels::resize_forward(x.value(), out_h, out_w, mode);
  return make_result<T>(std::move(out), {x}, [mode](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    in.accumulate_grad(kernels::resize_backward(self.grad, in.value.h(), in.value.w(), mode));
  });
}

template <typename T>
Var<T> max_pool(const Var<T>& x, int kernel, int stride, int padding) {
  auto pooled = kernels::max_pool_forward(x.value(), kernel, stride, padding);
  if (active_recorder != nullptr) {
    for (auto idx : pooled.argmax) active_recorder->record(static_cast<uint64_t>(idx));
  }
  return make_result<T>(std::move(pooled.out), {x}, [argmax = std::move(pooled.argmax)](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    in.accumulate_grad(kernels::max_pool_backward(self.grad, argmax, in.value.shape()));
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double s = 0;
  for (T v : x.value().values()) s += v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s)), {x}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    const T up = self.grad[0];
    for (T& v : g.values()) v += up;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const auto count = static_cast<double>(x.value().numel());
  double s = 0;
  for (T v : x.value().values()) s += v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(s / count)), {x}, [count](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    const T up = static_cast<T>(self.grad[0] / count);
    for (T& v : g.values()) v += up;
  });
}

#define AFIU_INSTANTIATE_OPS(T)                                                                               \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>*, const ConvParams&);                     \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&,             \
                             const BatchNormOptions&);                                                        \
  template Var<T> relu(const Var<T>&);                                                                        \
  template Var<T> sigmoid(const Var<T>&);                                                                     \
  template Var<T> clamp(const Var<T>&, T, T);                                                                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                                \
  template Var<T> resize(const Var<T>&, int64_t, int64_t, Interp);                                            \
  template Var<T> max_pool(const Var<T>&, int, int, int);                                                     \
  template Var<T> sum(const Var<T>&);                                                                         \
  template Var<T> mean(const Var<T>&);

AFIU_INSTANTIATE_OPS(float)
AFIU_INSTANTIATE_OPS(double)

}  // namespace afiu::ops
