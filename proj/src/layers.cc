// Copyright 2026 The capsed Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "capsed/layers.h"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace capsed {

void GatedConvSpec::Validate() const {
  if (filters_linear != filters_gate) {
    throw std::invalid_argument("gated conv: linear and gate filter counts must match");
  }
  if (filters_linear == 0 || layers_per_block == 0 || blocks == 0 || stride == 0) {
    throw std::invalid_argument("gated conv: filters, layers, blocks and stride must be positive");
  }
  if (kernel_height % 2 == 0 || kernel_width % 2 == 0) {
    throw std::invalid_argument("gated conv: kernel dims must be odd");
  }
}

template <typename T>
Tensor<T> GlorotUniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                        std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(shape);
  for (auto& x : t.data()) x = static_cast<T>((2.0 * UniformUnit(rng) - 1.0) * limit);
  return t;
}

template <typename T>
Var<T> BatchNorm(Var<T> x, Var<T> scale, Var<T> shift, BatchNormState<T>& state,
                 bool training) {
  const Shape xs = x.shape();
  if (xs.size() != 3 && xs.size() != 4) {
    throw DimensionError("batch_norm: input " + ShapeToString(xs) + " must be rank 3 or 4");
  }
  const std::size_t batch = xs.size() == 4 ? xs[0] : 1;
  const std::size_t channels = xs[xs.size() - 3];
  const std::size_t spatial = xs[xs.size() - 2] * xs[xs.size() - 1];
  if (scale.shape() != Shape{channels} || shift.shape() != Shape{channels} ||
      state.running_mean.shape() != Shape{channels}) {
    throw DimensionError("batch_norm: input " + ShapeToString(xs) + " vs scale " +
                         ShapeToString(scale.shape()));
  }
  const auto& xv = x.value();
  const auto& gv = scale.value();
  const auto& bv = shift.value();
  const double count = static_cast<double>(batch * spatial);

  std::vector<T> mean(channels), inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (training) {
      double sum = 0, sq = 0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = xv.data().data() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sum += p[i];
      }
      const double m = sum / count;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = xv.data().data() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + state.epsilon));
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      state.running_mean[c] = static_cast<T>(state.momentum * state.running_mean[c] +
                                             (1 - state.momentum) * m);
      state.running_var[c] = static_cast<T>(state.momentum * state.running_var[c] +
                                            (1 - state.momentum) * unbiased);
    } else {
      mean[c] = state.running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(double(state.running_var[c]) + state.epsilon));
    }
  }

  Tensor<T> y(xs);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        y[off + i] = gv[c] * (xv[off + i] - mean[c]) * inv_std[c] + bv[c];
      }
    }
  }

  const int ix = x.id(), ig = scale.id(), ib = shift.id();
  return x.graph().Record(
      std::move(y), {ix, ig, ib},
      [=](Graph<T>& g, const Tensor<T>& dy) {
        const auto& xv = g.value(ix);
        const auto& gv = g.value(ig);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              const double xhat = (xv[off + i] - mean[c]) * inv_std[c];
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * xhat;
            }
          }
          if (g.requires_grad(ig)) g.GradBuffer(ig)[c] += static_cast<T>(sum_dy_xhat);
          if (g.requires_grad(ib)) g.GradBuffer(ib)[c] += static_cast<T>(sum_dy);
          if (!g.requires_grad(ix)) continue;
          auto& dx = g.GradBuffer(ix);
          const double k = gv[c] * inv_std[c];
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              if (training) {
                const double xhat = (xv[off + i] - mean[c]) * inv_std[c];
                dx[off + i] += static_cast<T>(
                    k * (dy[off + i] - sum_dy / count - xhat * sum_dy_xhat / count));
              } else {
                dx[off + i] += static_cast<T>(k * dy[off + i]);
              }
            }
          }
        }
      },
      "batch_norm");
}

template <typename T>
Var<T> Dropout(Var<T> x, double rate, const ForwardMode& mode) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!mode.training || rate == 0.0) return x;
  if (mode.rng == nullptr) throw std::invalid_argument("dropout: training mode needs an rng");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = UniformUnit(*mode.rng) < rate ? T(0) : keep_scale;
  return ops::Mul(x, x.graph().Constant(std::move(mask)));
}

template <typename T>
Var<T> GatedConv(Var<T> x, Var<T> linear_kernels, Var<T> linear_bias, Var<T> gate_kernels,
                 Var<T> gate_bias, ops::Stride stride) {
  if (linear_kernels.shape() != gate_kernels.shape()) {
    throw DimensionError("gated_conv: linear kernels " + ShapeToString(linear_kernels.shape()) +
                         " vs gate kernels " + ShapeToString(gate_kernels.shape()));
  }
  Var<T> linear = ops::Conv2D(x, linear_kernels, linear_bias, stride);
  Var<T> gate = ops::Sigmoid(ops::Conv2D(x, gate_kernels, gate_bias, stride));
  return ops::Mul(linear, gate);
}

template <typename T>
Var<T> Dense(Var<T> x, Var<T> weights, Var<T> bias, Activation activation) {
  Var<T> s = ops::Affine(x, weights, bias);
  switch (activation) {
    case Activation::kSigmoid:
      return ops::Sigmoid(s);
    case Activation::kRelu:
      return ops::Relu(s);
    case Activation::kLinear:
      break;
  }
  return s;
}

std::string GatedLayerName(std::size_t block, std::size_t layer) {
  return "gated.b" + std::to_string(block) + ".l" + std::to_string(layer);
}

template <typename T>
void InitGatedBlockStack(const GatedConvSpec& spec, std::size_t in_channels,
                         ModelState<T>& state, std::mt19937_64& rng) {
  spec.Validate();
  const std::size_t kh = spec.kernel_height, kw = spec.kernel_width;
  std::size_t c_in = in_channels;
  for (std::size_t b = 0; b < spec.blocks; ++b) {
    for (std::size_t l = 0; l < spec.layers_per_block; ++l) {
      const std::string name = GatedLayerName(b, l);
      const Shape kshape{spec.filters_linear, c_in, kh, kw};
      const std::size_t fan_in = c_in * kh * kw, fan_out = spec.filters_linear * kh * kw;
      state.params[name + ".linear.kernel"] = GlorotUniform<T>(kshape, fan_in, fan_out, rng);
      state.params[name + ".linear.bias"] = Tensor<T>(Shape{spec.filters_linear});
      state.params[name + ".gate.kernel"] = GlorotUniform<T>(kshape, fan_in, fan_out, rng);
      state.params[name + ".gate.bias"] = Tensor<T>(Shape{spec.filters_gate});
      state.params[name + ".bn.scale"] = Tensor<T>(Shape{spec.filters_linear}, T(1));
      state.params[name + ".bn.shift"] = Tensor<T>(Shape{spec.filters_linear});
      state.batch_norm.insert_or_assign(name + ".bn", BatchNormState<T>(spec.filters_linear));
      c_in = spec.filters_linear;
    }
  }
}

template <typename T>
Var<T> GatedBlockStack(Var<T> x, const GatedConvSpec& spec, double dropout_rate,
                       ModelState<T>& state, const ForwardMode& mode) {
  spec.Validate();
  const Shape xs = x.shape();
  if (xs.size() != 4) {
    throw DimensionError("gated_block_stack: input " + ShapeToString(xs) +
                         " must be [batch x channels x time x freq]");
  }
  const std::size_t min_extent = std::size_t{1} << spec.blocks;
  if (xs[2] < min_extent || xs[3] < min_extent) {
    throw DimensionError("gated_block_stack: input " + ShapeToString(xs) +
                         " is too small to pool " + std::to_string(spec.blocks) + " times");
  }
  Graph<T>& g = x.graph();
  const ops::Stride stride{spec.stride, spec.stride};
  for (std::size_t b = 0; b < spec.blocks; ++b) {
    for (std::size_t l = 0; l < spec.layers_per_block; ++l) {
      const std::string name = GatedLayerName(b, l);
      x = GatedConv(x, g.Param(name + ".linear.kernel"), g.Param(name + ".linear.bias"),
                    g.Param(name + ".gate.kernel"), g.Param(name + ".gate.bias"), stride);
      x = BatchNorm(x, g.Param(name + ".bn.scale"), g.Param(name + ".bn.shift"),
                    state.batch_norm.at(name + ".bn"), mode.training);
      x = Dropout(x, dropout_rate, mode);
    }
    x = ops::MaxPool2D(x);
  }
  return x;
}

#define CAPSED_INSTANTIATE_LAYERS(T)                                                      \
  template Tensor<T> GlorotUniform(const Shape&, std::size_t, std::size_t,               \
                                   std::mt19937_64&);                                    \
  template Var<T> BatchNorm(Var<T>, Var<T>, Var<T>, BatchNormState<T>&, bool);           \
  template Var<T> Dropout(Var<T>, double, const ForwardMode&);                           \
  template Var<T> GatedConv(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, ops::Stride);        \
  template Var<T> Dense(Var<T>, Var<T>, Var<T>, Activation);                             \
  template void InitGatedBlockStack(const GatedConvSpec&, std::size_t, ModelState<T>&,   \
                                    std::mt19937_64&);                                   \
  template Var<T> GatedBlockStack(Var<T>, const GatedConvSpec&, double, ModelState<T>&,  \
                                  const ForwardMode&);

CAPSED_INSTANTIATE_LAYERS(float)
CAPSED_INSTANTIATE_LAYERS(double)

#undef CAPSED_INSTANTIATE_LAYERS

}  // namespace capsed
