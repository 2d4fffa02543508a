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

#ifndef CAPSED_LAYERS_H_
#define CAPSED_LAYERS_H_

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "capsed/autodiff.h"
#include "capsed/ops.h"
#include "capsed/tensor.h"

namespace capsed {

// Gated convolution geometry. Each gated layer is a pair of convolutions
// (linear and sigmoid gate) with the same filter count.
struct GatedConvSpec {
  std::size_t filters_linear = 64;
  std::size_t filters_gate = 64;
  std::size_t kernel_height = 3;
  std::size_t kernel_width = 3;
  std::size_t stride = 1;
  std::size_t layers_per_block = 2;
  std::size_t blocks = 3;

  // Throws std::invalid_argument on a bad combination.
  void Validate() const;
};

// Non-trainable batch-norm buffers. The per-channel scale and shift are
// trainable and live in the parameter store as "<name>.scale"/"<name>.shift".
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  // Weight of the old running value in each update.
  double momentum = 0.9;
  double epsilon = 1e-3;

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

// Everything a model needs besides its architecture: trainable parameters
// plus batch-norm buffers, both keyed by layer name.
template <typename T>
struct ModelState {
  ParamStore<T> params;
  std::map<std::string, BatchNormState<T>> batch_norm;
};

// Whether a forward pass trains (batch statistics, active dropout, running
// statistic updates) or infers (running statistics, no dropout).
struct ForwardMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0

  static ForwardMode Inference() { return {}; }
  static ForwardMode Training(std::mt19937_64& rng) { return {true, &rng}; }
};

enum class Activation { kLinear, kSigmoid, kRelu };

// Uniform in [0, 1) from the top 53 bits, independent of the standard
// library's distribution implementations.
inline double UniformUnit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
Tensor<T> GlorotUniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                        std::mt19937_64& rng);

// Per-channel batch normalization over every axis except the channel axis,
// which is axis 1 of a rank-4 batch or axis 0 of a rank-3 sample. In training
// mode the running statistics in `state` are updated.
template <typename T>
Var<T> BatchNorm(Var<T> x, Var<T> scale, Var<T> shift, BatchNormState<T>& state,
                 bool training);

// Inverted dropout: kept units are scaled by 1 / (1 - rate) during training;
// identity at inference or rate 0.
template <typename T>
Var<T> Dropout(Var<T> x, double rate, const ForwardMode& mode);

// out = conv_linear(x) * sigmoid(conv_gate(x)).
template <typename T>
Var<T> GatedConv(Var<T> x, Var<T> linear_kernels, Var<T> linear_bias, Var<T> gate_kernels,
                 Var<T> gate_bias, ops::Stride stride = {});

template <typename T>
Var<T> Dense(Var<T> x, Var<T> weights, Var<T> bias, Activation activation);

// Parameter names for gated layer `layer` of block `block`.
std::string GatedLayerName(std::size_t block, std::size_t layer);

// Adds parameters and batch-norm buffers for the block stack to `state`.
template <typename T>
void InitGatedBlockStack(const GatedConvSpec& spec, std::size_t in_channels,
                         ModelState<T>& state, std::mt19937_64& rng);

// `blocks` x (`layers_per_block` x [gated conv -> batch norm -> dropout]) with
// a 2x2 max-pool closing each block. x is [B x C x T x F].
template <typename T>
Var<T> GatedBlockStack(Var<T> x, const GatedConvSpec& spec, double dropout_rate,
                       ModelState<T>& state, const ForwardMode& mode);

}  // namespace capsed

#endif  // CAPSED_LAYERS_H_
