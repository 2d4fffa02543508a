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

#ifndef CAPSED_CAPSULE_H_
#define CAPSED_CAPSULE_H_

#include <random>
#include <string>
#include <vector>

#include "capsed/autodiff.h"
#include "capsed/layers.h"
#include "capsed/ops.h"

namespace capsed {

// kQuadratic: v = (|s|^2 / (1 + |s|^2)) * s / |s|
// kLinear:    v = (|s| / (1 + |s|^2)) * s / |s|
// The two agree at |s| = 1. Only the quadratic form is monotone in |s|.
enum class SquashForm { kQuadratic, kLinear };

struct RoutingConfig {
  int iterations = 3;
  SquashForm squash_form = SquashForm::kQuadratic;

  void Validate() const;  // throws std::invalid_argument if iterations < 1
};

// Shape of a densely connected capsule layer. The transformation matrices
// W_ji are stored as one [N x M x U_out x U_in] parameter.
struct CapsuleLayerParams {
  std::size_t input_capsules = 0;   // M
  std::size_t output_capsules = 0;  // N
  std::size_t input_dim = 0;        // U_in
  std::size_t output_dim = 0;       // U_out

  Shape weight_shape() const { return {output_capsules, input_capsules, output_dim, input_dim}; }
  void Validate() const;
};

// Intermediate values of one routing invocation. Leading axis S indexes
// independent routing problems (time slices); it is absent for unbatched
// input, matching the shape of the predictions passed in.
template <typename T>
struct RoutingState {
  Tensor<T> logits;       // beta [S x M x N], after the final update
  Tensor<T> couplings;    // alpha [S x M x N] used by the final iteration
  Tensor<T> predictions;  // u_hat [S x M x N x U_out]
  Tensor<T> outputs;      // v [S x N x U_out]
  Tensor<T> agreements;   // a [S x M x N] from the final iteration
  std::vector<Tensor<T>> coupling_history;  // alpha of every iteration
};

// Squashes along the last axis using the guarded norm sqrt(sum s^2 + eps).
template <typename T>
Var<T> Squash(Var<T> s, SquashForm form);

// u_hat[s,i,j,:] = W[j,i] u[s,i,:]. u is [S x M x U_in] or [M x U_in].
template <typename T>
Var<T> CapsulePredictions(Var<T> u, Var<T> weights);

// s[s,j,:] = sum_i alpha[s,i,j] u_hat[s,i,j,:].
template <typename T>
Var<T> WeightedCapsuleSum(Var<T> couplings, Var<T> predictions);

// a[s,i,j] = v[s,j,:] . u_hat[s,i,j,:].
template <typename T>
Var<T> Agreement(Var<T> outputs, Var<T> predictions);

// Routing-by-agreement over predictions [S x M x N x U] (or [M x N x U]).
// Logits start at zero on every call. Gradients flow through all
// iterations. When `state` is given it receives the intermediate values.
template <typename T>
Var<T> DynamicRouting(Var<T> predictions, const RoutingConfig& config,
                      RoutingState<T>* state = nullptr);

// Euclidean length of each capsule along the last axis.
template <typename T>
Var<T> CapsuleLengths(Var<T> capsules);

// Predictions followed by routing. No bias term.
template <typename T>
Var<T> CapsuleDenseLayer(Var<T> u, Var<T> weights, const RoutingConfig& config,
                         RoutingState<T>* state = nullptr);

// Primary capsule layer: ReLU convolution, batch norm, dropout, then every
// run of `capsule_dim` consecutive channels at one (t, f) position becomes a
// capsule, which is squashed.
struct PrimaryCapsuleSpec {
  std::size_t filters = 64;
  std::size_t kernel_height = 3;
  std::size_t kernel_width = 3;
  std::size_t stride_time = 1;
  std::size_t stride_freq = 2;
  std::size_t capsule_dim = 4;
  bool batch_norm = true;
};

inline constexpr char kPrimaryCapsuleName[] = "primary";

template <typename T>
void InitPrimaryCapsules(const PrimaryCapsuleSpec& spec, std::size_t in_channels,
                         ModelState<T>& state, std::mt19937_64& rng);

// x is [B x C x T x F] (or [C x T x F]); the result is [B x T x K x U] (or
// [T x K x U]) with K = (F / stride_freq) * filters / U.
template <typename T>
Var<T> PrimaryCapsules(Var<T> x, const PrimaryCapsuleSpec& spec, double dropout_rate,
                       SquashForm form, ModelState<T>& state, const ForwardMode& mode);

}  // namespace capsed

#endif  // CAPSED_CAPSULE_H_
