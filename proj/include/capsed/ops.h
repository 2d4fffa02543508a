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

#ifndef CAPSED_OPS_H_
#define CAPSED_OPS_H_

#include <cstddef>
#include <vector>

#include "capsed/autodiff.h"
#include "capsed/tensor.h"

// Differentiable tensor operations. Every function records its result on the
// graph owning its inputs; all inputs must belong to the same graph.
namespace capsed::ops {

// Guard added under the square root of every vector norm.
inline constexpr double kNormEpsilon = 1e-12;

template <typename T> Var<T> Add(Var<T> a, Var<T> b);
template <typename T> Var<T> Sub(Var<T> a, Var<T> b);
template <typename T> Var<T> Mul(Var<T> a, Var<T> b);
template <typename T> Var<T> Scale(Var<T> a, T factor);

template <typename T> Var<T> Sigmoid(Var<T> x);
template <typename T> Var<T> Relu(Var<T> x);

// Normalizes along `axis` (negative values count from the end).
template <typename T> Var<T> Softmax(Var<T> x, int axis);

// sqrt(sum x^2 + kNormEpsilon) along `axis`; the axis is removed.
template <typename T> Var<T> L2Norm(Var<T> x, int axis);

template <typename T> Var<T> Sum(Var<T> x);
template <typename T> Var<T> Mean(Var<T> x);

template <typename T> Var<T> Reshape(Var<T> x, Shape shape);

// Output axis k is input axis perm[k].
template <typename T> Var<T> Permute(Var<T> x, std::vector<std::size_t> perm);

// s = W u + b. `u` is [in] or a batch [B x in]; W is [out x in]; b is [out].
template <typename T> Var<T> Affine(Var<T> u, Var<T> weights, Var<T> bias);

struct Stride {
  std::size_t rows = 1;
  std::size_t cols = 1;
};

// Same-padded cross-correlation. x is [C_in x H x W] or [B x C_in x H x W];
// kernels are [C_out x C_in x kh x kw] with odd kh, kw; bias is [C_out] or an
// invalid Var for none. Output spatial dims are ceil(H / s_h), ceil(W / s_w).
template <typename T>
Var<T> Conv2D(Var<T> x, Var<T> kernels, Var<T> bias, Stride stride = {});

// 2x2 max-pool with stride 2 over the last two axes. Odd dims are padded with
// -inf. Gradient goes to the first maximal element of each window.
template <typename T> Var<T> MaxPool2D(Var<T> x);

}  // namespace capsed::ops

#endif  // CAPSED_OPS_H_
