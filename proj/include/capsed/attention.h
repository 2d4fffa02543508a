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

#ifndef CAPSED_ATTENTION_H_
#define CAPSED_ATTENTION_H_

#include "capsed/autodiff.h"
#include "capsed/tensor.h"

namespace capsed {

inline constexpr double kMergeEpsilon = 1e-7;

// Per-clip model output: clip-level probabilities plus the per-slice curves
// kept for localization.
template <typename T>
struct ClipPrediction {
  Tensor<T> y;  // [L]
  Tensor<T> o;  // [T x L] capsule lengths
  Tensor<T> z;  // [T x L] attention
};

// Sigmoid dense layer applied to every time slice with shared weights.
// slices: [B x T x D] or [T x D]; weights [L x D]; bias [L].
template <typename T>
Var<T> TemporalAttention(Var<T> slices, Var<T> weights, Var<T> bias);

// y_l = sum_t o_l(t) z_l(t) / (sum_t z_l(t) + kMergeEpsilon), over the time
// axis of [B x T x L] (or [T x L]) inputs.
template <typename T>
Var<T> Merge(Var<T> o, Var<T> z);

// q_l(t) = z_l(t) / sum_t z_l(t) for a [T x L] attention matrix.
template <typename T>
Tensor<T> AttentionDistribution(const Tensor<T>& z);

}  // namespace capsed

#endif  // CAPSED_ATTENTION_H_
