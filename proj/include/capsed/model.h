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

#ifndef CAPSED_MODEL_H_
#define CAPSED_MODEL_H_

#include <cstdint>
#include <vector>

#include "capsed/attention.h"
#include "capsed/autodiff.h"
#include "capsed/capsule.h"
#include "capsed/layers.h"

namespace capsed {

// Full architecture: gated conv blocks, primary capsules, a class capsule
// layer with dynamic routing, and the temporal attention branch.
struct ModelConfig {
  std::size_t input_frames = 240;
  std::size_t mel_bins = 64;
  std::size_t num_classes = 17;
  GatedConvSpec gated;
  PrimaryCapsuleSpec primary;
  std::size_t class_capsule_dim = 8;
  RoutingConfig routing;
  double gated_dropout = 0.2;
  double primary_dropout = 0.5;

  static ModelConfig Full(std::size_t num_classes);
  // Two blocks of 32 filters over 120 input frames; keeps 30 slices.
  static ModelConfig Desk(std::size_t num_classes);

  // Time slices T after pooling.
  std::size_t time_slices() const;
  // Primary capsules K per time slice.
  std::size_t capsules_per_slice() const;
  void Validate() const;
};

inline constexpr char kClassCapsuleWeights[] = "capsule.weights";
inline constexpr char kAttentionWeights[] = "attention.weights";
inline constexpr char kAttentionBias[] = "attention.bias";

template <typename T>
ModelState<T> InitModel(const ModelConfig& config, std::uint64_t seed);

template <typename T>
struct ModelOutputs {
  Var<T> y;        // [B x L]
  Var<T> o;        // [B x T x L]
  Var<T> z;        // [B x T x L]
  Var<T> primary;  // [B x T x K x U]
};

// x: [B x frames x bins] or [B x 1 x frames x bins].
template <typename T>
ModelOutputs<T> ModelForward(Var<T> x, const ModelConfig& config, ModelState<T>& state,
                             const ForwardMode& mode);

// Inference-mode forward pass over a batch, split per clip.
template <typename T>
std::vector<ClipPrediction<T>> Predict(const Tensor<T>& features, const ModelConfig& config,
                                       ModelState<T>& state);

}  // namespace capsed

#endif  // CAPSED_MODEL_H_
