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

#include "capsed/model.h"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

#include "capsed/ops.h"

namespace capsed {

ModelConfig ModelConfig::Full(std::size_t num_classes) {
  ModelConfig c;
  c.num_classes = num_classes;
  return c;
}

ModelConfig ModelConfig::Desk(std::size_t num_classes) {
  ModelConfig c;
  c.num_classes = num_classes;
  c.input_frames = 120;
  c.gated.filters_linear = 32;
  c.gated.filters_gate = 32;
  c.gated.blocks = 2;
  c.primary.filters = 32;
  return c;
}

namespace {

std::size_t CeilDiv(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Frequency bins entering the primary capsule convolution.
std::size_t PooledBins(const ModelConfig& c) {
  std::size_t f = c.mel_bins;
  for (std::size_t b = 0; b < c.gated.blocks; ++b) f = CeilDiv(f, 2);
  return f;
}

}  // namespace

std::size_t ModelConfig::time_slices() const {
  std::size_t t = input_frames;
  for (std::size_t b = 0; b < gated.blocks; ++b) t = CeilDiv(t, 2);
  return CeilDiv(t, primary.stride_time);
}

std::size_t ModelConfig::capsules_per_slice() const {
  return CeilDiv(PooledBins(*this), primary.stride_freq) * primary.filters / primary.capsule_dim;
}

void ModelConfig::Validate() const {
  gated.Validate();
  routing.Validate();
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (num_classes == 0) fail("num_classes must be positive");
  if (class_capsule_dim == 0) fail("class_capsule_dim must be positive");
  if (primary.capsule_dim == 0 || primary.filters % primary.capsule_dim != 0) {
    fail("primary filters must be a multiple of the capsule size");
  }
  if (primary.stride_time == 0 || primary.stride_freq == 0) fail("primary strides must be positive");
  if (primary.kernel_height % 2 == 0 || primary.kernel_width % 2 == 0) {
    fail("primary kernel sizes must be odd");
  }
  const std::size_t min_size = std::size_t{1} << gated.blocks;
  if (input_frames < min_size || mel_bins < min_size) {
    fail("input " + std::to_string(input_frames) + "x" + std::to_string(mel_bins) +
         " is too small for " + std::to_string(gated.blocks) + " pooling blocks");
  }
  if (!(gated_dropout >= 0 && gated_dropout < 1) || !(primary_dropout >= 0 && primary_dropout < 1)) {
    fail("dropout rates must lie in [0, 1)");
  }
}

template <typename T>
ModelState<T> InitModel(const ModelConfig& config, std::uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  ModelState<T> state;
  InitGatedBlockStack(config.gated, 1, state, rng);
  InitPrimaryCapsules(config.primary, config.gated.filters_linear, state, rng);
  const CapsuleLayerParams caps{config.capsules_per_slice(), config.num_classes,
                                config.primary.capsule_dim, config.class_capsule_dim};
  caps.Validate();
  state.params[kClassCapsuleWeights] =
      GlorotUniform<T>(caps.weight_shape(), caps.input_capsules * caps.input_dim,
                       caps.output_capsules * caps.output_dim, rng);
  const std::size_t slice_dim = caps.input_capsules * caps.input_dim;
  state.params[kAttentionWeights] =
      GlorotUniform<T>({config.num_classes, slice_dim}, slice_dim, config.num_classes, rng);
  state.params[kAttentionBias] = Tensor<T>(Shape{config.num_classes});
  return state;
}

template <typename T>
ModelOutputs<T> ModelForward(Var<T> x, const ModelConfig& config, ModelState<T>& state,
                             const ForwardMode& mode) {
  const Shape xs = x.shape();
  const bool with_channel = xs.size() == 4 && xs[1] == 1;
  if (!(xs.size() == 3 || with_channel) || xs[xs.size() - 2] != config.input_frames ||
      xs.back() != config.mel_bins) {
    throw DimensionError("model: input " + ShapeToString(xs) + " does not match configured " +
                         std::to_string(config.input_frames) + "x" +
                         std::to_string(config.mel_bins) + " features");
  }
  const std::size_t batch = xs[0];
  if (!with_channel) x = ops::Reshape(x, {batch, 1, xs[1], xs[2]});
  Graph<T>& g = x.graph();

  Var<T> h = GatedBlockStack(x, config.gated, config.gated_dropout, state, mode);
  Var<T> primary = PrimaryCapsules(h, config.primary, config.primary_dropout,
                                   config.routing.squash_form, state, mode);
  const Shape ps = primary.shape();  // [B, T, K, U]
  const std::size_t time = ps[1], caps = ps[2], dim = ps[3];

  Var<T> u = ops::Reshape(primary, {batch * time, caps, dim});
  Var<T> v = CapsuleDenseLayer(u, g.Param(kClassCapsuleWeights), config.routing);
  Var<T> o = ops::Reshape(CapsuleLengths(v), {batch, time, config.num_classes});

  Var<T> slices = ops::Reshape(primary, {batch, time, caps * dim});
  Var<T> z = TemporalAttention(slices, g.Param(kAttentionWeights), g.Param(kAttentionBias));
  return {Merge(o, z), o, z, primary};
}

template <typename T>
std::vector<ClipPrediction<T>> Predict(const Tensor<T>& features, const ModelConfig& config,
                                       ModelState<T>& state) {
  Graph<T> g(state.params);
  const ModelOutputs<T> out =
      ModelForward(g.Constant(features), config, state, ForwardMode::Inference());
  const Tensor<T>& y = out.y.value();
  const Tensor<T>& o = out.o.value();
  const Tensor<T>& z = out.z.value();
  const std::size_t batch = y.dim(0), classes = y.dim(1), time = o.dim(1);
  std::vector<ClipPrediction<T>> clips;
  clips.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    ClipPrediction<T> clip{Tensor<T>(Shape{classes}), Tensor<T>(Shape{time, classes}),
                           Tensor<T>(Shape{time, classes})};
    std::copy_n(y.data().begin() + b * classes, classes, clip.y.data().begin());
    std::copy_n(o.data().begin() + b * time * classes, time * classes, clip.o.data().begin());
    std::copy_n(z.data().begin() + b * time * classes, time * classes, clip.z.data().begin());
    clips.push_back(std::move(clip));
  }
  return clips;
}

#define CAPSED_INSTANTIATE_MODEL(T)                                                       \
  template ModelState<T> InitModel(const ModelConfig&, std::uint64_t);                    \
  template ModelOutputs<T> ModelForward(Var<T>, const ModelConfig&, ModelState<T>&,       \
                                        const ForwardMode&);                              \
  template std::vector<ClipPrediction<T>> Predict(const Tensor<T>&, const ModelConfig&, \
                                                  ModelState<T>&);

CAPSED_INSTANTIATE_MODEL(float)
CAPSED_INSTANTIATE_MODEL(double)

#undef CAPSED_INSTANTIATE_MODEL

}  // namespace capsed
