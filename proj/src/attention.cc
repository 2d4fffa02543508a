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

#include "capsed/attention.h"

#include <memory>
#include <stdexcept>
#include <vector>

#include "capsed/layers.h"
#include "capsed/ops.h"

namespace capsed {

template <typename T>
Var<T> TemporalAttention(Var<T> slices, Var<T> weights, Var<T> bias) {
  const Shape ss = slices.shape();
  if (ss.size() != 2 && ss.size() != 3) {
    throw DimensionError("temporal attention: slices " + ShapeToString(ss) +
                         " must be [B x T x D] or [T x D]");
  }
  const std::size_t d = ss.back();
  const std::size_t rows = slices.value().size() / d;
  Var<T> flat = ops::Reshape(slices, {rows, d});
  Var<T> z = Dense(flat, weights, bias, Activation::kSigmoid);
  Shape out = ss;
  out.back() = weights.shape()[0];
  return ops::Reshape(z, out);
}

template <typename T>
Var<T> Merge(Var<T> o, Var<T> z) {
  if (o.shape() != z.shape() || (o.shape().size() != 2 && o.shape().size() != 3)) {
    throw DimensionError("merge: capsule lengths o " + ShapeToString(o.shape()) +
                         " vs attention z " + ShapeToString(z.shape()));
  }
  const Shape s = o.shape();
  const bool batched = s.size() == 3;
  const std::size_t batch = batched ? s[0] : 1;
  const std::size_t time = s[s.size() - 2], classes = s.back();
  const auto& ov = o.value();
  const auto& zv = z.value();
  for (T v : zv.data()) {
    if (v < 0) throw std::invalid_argument("merge: attention must be non-negative");
  }
  Tensor<T> y(batched ? Shape{batch, classes} : Shape{classes});
  // Normalizer per (batch, class), kept for the backward pass.
  std::vector<double> norm(batch * classes);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < classes; ++l) {
      double num = 0, den = kMergeEpsilon;
      for (std::size_t t = 0; t < time; ++t) {
        const std::size_t i = (b * time + t) * classes + l;
        num += double(ov[i]) * zv[i];
        den += zv[i];
      }
      y[b * classes + l] = static_cast<T>(num / den);
      norm[b * classes + l] = den;
    }
  }
  const int io = o.id(), iz = z.id();
  auto self = std::make_shared<int>(-1);
  Var<T> out = o.graph().Record(
      std::move(y), {io, iz},
      [=](Graph<T>& g, const Tensor<T>& dy) {
        const auto& ov = g.value(io);
        const auto& zv = g.value(iz);
        const auto& yv = g.value(*self);
        const bool need_o = g.requires_grad(io), need_z = g.requires_grad(iz);
        T* d_o = need_o ? g.GradBuffer(io).data().data() : nullptr;
        T* d_z = need_z ? g.GradBuffer(iz).data().data() : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t l = 0; l < classes; ++l) {
            const std::size_t k = b * classes + l;
            const double scale = dy[k] / norm[k];
            for (std::size_t t = 0; t < time; ++t) {
              const std::size_t i = (b * time + t) * classes + l;
              if (need_o) d_o[i] += static_cast<T>(scale * zv[i]);
              if (need_z) d_z[i] += static_cast<T>(scale * (double(ov[i]) - yv[k]));
            }
          }
        }
      },
      "merge");
  *self = out.id();
  return out;
}

template <typename T>
Tensor<T> AttentionDistribution(const Tensor<T>& z) {
  if (z.rank() != 2) throw DimensionError("attention distribution: z must be [T x L]");
  const std::size_t time = z.dim(0), classes = z.dim(1);
  Tensor<T> q(z.shape());
  for (std::size_t l = 0; l < classes; ++l) {
    double total = 0;
    for (std::size_t t = 0; t < time; ++t) total += z[t * classes + l];
    for (std::size_t t = 0; t < time; ++t) {
      q[t * classes + l] = static_cast<T>(z[t * classes + l] / total);
    }
  }
  return q;
}

template Var<float> TemporalAttention(Var<float>, Var<float>, Var<float>);
template Var<double> TemporalAttention(Var<double>, Var<double>, Var<double>);
template Var<float> Merge(Var<float>, Var<float>);
template Var<double> Merge(Var<double>, Var<double>);
template Tensor<float> AttentionDistribution(const Tensor<float>&);
template Tensor<double> AttentionDistribution(const Tensor<double>&);

}  // namespace capsed
