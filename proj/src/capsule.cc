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

#include "capsed/capsule.h"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace capsed {

void RoutingConfig::Validate() const {
  if (iterations < 1) {
    throw std::invalid_argument("routing needs at least one iteration, got " +
                                std::to_string(iterations));
  }
}

void CapsuleLayerParams::Validate() const {
  if (input_capsules == 0 || output_capsules == 0 || input_dim == 0 || output_dim == 0) {
    throw std::invalid_argument("capsule layer dimensions must be positive");
  }
}

namespace {

// Squash scale f(q) and its derivative, q = |s|^2 + eps, so that v = f(q) s.
struct SquashScale {
  double value;
  double derivative;
};

SquashScale ComputeSquashScale(double q, SquashForm form) {
  const double n = std::sqrt(q);
  const double one_plus = 1.0 + q;
  if (form == SquashForm::kQuadratic) {
    return {n / one_plus, (1.0 - q) / (2.0 * n * one_plus * one_plus)};
  }
  return {1.0 / one_plus, -1.0 / (one_plus * one_plus)};
}

}  // namespace

template <typename T>
Var<T> Squash(Var<T> s, SquashForm form) {
  const Shape shape = s.shape();
  if (shape.empty()) throw DimensionError("squash: input must have a capsule axis");
  const std::size_t dim = shape.back();
  const std::size_t count = s.value().size() / dim;
  const auto& sv = s.value();
  Tensor<T> v(shape);
  for (std::size_t c = 0; c < count; ++c) {
    double q = ops::kNormEpsilon;
    for (std::size_t a = 0; a < dim; ++a) q += double(sv[c * dim + a]) * sv[c * dim + a];
    const double f = ComputeSquashScale(q, form).value;
    for (std::size_t a = 0; a < dim; ++a) v[c * dim + a] = static_cast<T>(f * sv[c * dim + a]);
  }
  const int is = s.id();
  return s.graph().Record(
      std::move(v), {is},
      [is, dim, count, form](Graph<T>& g, const Tensor<T>& dv) {
        if (!g.requires_grad(is)) return;
        const auto& sv = g.value(is);
        auto& ds = g.GradBuffer(is);
        for (std::size_t c = 0; c < count; ++c) {
          double q = ops::kNormEpsilon, s_dot_dv = 0;
          for (std::size_t a = 0; a < dim; ++a) {
            q += double(sv[c * dim + a]) * sv[c * dim + a];
            s_dot_dv += double(sv[c * dim + a]) * dv[c * dim + a];
          }
          const SquashScale f = ComputeSquashScale(q, form);
          for (std::size_t a = 0; a < dim; ++a) {
            ds[c * dim + a] += static_cast<T>(f.value * dv[c * dim + a] +
                                              2.0 * f.derivative * s_dot_dv * sv[c * dim + a]);
          }
        }
      },
      "squash");
}

template <typename T>
Var<T> CapsulePredictions(Var<T> u, Var<T> weights) {
  const Shape us = u.shape();
  const Shape ws = weights.shape();
  const bool batched = us.size() == 3;
  if ((us.size() != 2 && !batched) || ws.size() != 4 || ws[1] != us[us.size() - 2] ||
      ws[3] != us.back()) {
    throw DimensionError("capsule predictions: input capsules u " + ShapeToString(us) +
                         " vs transforms W " + ShapeToString(ws));
  }
  const std::size_t slices = batched ? us[0] : 1;
  const std::size_t m = ws[1], n = ws[0], uo = ws[2], ui = ws[3];
  Shape out_shape = batched ? Shape{slices, m, n, uo} : Shape{m, n, uo};
  Tensor<T> out(out_shape);
  const auto& uv = u.value();
  const auto& wv = weights.value();
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* ui_vec = uv.data().data() + (s * m + i) * ui;
      for (std::size_t j = 0; j < n; ++j) {
        const T* w = wv.data().data() + ((j * m + i) * uo) * ui;
        T* dst = out.data().data() + ((s * m + i) * n + j) * uo;
        for (std::size_t a = 0; a < uo; ++a) {
          T acc = 0;
          for (std::size_t b = 0; b < ui; ++b) acc += w[a * ui + b] * ui_vec[b];
          dst[a] = acc;
        }
      }
    }
  }
  const int iu = u.id(), iw = weights.id();
  return u.graph().Record(
      std::move(out), {iu, iw},
      [=](Graph<T>& g, const Tensor<T>& dy) {
        const bool need_u = g.requires_grad(iu), need_w = g.requires_grad(iw);
        const auto& uv = g.value(iu);
        const auto& wv = g.value(iw);
        T* du = need_u ? g.GradBuffer(iu).data().data() : nullptr;
        T* dw = need_w ? g.GradBuffer(iw).data().data() : nullptr;
        for (std::size_t s = 0; s < slices; ++s) {
          for (std::size_t i = 0; i < m; ++i) {
            const T* ui_vec = uv.data().data() + (s * m + i) * ui;
            for (std::size_t j = 0; j < n; ++j) {
              const T* d = dy.data().data() + ((s * m + i) * n + j) * uo;
              const std::size_t w_off = ((j * m + i) * uo) * ui;
              for (std::size_t a = 0; a < uo; ++a) {
                for (std::size_t b = 0; b < ui; ++b) {
                  if (need_w) dw[w_off + a * ui + b] += d[a] * ui_vec[b];
                  if (need_u) du[(s * m + i) * ui + b] += wv[w_off + a * ui + b] * d[a];
                }
              }
            }
          }
        }
      },
      "capsule_predictions");
}

namespace {

struct RoutingDims {
  std::size_t slices, m, n, u;
};

RoutingDims PredictionDims(const Shape& ps, const char* op) {
  if (ps.size() == 4) return {ps[0], ps[1], ps[2], ps[3]};
  if (ps.size() == 3) return {1, ps[0], ps[1], ps[2]};
  throw DimensionError(std::string(op) + ": predictions " + ShapeToString(ps) +
                       " must be [S x M x N x U] or [M x N x U]");
}

}  // namespace

template <typename T>
Var<T> WeightedCapsuleSum(Var<T> couplings, Var<T> predictions) {
  const RoutingDims d = PredictionDims(predictions.shape(), "weighted capsule sum");
  const Shape cs = couplings.shape();
  const bool batched = predictions.shape().size() == 4;
  const Shape expected = batched ? Shape{d.slices, d.m, d.n} : Shape{d.m, d.n};
  if (cs != expected) {
    throw DimensionError("weighted capsule sum: couplings " + ShapeToString(cs) +
                         " vs predictions " + ShapeToString(predictions.shape()));
  }
  Tensor<T> out(batched ? Shape{d.slices, d.n, d.u} : Shape{d.n, d.u});
  const auto& av = couplings.value();
  const auto& pv = predictions.value();
  for (std::size_t s = 0; s < d.slices; ++s)
    for (std::size_t i = 0; i < d.m; ++i)
      for (std::size_t j = 0; j < d.n; ++j) {
        const T alpha = av[(s * d.m + i) * d.n + j];
        const T* p = pv.data().data() + ((s * d.m + i) * d.n + j) * d.u;
        T* dst = out.data().data() + (s * d.n + j) * d.u;
        for (std::size_t a = 0; a < d.u; ++a) dst[a] += alpha * p[a];
      }
  const int ia = couplings.id(), ip = predictions.id();
  return couplings.graph().Record(
      std::move(out), {ia, ip},
      [=](Graph<T>& g, const Tensor<T>& dy) {
        const bool need_a = g.requires_grad(ia), need_p = g.requires_grad(ip);
        const auto& av = g.value(ia);
        const auto& pv = g.value(ip);
        T* da = need_a ? g.GradBuffer(ia).data().data() : nullptr;
        T* dp = need_p ? g.GradBuffer(ip).data().data() : nullptr;
        for (std::size_t s = 0; s < d.slices; ++s)
          for (std::size_t i = 0; i < d.m; ++i)
            for (std::size_t j = 0; j < d.n; ++j) {
              const std::size_t c = (s * d.m + i) * d.n + j;
              const T* ds = dy.data().data() + (s * d.n + j) * d.u;
              const T* p = pv.data().data() + c * d.u;
              T dot = 0;
              for (std::size_t a = 0; a < d.u; ++a) {
                dot += ds[a] * p[a];
                if (need_p) dp[c * d.u + a] += av[c] * ds[a];
              }
              if (need_a) da[c] += dot;
            }
      },
      "weighted_capsule_sum");
}

template <typename T>
Var<T> Agreement(Var<T> outputs, Var<T> predictions) {
  const RoutingDims d = PredictionDims(predictions.shape(), "agreement");
  const bool batched = predictions.shape().size() == 4;
  const Shape expected = batched ? Shape{d.slices, d.n, d.u} : Shape{d.n, d.u};
  if (outputs.shape() != expected) {
    throw DimensionError("agreement: outputs " + ShapeToString(outputs.shape()) +
                         " vs predictions " + ShapeToString(predictions.shape()));
  }
  Tensor<T> out(batched ? Shape{d.slices, d.m, d.n} : Shape{d.m, d.n});
  const auto& vv = outputs.value();
  const auto& pv = predictions.value();
  for (std::size_t s = 0; s < d.slices; ++s)
    for (std::size_t i = 0; i < d.m; ++i)
      for (std::size_t j = 0; j < d.n; ++j) {
        const std::size_t c = (s * d.m + i) * d.n + j;
        const T* v = vv.data().data() + (s * d.n + j) * d.u;
        const T* p = pv.data().data() + c * d.u;
        T dot = 0;
        for (std::size_t a = 0; a < d.u; ++a) dot += v[a] * p[a];
        out[c] = dot;
      }
  const int iv = outputs.id(), ip = predictions.id();
  return outputs.graph().Record(
      std::move(out), {iv, ip},
      [=](Graph<T>& g, const Tensor<T>& dy) {
        const bool need_v = g.requires_grad(iv), need_p = g.requires_grad(ip);
        const auto& vv = g.value(iv);
        const auto& pv = g.value(ip);
        T* dv = need_v ? g.GradBuffer(iv).data().data() : nullptr;
        T* dp = need_p ? g.GradBuffer(ip).data().data() : nullptr;
        for (std::size_t s = 0; s < d.slices; ++s)
          for (std::size_t i = 0; i < d.m; ++i)
            for (std::size_t j = 0; j < d.n; ++j) {
              const std::size_t c = (s * d.m + i) * d.n + j;
              const std::size_t v_off = (s * d.n + j) * d.u;
              for (std::size_t a = 0; a < d.u; ++a) {
                if (need_v) dv[v_off + a] += dy[c] * pv[c * d.u + a];
                if (need_p) dp[c * d.u + a] += dy[c] * vv[v_off + a];
              }
            }
      },
      "agreement");
}

template <typename T>
Var<T> DynamicRouting(Var<T> predictions, const RoutingConfig& config, RoutingState<T>* state) {
  config.Validate();
  const RoutingDims d = PredictionDims(predictions.shape(), "dynamic routing");
  const bool batched = predictions.shape().size() == 4;
  Graph<T>& g = predictions.graph();
  const int coupling_axis = -1;

  Var<T> logits = g.Constant(Tensor<T>(batched ? Shape{d.slices, d.m, d.n} : Shape{d.m, d.n}));
  Var<T> outputs;
  if (state != nullptr) {
    state->coupling_history.clear();
    state->predictions = predictions.value();
  }
  for (int it = 0; it < config.iterations; ++it) {
    Var<T> couplings = ops::Softmax(logits, coupling_axis);
    outputs = Squash(WeightedCapsuleSum(couplings, predictions), config.squash_form);
    const bool last = it + 1 == config.iterations;
    // The final logit update cannot affect the output; it is only computed
    // when the caller asks for the routing state.
    if (!last || state != nullptr) {
      Var<T> agreements = Agreement(outputs, predictions);
      logits = ops::Add(logits, agreements);
      if (state != nullptr && last) state->agreements = agreements.value();
    }
    if (state != nullptr) {
      state->coupling_history.push_back(couplings.value());
      if (last) state->couplings = couplings.value();
    }
  }
  if (state != nullptr) {
    state->logits = logits.value();
    state->outputs = outputs.value();
  }
  return outputs;
}

template <typename T>
Var<T> CapsuleLengths(Var<T> capsules) {
  return ops::L2Norm(capsules, -1);
}

template <typename T>
Var<T> CapsuleDenseLayer(Var<T> u, Var<T> weights, const RoutingConfig& config,
                         RoutingState<T>* state) {
  return DynamicRouting(CapsulePredictions(u, weights), config, state);
}

template <typename T>
void InitPrimaryCapsules(const PrimaryCapsuleSpec& spec, std::size_t in_channels,
                         ModelState<T>& state, std::mt19937_64& rng) {
  if (spec.filters % spec.capsule_dim != 0) {
    throw std::invalid_argument("primary capsules: " + std::to_string(spec.filters) +
                                " filters are not divisible by capsule size " +
                                std::to_string(spec.capsule_dim));
  }
  const std::string name = kPrimaryCapsuleName;
  const std::size_t k = spec.kernel_height * spec.kernel_width;
  state.params[name + ".kernel"] = GlorotUniform<T>(
      {spec.filters, in_channels, spec.kernel_height, spec.kernel_width}, in_channels * k,
      spec.filters * k, rng);
  state.params[name + ".bias"] = Tensor<T>(Shape{spec.filters});
  if (spec.batch_norm) {
    state.params[name + ".bn.scale"] = Tensor<T>(Shape{spec.filters}, T(1));
    state.params[name + ".bn.shift"] = Tensor<T>(Shape{spec.filters});
    state.batch_norm.insert_or_assign(name + ".bn", BatchNormState<T>(spec.filters));
  }
}

template <typename T>
Var<T> PrimaryCapsules(Var<T> x, const PrimaryCapsuleSpec& spec, double dropout_rate,
                       SquashForm form, ModelState<T>& state, const ForwardMode& mode) {
  if (spec.capsule_dim == 0 || spec.filters % spec.capsule_dim != 0) {
    throw DimensionError("primary capsules: channel count " + std::to_string(spec.filters) +
                         " not divisible by capsule size " + std::to_string(spec.capsule_dim));
  }
  const bool batched = x.shape().size() == 4;
  if (!batched) x = ops::Reshape(x, [&] {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    return s;
  }());
  Graph<T>& g = x.graph();
  const std::string name = kPrimaryCapsuleName;
  Var<T> h = ops::Relu(ops::Conv2D(x, g.Param(name + ".kernel"), g.Param(name + ".bias"),
                                   {spec.stride_time, spec.stride_freq}));
  if (spec.batch_norm) {
    h = BatchNorm(h, g.Param(name + ".bn.scale"), g.Param(name + ".bn.shift"),
                  state.batch_norm.at(name + ".bn"), mode.training);
  }
  h = Dropout(h, dropout_rate, mode);
  // [B, C, T, F] -> [B, T, F, C] -> [B, T, F * C / U, U]
  const Shape hs = h.shape();
  const std::size_t batch = hs[0], channels = hs[1], time = hs[2], freq = hs[3];
  h = ops::Permute(h, {0, 2, 3, 1});
  const std::size_t per_slice = freq * channels / spec.capsule_dim;
  h = ops::Reshape(h, batched ? Shape{batch, time, per_slice, spec.capsule_dim}
                              : Shape{time, per_slice, spec.capsule_dim});
  return Squash(h, form);
}

#define CAPSED_INSTANTIATE_CAPSULE(T)                                                       \
  template Var<T> Squash(Var<T>, SquashForm);                                               \
  template Var<T> CapsulePredictions(Var<T>, Var<T>);                                       \
  template Var<T> WeightedCapsuleSum(Var<T>, Var<T>);                                       \
  template Var<T> Agreement(Var<T>, Var<T>);                                                \
  template Var<T> DynamicRouting(Var<T>, const RoutingConfig&, RoutingState<T>*);           \
  template Var<T> CapsuleLengths(Var<T>);                                                   \
  template Var<T> CapsuleDenseLayer(Var<T>, Var<T>, const RoutingConfig&, RoutingState<T>*); \
  template void InitPrimaryCapsules(const PrimaryCapsuleSpec&, std::size_t, ModelState<T>&, \
                                    std::mt19937_64&);                                      \
  template Var<T> PrimaryCapsules(Var<T>, const PrimaryCapsuleSpec&, double, SquashForm,    \
                                  ModelState<T>&, const ForwardMode&);

CAPSED_INSTANTIATE_CAPSULE(float)
CAPSED_INSTANTIATE_CAPSULE(double)

#undef CAPSED_INSTANTIATE_CAPSULE

}  // namespace capsed
