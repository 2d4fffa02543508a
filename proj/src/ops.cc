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

#include "capsed/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace capsed::ops {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void CheckSameGraph(Var<T> a, Var<T> b, const char* op) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
  }
}

template <typename T>
void CheckSameShape(Var<T> a, Var<T> b, const char* op) {
  CheckSameGraph(a, b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": lhs " + ShapeToString(a.shape()) +
                         " vs rhs " + ShapeToString(b.shape()));
  }
}

std::size_t NormalizeAxis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// View of a shape as [outer x n x inner] around one axis.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit SplitAt(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T, typename F>
Var<T> Unary(Var<T> x, F forward, const char* name,
             std::function<void(const Tensor<T>& x, const Tensor<T>& y,
                                const Tensor<T>& dy, Tensor<T>& dx)> backward) {
  Graph<T>& g = x.graph();
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = forward(xv[i]);
  const int xid = x.id();
  auto self = std::make_shared<int>(-1);
  Var<T> out = g.Record(
      std::move(y), {xid},
      [xid, self, backward](Graph<T>& gr, const Tensor<T>& dy) {
        if (!gr.requires_grad(xid)) return;
        backward(gr.value(xid), gr.value(*self), dy, gr.GradBuffer(xid));
      },
      name);
  *self = out.id();
  return out;
}

}  // namespace

template <typename T>
Var<T> Add(Var<T> a, Var<T> b) {
  CheckSameShape(a, b, "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().Record(
      std::move(out), {ia, ib},
      [ia, ib](Graph<T>& g, const Tensor<T>& dy) {
        for (int id : {ia, ib}) {
          if (!g.requires_grad(id)) continue;
          auto& d = g.GradBuffer(id);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        }
      },
      "add");
}

template <typename T>
Var<T> Sub(Var<T> a, Var<T> b) {
  CheckSameShape(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().Record(
      std::move(out), {ia, ib},
      [ia, ib](Graph<T>& g, const Tensor<T>& dy) {
        if (g.requires_grad(ia)) {
          auto& d = g.GradBuffer(ia);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
        }
        if (g.requires_grad(ib)) {
          auto& d = g.GradBuffer(ib);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
        }
      },
      "sub");
}

template <typename T>
Var<T> Mul(Var<T> a, Var<T> b) {
  CheckSameShape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ia = a.id(), ib = b.id();
  return a.graph().Record(
      std::move(out), {ia, ib},
      [ia, ib](Graph<T>& g, const Tensor<T>& dy) {
        if (g.requires_grad(ia)) {
          const auto& bv = g.value(ib);
          auto& d = g.GradBuffer(ia);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * bv[i];
        }
        if (g.requires_grad(ib)) {
          const auto& av = g.value(ia);
          auto& d = g.GradBuffer(ib);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * av[i];
        }
      },
      "mul");
}

template <typename T>
Var<T> Scale(Var<T> a, T factor) {
  return Unary<T>(
      a, [factor](T x) { return x * factor; }, "scale",
      [factor](const Tensor<T>&, const Tensor<T>&, const Tensor<T>& dy, Tensor<T>& dx) {
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
      });
}

template <typename T>
Var<T> Sigmoid(Var<T> x) {
  return Unary<T>(
      x,
      [](T v) {
        // Split by sign so exp never overflows.
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      "sigmoid",
      [](const Tensor<T>&, const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
      });
}

template <typename T>
Var<T> Relu(Var<T> x) {
  return Unary<T>(
      x, [](T v) { return v > 0 ? v : T(0); }, "relu",
      [](const Tensor<T>& xv, const Tensor<T>&, const Tensor<T>& dy, Tensor<T>& dx) {
        for (std::size_t i = 0; i < dx.size(); ++i) {
          if (xv[i] > 0) dx[i] += dy[i];
        }
      });
}

template <typename T>
Var<T> Softmax(Var<T> x, int axis) {
  const std::size_t ax = NormalizeAxis(axis, x.value().rank(), "softmax");
  const AxisSplit s = SplitAt(x.shape(), ax);
  const auto& xv = x.value();
  Tensor<T> y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T max_v = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) max_v = std::max(max_v, xv[base + k * s.inner]);
      T total = 0;
      for (std::size_t k = 0; k < s.n; ++k) {
        const T e = std::exp(xv[base + k * s.inner] - max_v);
        y[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.n; ++k) y[base + k * s.inner] /= total;
    }
  }
  const int xid = x.id();
  auto self = std::make_shared<int>(-1);
  Var<T> out = x.graph().Record(
      std::move(y), {xid},
      [xid, self, s](Graph<T>& g, const Tensor<T>& dy) {
        if (!g.requires_grad(xid)) return;
        const auto& yv = g.value(*self);
        auto& dx = g.GradBuffer(xid);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.n * s.inner + in;
            T dot = 0;
            for (std::size_t k = 0; k < s.n; ++k) {
              const std::size_t i = base + k * s.inner;
              dot += dy[i] * yv[i];
            }
            for (std::size_t k = 0; k < s.n; ++k) {
              const std::size_t i = base + k * s.inner;
              dx[i] += yv[i] * (dy[i] - dot);
            }
          }
        }
      },
      "softmax");
  *self = out.id();
  return out;
}

template <typename T>
Var<T> L2Norm(Var<T> x, int axis) {
  const std::size_t ax = NormalizeAxis(axis, x.value().rank(), "l2norm");
  const AxisSplit s = SplitAt(x.shape(), ax);
  Shape out_shape;
  for (std::size_t i = 0; i < x.shape().size(); ++i) {
    if (i != ax) out_shape.push_back(x.shape()[i]);
  }
  const auto& xv = x.value();
  Tensor<T> y(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T sq = 0;
      for (std::size_t k = 0; k < s.n; ++k) {
        const T v = xv[base + k * s.inner];
        sq += v * v;
      }
      y[o * s.inner + in] = std::sqrt(sq + T(kNormEpsilon));
    }
  }
  const int xid = x.id();
  auto self = std::make_shared<int>(-1);
  Var<T> out = x.graph().Record(
      std::move(y), {xid},
      [xid, self, s](Graph<T>& g, const Tensor<T>& dy) {
        if (!g.requires_grad(xid)) return;
        const auto& xv = g.value(xid);
        const auto& yv = g.value(*self);
        auto& dx = g.GradBuffer(xid);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t j = o * s.inner + in;
            const T factor = dy[j] / yv[j];
            const std::size_t base = o * s.n * s.inner + in;
            for (std::size_t k = 0; k < s.n; ++k) {
              dx[base + k * s.inner] += factor * xv[base + k * s.inner];
            }
          }
        }
      },
      "l2norm");
  *self = out.id();
  return out;
}

template <typename T>
Var<T> Sum(Var<T> x) {
  double total = 0;
  for (T v : x.value().data()) total += v;
  const int xid = x.id();
  return x.graph().Record(
      Tensor<T>::Scalar(static_cast<T>(total)), {xid},
      [xid](Graph<T>& g, const Tensor<T>& dy) {
        if (!g.requires_grad(xid)) return;
        auto& dx = g.GradBuffer(xid);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0];
      },
      "sum");
}

template <typename T>
Var<T> Mean(Var<T> x) {
  return Scale(Sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> Reshape(Var<T> x, Shape shape) {
  Tensor<T> y = x.value().Reshaped(std::move(shape));
  const int xid = x.id();
  return x.graph().Record(
      std::move(y), {xid},
      [xid](Graph<T>& g, const Tensor<T>& dy) {
        if (!g.requires_grad(xid)) return;
        auto& dx = g.GradBuffer(xid);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
      },
      "reshape");
}

namespace {

std::vector<std::size_t> Strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// For each flat output position of the permuted tensor, the flat input index.
std::vector<std::size_t> PermuteIndex(const Shape& in_shape,
                                      const std::vector<std::size_t>& perm) {
  const std::size_t rank = in_shape.size();
  const auto in_strides = Strides(in_shape);
  Shape out_shape(rank);
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    out_shape[k] = in_shape[perm[k]];
    src_stride[k] = in_strides[perm[k]];
  }
  std::vector<std::size_t> index(NumElements(in_shape));
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < index.size(); ++flat) {
    index[flat] = src;
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      src += src_stride[k];
      if (counter[k] < out_shape[k]) break;
      src -= src_stride[k] * out_shape[k];
      counter[k] = 0;
    }
  }
  return index;
}

}  // namespace

template <typename T>
Var<T> Permute(Var<T> x, std::vector<std::size_t> perm) {
  const Shape in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  std::vector<bool> seen(rank, false);
  if (perm.size() != rank) throw DimensionError("permute: permutation rank mismatch");
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t k = 0; k < rank; ++k) out_shape[k] = in_shape[perm[k]];
  auto index = std::make_shared<std::vector<std::size_t>>(PermuteIndex(in_shape, perm));
  const auto& xv = x.value();
  Tensor<T> y(out_shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[(*index)[i]];
  const int xid = x.id();
  return x.graph().Record(
      std::move(y), {xid},
      [xid, index](Graph<T>& g, const Tensor<T>& dy) {
        if (!g.requires_grad(xid)) return;
        auto& dx = g.GradBuffer(xid);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[(*index)[i]] += dy[i];
      },
      "permute");
}

template <typename T>
Var<T> Affine(Var<T> u, Var<T> weights, Var<T> bias) {
  CheckSameGraph(u, weights, "affine");
  CheckSameGraph(u, bias, "affine");
  const Shape us = u.shape();
  const Shape ws = weights.shape();
  const Shape bs = bias.shape();
  const bool batched = us.size() == 2;
  if ((us.size() != 1 && !batched) || ws.size() != 2 || bs.size() != 1 ||
      ws[1] != us.back() || bs[0] != ws[0]) {
    throw DimensionError("affine: input u " + ShapeToString(us) + ", weights W " +
                         ShapeToString(ws) + ", bias b " + ShapeToString(bs) +
                         " do not conform");
  }
  const std::size_t batch = batched ? us[0] : 1;
  const std::size_t n_in = ws[1], n_out = ws[0];
  Tensor<T> y(batched ? Shape{batch, n_out} : Shape{n_out});
  {
    ConstMatrixMap<T> U(u.value().data().data(), batch, n_in);
    ConstMatrixMap<T> W(weights.value().data().data(), n_out, n_in);
    MatrixMap<T> Y(y.data().data(), batch, n_out);
    Y.noalias() = U * W.transpose();
    const auto& bv = bias.value();
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < n_out; ++c) Y(r, c) += bv[c];
    }
  }
  const int iu = u.id(), iw = weights.id(), ib = bias.id();
  return u.graph().Record(
      std::move(y), {iu, iw, ib},
      [=](Graph<T>& g, const Tensor<T>& dy) {
        ConstMatrixMap<T> DY(dy.data().data(), batch, n_out);
        if (g.requires_grad(iu)) {
          ConstMatrixMap<T> W(g.value(iw).data().data(), n_out, n_in);
          MatrixMap<T> DU(g.GradBuffer(iu).data().data(), batch, n_in);
          DU.noalias() += DY * W;
        }
        if (g.requires_grad(iw)) {
          ConstMatrixMap<T> U(g.value(iu).data().data(), batch, n_in);
          MatrixMap<T> DW(g.GradBuffer(iw).data().data(), n_out, n_in);
          DW.noalias() += DY.transpose() * U;
        }
        if (g.requires_grad(ib)) {
          auto& db = g.GradBuffer(ib);
          for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t c = 0; c < n_out; ++c) db[c] += DY(r, c);
          }
        }
      },
      "affine");
}

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, kh, kw, sh, sw, ho, wo, pad_top, pad_left;
  std::size_t col_rows() const { return c_in * kh * kw; }
  std::size_t col_cols() const { return ho * wo; }
};

// TensorFlow-style SAME padding: the extra row/column of an odd total goes to
// the bottom/right.
std::size_t SamePadBefore(std::size_t in, std::size_t out, std::size_t k, std::size_t s) {
  const long total = static_cast<long>((out - 1) * s + k) - static_cast<long>(in);
  return total > 0 ? static_cast<std::size_t>(total / 2) : 0;
}

template <typename T>
void Im2Col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t n = g.col_cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * n;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.sh + i) - static_cast<long>(g.pad_top);
          T* dst = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.sw + j) - static_cast<long>(g.pad_left);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.w)) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void Col2ImAdd(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t n = g.col_cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * n;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.sh + i) - static_cast<long>(g.pad_top);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const T* src = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.sw + j) - static_cast<long>(g.pad_left);
            if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> Conv2D(Var<T> x, Var<T> kernels, Var<T> bias, Stride stride) {
  CheckSameGraph(x, kernels, "conv2d");
  const bool has_bias = bias.valid();
  if (has_bias) CheckSameGraph(x, bias, "conv2d");
  const Shape xs = x.shape();
  const Shape ks = kernels.shape();
  const bool batched = xs.size() == 4;
  if ((xs.size() != 3 && !batched) || ks.size() != 4) {
    throw DimensionError("conv2d: input x " + ShapeToString(xs) + ", kernels " +
                         ShapeToString(ks) + " have unsupported ranks");
  }
  ConvGeometry geo{};
  geo.batch = batched ? xs[0] : 1;
  geo.c_in = xs[xs.size() - 3];
  geo.h = xs[xs.size() - 2];
  geo.w = xs[xs.size() - 1];
  geo.c_out = ks[0];
  geo.kh = ks[2];
  geo.kw = ks[3];
  geo.sh = stride.rows;
  geo.sw = stride.cols;
  if (ks[1] != geo.c_in) {
    throw DimensionError("conv2d: input x " + ShapeToString(xs) + " has " +
                         std::to_string(geo.c_in) + " channels but kernels " +
                         ShapeToString(ks) + " expect " + std::to_string(ks[1]));
  }
  if (geo.kh % 2 == 0 || geo.kw % 2 == 0) {
    throw DimensionError("conv2d: kernel " + ShapeToString(ks) + " must have odd spatial dims");
  }
  if (geo.sh == 0 || geo.sw == 0) throw DimensionError("conv2d: zero stride");
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != geo.c_out)) {
    throw DimensionError("conv2d: bias " + ShapeToString(bias.shape()) + " vs kernels " +
                         ShapeToString(ks));
  }
  geo.ho = (geo.h + geo.sh - 1) / geo.sh;
  geo.wo = (geo.w + geo.sw - 1) / geo.sw;
  geo.pad_top = SamePadBefore(geo.h, geo.ho, geo.kh, geo.sh);
  geo.pad_left = SamePadBefore(geo.w, geo.wo, geo.kw, geo.sw);

  const std::size_t in_stride = geo.c_in * geo.h * geo.w;
  const std::size_t out_stride = geo.c_out * geo.col_cols();
  Shape out_shape = batched ? Shape{geo.batch, geo.c_out, geo.ho, geo.wo}
                            : Shape{geo.c_out, geo.ho, geo.wo};
  Tensor<T> y(out_shape);
  std::vector<T> cols(geo.col_rows() * geo.col_cols());
  ConstMatrixMap<T> K(kernels.value().data().data(), geo.c_out, geo.col_rows());
  for (std::size_t b = 0; b < geo.batch; ++b) {
    Im2Col(x.value().data().data() + b * in_stride, geo, cols.data());
    ConstMatrixMap<T> C(cols.data(), geo.col_rows(), geo.col_cols());
    MatrixMap<T> Y(y.data().data() + b * out_stride, geo.c_out, geo.col_cols());
    Y.noalias() = K * C;
    if (has_bias) {
      const auto& bv = bias.value();
      for (std::size_t c = 0; c < geo.c_out; ++c) Y.row(c).array() += bv[c];
    }
  }

  const int ix = x.id(), ik = kernels.id(), ib = has_bias ? bias.id() : -1;
  std::vector<int> inputs = {ix, ik};
  if (has_bias) inputs.push_back(ib);
  return x.graph().Record(
      std::move(y), std::move(inputs),
      [=](Graph<T>& g, const Tensor<T>& dy) {
        const bool need_x = g.requires_grad(ix);
        const bool need_k = g.requires_grad(ik);
        std::vector<T> cols(geo.col_rows() * geo.col_cols());
        ConstMatrixMap<T> K(g.value(ik).data().data(), geo.c_out, geo.col_rows());
        for (std::size_t b = 0; b < geo.batch; ++b) {
          ConstMatrixMap<T> DY(dy.data().data() + b * out_stride, geo.c_out, geo.col_cols());
          if (need_k) {
            Im2Col(g.value(ix).data().data() + b * in_stride, geo, cols.data());
            ConstMatrixMap<T> C(cols.data(), geo.col_rows(), geo.col_cols());
            MatrixMap<T> DK(g.GradBuffer(ik).data().data(), geo.c_out, geo.col_rows());
            DK.noalias() += DY * C.transpose();
          }
          if (need_x) {
            MatrixMap<T> DC(cols.data(), geo.col_rows(), geo.col_cols());
            DC.noalias() = K.transpose() * DY;
            Col2ImAdd(cols.data(), geo, g.GradBuffer(ix).data().data() + b * in_stride);
          }
          if (ib >= 0 && g.requires_grad(ib)) {
            auto& db = g.GradBuffer(ib);
            for (std::size_t c = 0; c < geo.c_out; ++c) db[c] += DY.row(c).sum();
          }
        }
      },
      "conv2d");
}

template <typename T>
Var<T> MaxPool2D(Var<T> x) {
  const Shape xs = x.shape();
  if (xs.size() < 2) throw DimensionError("maxpool2d: input " + ShapeToString(xs) + " has rank < 2");
  const std::size_t h = xs[xs.size() - 2], w = xs[xs.size() - 1];
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  std::size_t planes = 1;
  for (std::size_t i = 0; i + 2 < xs.size(); ++i) planes *= xs[i];
  Shape out_shape = xs;
  out_shape[xs.size() - 2] = ho;
  out_shape[xs.size() - 1] = wo;
  Tensor<T> y(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  const auto& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        bool first = true;
        // Row-major scan: ties keep the lowest flat index.
        for (std::size_t i = 2 * oh; i < std::min(2 * oh + 2, h); ++i) {
          for (std::size_t j = 2 * ow; j < std::min(2 * ow + 2, w); ++j) {
            const std::size_t idx = (p * h + i) * w + j;
            if (first || xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
              first = false;
            }
          }
        }
        const std::size_t o = (p * ho + oh) * wo + ow;
        y[o] = best;
        (*argmax)[o] = best_idx;
      }
    }
  }
  const int xid = x.id();
  return x.graph().Record(
      std::move(y), {xid},
      [xid, argmax](Graph<T>& g, const Tensor<T>& dy) {
        if (!g.requires_grad(xid)) return;
        auto& dx = g.GradBuffer(xid);
        for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
      },
      "maxpool2d");
}

#define CAPSED_INSTANTIATE_OPS(T)                                  \
  template Var<T> Add(Var<T>, Var<T>);                             \
  template Var<T> Sub(Var<T>, Var<T>);                             \
  template Var<T> Mul(Var<T>, Var<T>);                             \
  template Var<T> Scale(Var<T>, T);                                \
  template Var<T> Sigmoid(Var<T>);                                 \
  template Var<T> Relu(Var<T>);                                    \
  template Var<T> Softmax(Var<T>, int);                            \
  template Var<T> L2Norm(Var<T>, int);                             \
  template Var<T> Sum(Var<T>);                                     \
  template Var<T> Mean(Var<T>);                                    \
  template Var<T> Reshape(Var<T>, Shape);                          \
  template Var<T> Permute(Var<T>, std::vector<std::size_t>);       \
  template Var<T> Affine(Var<T>, Var<T>, Var<T>);                  \
  template Var<T> Conv2D(Var<T>, Var<T>, Var<T>, Stride);          \
  template Var<T> MaxPool2D(Var<T>);

CAPSED_INSTANTIATE_OPS(float)
CAPSED_INSTANTIATE_OPS(double)

#undef CAPSED_INSTANTIATE_OPS

}  // namespace capsed::ops
