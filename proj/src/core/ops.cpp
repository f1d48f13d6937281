#include <algorithm>
#include <cmath>
#include <numbers>

#include "transfusor/errors.hpp"
#include "transfusor/simd/kernels.hpp"
#include "transfusor/tensor.hpp"

namespace transfusor {
namespace {

using Node = Tensor::Node;
using Backward = std::function<void(Node&)>;

const simd::KernelTable& kern() { return simd::active(); }

Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, const char* op,
                   Backward rule) {
  auto node = Tensor::from(std::move(shape), std::move(values)).node();
  node->op = op;
  bool needs = false;
  for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(rule);
  }
  return Tensor::wrap(node);
}

// Gradient buffer of a parent, or nullptr when it does not take gradients.
double* grad_of(Node& n) {
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor");
}

// Number of times b repeats to cover a; b's shape must be a suffix of a's.
std::size_t tile_count(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sb.size() <= sa.size() &&
            std::equal(sb.begin(), sb.end(), sa.end() - static_cast<long>(sb.size()));
  if (!ok)
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(sb) +
                         " onto " + shape_string(sa));
  return a.size() / b.size();
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r)
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
}

template <class F>
Tensor unary(const Tensor& x, const char* op, F&& forward, Backward rule) {
  require_defined(x, op);
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xv[i]);
  return make_result(x.shape(), std::move(out), {&x}, op, std::move(rule));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  const std::size_t tiles = tile_count(a, b, "add");
  const std::size_t w = b.size();
  std::vector<double> out(a.size());
  for (std::size_t t = 0; t < tiles; ++t)
    kern().add(a.values().data() + t * w, b.values().data(), out.data() + t * w, w);
  return make_result(a.shape(), std::move(out), {&a, &b}, "add",
                     [tiles, w](Node& self) {
                       const double* g = self.grad.data();
                       if (double* ga = grad_of(*self.parents[0]))
                         kern().axpy(1.0, g, ga, tiles * w);
                       if (double* gb = grad_of(*self.parents[1]))
                         for (std::size_t t = 0; t < tiles; ++t)
                           kern().axpy(1.0, g + t * w, gb, w);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  const std::size_t tiles = tile_count(a, b, "sub");
  const std::size_t w = b.size();
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t t = 0; t < tiles; ++t)
    for (std::size_t j = 0; j < w; ++j) out[t * w + j] = av[t * w + j] - bv[j];
  return make_result(a.shape(), std::move(out), {&a, &b}, "sub",
                     [tiles, w](Node& self) {
                       const double* g = self.grad.data();
                       if (double* ga = grad_of(*self.parents[0]))
                         kern().axpy(1.0, g, ga, tiles * w);
                       if (double* gb = grad_of(*self.parents[1]))
                         for (std::size_t t = 0; t < tiles; ++t)
                           kern().axpy(-1.0, g + t * w, gb, w);
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  const std::size_t tiles = tile_count(a, b, "mul");
  const std::size_t w = b.size();
  std::vector<double> out(a.size());
  for (std::size_t t = 0; t < tiles; ++t)
    kern().mul(a.values().data() + t * w, b.values().data(), out.data() + t * w, w);
  return make_result(a.shape(), std::move(out), {&a, &b}, "mul",
                     [tiles, w](Node& self) {
                       const double* g = self.grad.data();
                       const Node& na = *self.parents[0];
                       const Node& nb = *self.parents[1];
                       if (double* ga = grad_of(*self.parents[0]))
                         for (std::size_t t = 0; t < tiles; ++t)
                           kern().mul_acc(g + t * w, nb.value.data(), ga + t * w, w);
                       if (double* gb = grad_of(*self.parents[1]))
                         for (std::size_t t = 0; t < tiles; ++t)
                           kern().mul_acc(g + t * w, na.value.data() + t * w, gb, w);
                     });
}

Tensor scale(const Tensor& a, double s) {
  require_defined(a, "scale");
  std::vector<double> out(a.size());
  kern().scale(s, a.values().data(), out.data(), out.size());
  return make_result(a.shape(), std::move(out), {&a}, "scale", [s](Node& self) {
    if (double* ga = grad_of(*self.parents[0]))
      kern().axpy(s, self.grad.data(), ga, self.grad.size());
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, "add_scalar", [s](double v) { return v + s; }, [](Node& self) {
    if (double* ga = grad_of(*self.parents[0]))
      kern().axpy(1.0, self.grad.data(), ga, self.grad.size());
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](Node& self) {
        if (double* gx = grad_of(*self.parents[0]))
          for (std::size_t i = 0; i < self.value.size(); ++i) {
            const double s = self.value[i];
            gx[i] += self.grad[i] * s * (1.0 - s);
          }
      });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](Node& self) {
        if (double* gx = grad_of(*self.parents[0])) {
          const auto& xv = self.parents[0]->value;
          const double inv_sqrt_2pi = std::numbers::inv_sqrtpi / std::numbers::sqrt2;
          for (std::size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx[i] += self.grad[i] * (cdf + v * pdf);
          }
        }
      });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); }, [](Node& self) {
    if (double* gx = grad_of(*self.parents[0]))
      kern().mul_acc(self.grad.data(), self.value.data(), gx, self.value.size());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(sa) +
                         " and " + shape_string(sb));
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t n = sa.back();
  const std::size_t p = sb.back();
  if (sb[sb.size() - 2] != n)
    throw DimensionError("matmul: inner extents differ for " + shape_string(sa) +
                         " x " + shape_string(sb));
  const bool shared_rhs = sb.size() == 2;
  if (!shared_rhs && !(sb.size() == sa.size() &&
                       std::equal(sa.begin(), sa.end() - 2, sb.begin())))
    throw DimensionError("matmul: leading extents differ for " + shape_string(sa) +
                         " x " + shape_string(sb));
  const std::size_t batch = a.size() / (m * n);
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(p);
  std::vector<double> out(batch * m * p);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  if (shared_rhs) {
    kern().gemm(batch * m, p, n, av, bv, out.data(), false);
  } else {
    for (std::size_t t = 0; t < batch; ++t)
      kern().gemm(m, p, n, av + t * m * n, bv + t * n * p, out.data() + t * m * p,
                  false);
  }
  return make_result(
      std::move(out_shape), std::move(out), {&a, &b}, "matmul",
      [=](Node& self) {
        const Node& na = *self.parents[0];
        const Node& nb = *self.parents[1];
        const double* g = self.grad.data();
        double* ga = grad_of(*self.parents[0]);
        double* gb = grad_of(*self.parents[1]);
        if (shared_rhs) {
          const std::size_t rows = batch * m;
          if (ga) {  // dA = dC * B^T
            std::vector<double> bt(p * n);
            transpose(nb.value.data(), n, p, bt.data());
            kern().gemm(rows, n, p, g, bt.data(), ga, true);
          }
          if (gb) {  // dB = A^T * dC
            std::vector<double> at(n * rows);
            transpose(na.value.data(), rows, n, at.data());
            kern().gemm(n, p, rows, at.data(), g, gb, true);
          }
          return;
        }
        std::vector<double> bt(p * n);
        std::vector<double> at(n * m);
        for (std::size_t t = 0; t < batch; ++t) {
          const double* gt = g + t * m * p;
          if (ga) {
            transpose(nb.value.data() + t * n * p, n, p, bt.data());
            kern().gemm(m, n, p, gt, bt.data(), ga + t * m * n, true);
          }
          if (gb) {
            transpose(na.value.data() + t * m * n, m, n, at.data());
            kern().gemm(n, p, m, at.data(), gt, gb + t * n * p, true);
          }
        }
      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul_nt");
  require_defined(b, "matmul_nt");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() != sa.size() ||
      !std::equal(sa.begin(), sa.end() - 2, sb.begin()) || sa.back() != sb.back())
    throw DimensionError("matmul_nt: incompatible " + shape_string(sa) + " x " +
                         shape_string(sb) + "^T");
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t n = sa.back();
  const std::size_t p = sb[sb.size() - 2];
  const std::size_t batch = a.size() / (m * n);
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(p);
  std::vector<double> out(batch * m * p);
  std::vector<double> bt(n * p);
  for (std::size_t t = 0; t < batch; ++t) {
    transpose(b.values().data() + t * p * n, p, n, bt.data());
    kern().gemm(m, p, n, a.values().data() + t * m * n, bt.data(),
                out.data() + t * m * p, false);
  }
  return make_result(
      std::move(out_shape), std::move(out), {&a, &b}, "matmul_nt",
      [=](Node& self) {
        const Node& na = *self.parents[0];
        const Node& nb = *self.parents[1];
        double* ga = grad_of(*self.parents[0]);
        double* gb = grad_of(*self.parents[1]);
        std::vector<double> gt(p * m);
        for (std::size_t t = 0; t < batch; ++t) {
          const double* g = self.grad.data() + t * m * p;
          if (ga)  // dA = dC * B
            kern().gemm(m, n, p, g, nb.value.data() + t * p * n, ga + t * m * n, true);
          if (gb) {  // dB = dC^T * A
            transpose(g, m, p, gt.data());
            kern().gemm(p, n, m, gt.data(), na.value.data() + t * m * n,
                        gb + t * p * n, true);
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(weight, "linear");
  if (weight.rank() != 2)
    throw DimensionError("linear: weight must be [in, out], got " +
                         shape_string(weight.shape()));
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(1))
    throw DimensionError("linear: bias " + shape_string(bias.shape()) +
                         " does not match weight " + shape_string(weight.shape()));
  return add(matmul(x, weight), bias);
}

Tensor softmax(const Tensor& x, int axis) {
  require_defined(x, "softmax");
  const Shape& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), "softmax");
  const std::size_t len = s[ax];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t outer = x.size() / (len * inner);
  std::vector<double> out(x.size());
  const double* xv = x.values().data();
  std::vector<double> buf(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      for (std::size_t j = 0; j < len; ++j) buf[j] = xv[base + j * inner];
      const double mx = kern().max(buf.data(), len);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        buf[j] = std::exp(buf[j] - mx);
        total += buf[j];
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] = buf[j] * inv;
    }
  return make_result(s, std::move(out), {&x}, "softmax",
                     [outer, len, inner](Node& self) {
                       double* gx = grad_of(*self.parents[0]);
                       if (!gx) return;
                       const double* y = self.value.data();
                       const double* g = self.grad.data();
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t in = 0; in < inner; ++in) {
                           const std::size_t base = o * len * inner + in;
                           double d = 0.0;
                           for (std::size_t j = 0; j < len; ++j)
                             d += g[base + j * inner] * y[base + j * inner];
                           for (std::size_t j = 0; j < len; ++j) {
                             const std::size_t idx = base + j * inner;
                             gx[idx] += y[idx] * (g[idx] - d);
                           }
                         }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match last extent of " +
                         shape_string(x.shape()));
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  // Saved for backward: normalized input and reciprocal std per row.
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const double* xv = x.values().data();
  const double* gv = gain.values().data();
  const double* bv = bias.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * d;
    const double mu = kern().sum(row, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {&x, &gain, &bias}, "layer_norm",
      [rows, d, xhat, rstd](Node& self) {
        const double* g = self.grad.data();
        const double* gain_v = self.parents[1]->value.data();
        double* gx = grad_of(*self.parents[0]);
        double* gg = grad_of(*self.parents[1]);
        double* gb = grad_of(*self.parents[2]);
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g + r * d;
          const double* hr = xhat->data() + r * d;
          if (gg) kern().mul_acc(gr, hr, gg, d);
          if (gb) kern().axpy(1.0, gr, gb, d);
          if (!gx) continue;
          kern().mul(gr, gain_v, dxhat.data(), d);
          const double m1 = kern().sum(dxhat.data(), d) / static_cast<double>(d);
          const double m2 = kern().dot(dxhat.data(), hr, d) / static_cast<double>(d);
          const double rs = (*rstd)[r];
          for (std::size_t j = 0; j < d; ++j)
            gx[r * d + j] += rs * (dxhat[j] - m1 - hr[j] * m2);
        }
      });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  for (const Tensor& t : parts) require_defined(t, "concat");
  const Shape& s0 = parts[0].shape();
  const std::size_t ax = normalize_axis(axis, s0.size(), "concat");
  Shape out_shape = s0;
  out_shape[ax] = 0;
  std::vector<std::size_t> chunk(parts.size());
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < s0.size(); ++i) inner *= s0[i];
  std::size_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s0[i];
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& sp = parts[p].shape();
    bool ok = sp.size() == s0.size();
    for (std::size_t i = 0; ok && i < sp.size(); ++i)
      if (i != ax && sp[i] != s0[i]) ok = false;
    if (!ok)
      throw DimensionError("concat: " + shape_string(sp) + " incompatible with " +
                           shape_string(s0) + " along axis " + std::to_string(ax));
    out_shape[ax] += sp[ax];
    chunk[p] = sp[ax] * inner;
  }
  const std::size_t row = out_shape[ax] * inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].values().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * chunk[p], chunk[p], out.data() + o * row + offset);
    offset += chunk[p];
  }
  auto node = Tensor::from(out_shape, std::move(out)).node();
  node->op = "concat";
  bool needs = false;
  for (const Tensor& t : parts) needs = needs || t.requires_grad();
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    for (const Tensor& t : parts) node->parents.push_back(t.node());
    node->backward = [chunk, outer, row](Node& self) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        if (double* gp = grad_of(*self.parents[p]))
          for (std::size_t o = 0; o < outer; ++o)
            kern().axpy(1.0, self.grad.data() + o * row + off, gp + o * chunk[p],
                        chunk[p]);
        off += chunk[p];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel(shape) != x.size())
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " +
                         shape_string(shape));
  std::vector<double> v(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(v), {&x}, "reshape", [](Node& self) {
    if (double* gx = grad_of(*self.parents[0]))
      kern().axpy(1.0, self.grad.data(), gx, self.grad.size());
  });
}

Tensor swap_axes12(const Tensor& x) {
  require_defined(x, "swap_axes12");
  if (x.rank() != 4)
    throw DimensionError("swap_axes12 needs rank 4, got " + shape_string(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
  std::vector<double> out(x.size());
  const double* xv = x.values().data();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k)
        std::copy_n(xv + ((i * b + j) * c + k) * d, d, out.data() + ((i * c + k) * b + j) * d);
  return make_result({a, c, b, d}, std::move(out), {&x}, "swap_axes12",
                     [a, b, c, d](Node& self) {
                       double* gx = grad_of(*self.parents[0]);
                       if (!gx) return;
                       for (std::size_t i = 0; i < a; ++i)
                         for (std::size_t j = 0; j < b; ++j)
                           for (std::size_t k = 0; k < c; ++k)
                             kern().axpy(1.0,
                                         self.grad.data() + ((i * c + k) * b + j) * d,
                                         gx + ((i * b + j) * c + k) * d, d);
                     });
}

Tensor repeat_positions(const Tensor& x, std::size_t positions) {
  require_defined(x, "repeat_positions");
  if (x.rank() != 2 || positions == 0)
    throw DimensionError("repeat_positions needs [B, D] and positions > 0, got " +
                         shape_string(x.shape()));
  const std::size_t bsz = x.dim(0), d = x.dim(1);
  std::vector<double> out(bsz * positions * d);
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t s = 0; s < positions; ++s)
      std::copy_n(x.values().data() + b * d, d, out.data() + (b * positions + s) * d);
  return make_result({bsz, positions, d}, std::move(out), {&x}, "repeat_positions",
                     [bsz, positions, d](Node& self) {
                       double* gx = grad_of(*self.parents[0]);
                       if (!gx) return;
                       for (std::size_t b = 0; b < bsz; ++b)
                         for (std::size_t s = 0; s < positions; ++s)
                           kern().axpy(1.0, self.grad.data() + (b * positions + s) * d,
                                       gx + b * d, d);
                     });
}

Tensor mean_positions(const Tensor& x) {
  require_defined(x, "mean_positions");
  if (x.rank() != 3)
    throw DimensionError("mean_positions needs [B, S, D], got " + shape_string(x.shape()));
  const std::size_t bsz = x.dim(0), positions = x.dim(1), d = x.dim(2);
  const double inv = 1.0 / static_cast<double>(positions);
  std::vector<double> out(bsz * d, 0.0);
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t s = 0; s < positions; ++s)
      kern().axpy(inv, x.values().data() + (b * positions + s) * d, out.data() + b * d, d);
  return make_result({bsz, d}, std::move(out), {&x}, "mean_positions",
                     [bsz, positions, d, inv](Node& self) {
                       double* gx = grad_of(*self.parents[0]);
                       if (!gx) return;
                       for (std::size_t b = 0; b < bsz; ++b)
                         for (std::size_t s = 0; s < positions; ++s)
                           kern().axpy(inv, self.grad.data() + b * d,
                                       gx + (b * positions + s) * d, d);
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  require_defined(table, "gather_rows");
  if (table.rank() != 2)
    throw DimensionError("gather_rows needs a [R, D] table, got " +
                         shape_string(table.shape()));
  if (rows.empty()) throw UsageError("gather_rows: no rows requested");
  const std::size_t r = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= r)
      throw UsageError("gather_rows: row " + std::to_string(idx[i]) +
                       " out of range for " + std::to_string(r) + " rows");
    std::copy_n(table.values().data() + idx[i] * d, d, out.data() + i * d);
  }
  const std::size_t n = idx.size();
  return make_result({n, d}, std::move(out), {&table}, "gather_rows",
                     [idx = std::move(idx), d](Node& self) {
                       double* gt = grad_of(*self.parents[0]);
                       if (!gt) return;
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         kern().axpy(1.0, self.grad.data() + i * d, gt + idx[i] * d, d);
                     });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  const double total = kern().sum(x.values().data(), x.size());
  return make_result({1}, {total}, {&x}, "sum", [](Node& self) {
    if (double* gx = grad_of(*self.parents[0])) {
      const double g = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) gx[i] += g;
    }
  });
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_defined(pred, "mse_loss");
  require_defined(target, "mse_loss");
  if (pred.shape() != target.shape())
    throw DimensionError("mse_loss: prediction " + shape_string(pred.shape()) +
                         " vs target " + shape_string(target.shape()));
  const std::size_t n = pred.size();
  auto diff = std::make_shared<std::vector<double>>(n);
  const auto pv = pred.values();
  const auto tv = target.values();
  for (std::size_t i = 0; i < n; ++i) (*diff)[i] = pv[i] - tv[i];
  const double loss = kern().dot(diff->data(), diff->data(), n) / static_cast<double>(n);
  return make_result({1}, {loss}, {&pred, &target}, "mse_loss",
                     [diff, n](Node& self) {
                       const double c = 2.0 * self.grad[0] / static_cast<double>(n);
                       if (double* gp = grad_of(*self.parents[0]))
                         kern().axpy(c, diff->data(), gp, n);
                       if (double* gt = grad_of(*self.parents[1]))
                         kern().axpy(-c, diff->data(), gt, n);
                     });
}

}  // namespace transfusor
