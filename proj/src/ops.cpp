#include "intrinsic/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <utility>

#include "intrinsic/errors.hpp"

namespace intrinsic::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(what) + " expects a rank-4 NCHW tensor, got " + shape_str(t.shape()));
  }
}

// Output columns [lo, hi) whose input column ow*stride - padding + kj lies in [0, width).
std::pair<std::int64_t, std::int64_t> valid_span(std::int64_t kj, std::int64_t width, std::int64_t out_w,
                                                 const ConvGeometry& g) {
  const std::int64_t off = g.padding - kj;
  const std::int64_t lo = off > 0 ? (off + g.stride - 1) / g.stride : 0;
  const std::int64_t last = width - 1 + off;
  const std::int64_t hi = last < 0 ? 0 : std::min(out_w, last / g.stride + 1);
  return {std::min(lo, hi), hi};
}

// Unfold one (C,H,W) image into a (C*k*k, Ho*Wo) row-major patch matrix.
void im2col(const double* img, std::int64_t channels, std::int64_t height, std::int64_t width,
            const ConvGeometry& g, std::int64_t out_h, std::int64_t out_w, double* cols) {
  const std::int64_t k = g.kernel;
  const std::int64_t plane = out_h * out_w;
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* src = img + c * height * width;
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * plane;
        const auto [lo, hi] = valid_span(kj, width, out_w, g);
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.padding + ki;
          double* dst = row + oh * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* line = src + ih * width - g.padding + kj;
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(line + lo, line + hi, dst + lo);
          } else {
            for (std::int64_t ow = lo; ow < hi; ++ow) dst[ow] = line[ow * g.stride];
          }
          std::fill(dst + hi, dst + out_w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patches back into an image buffer.
void col2im(const double* cols, std::int64_t channels, std::int64_t height, std::int64_t width,
            const ConvGeometry& g, std::int64_t out_h, std::int64_t out_w, double* img) {
  const std::int64_t k = g.kernel;
  const std::int64_t plane = out_h * out_w;
  for (std::int64_t c = 0; c < channels; ++c) {
    double* dst = img + c * height * width;
    for (std::int64_t ki = 0; ki < k; ++ki) {
      for (std::int64_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * plane;
        const auto [lo, hi] = valid_span(kj, width, out_w, g);
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= height) continue;
          const double* src = row + oh * out_w;
          double* line = dst + ih * width - g.padding + kj;
          if (g.stride == 1) {
            for (std::int64_t ow = lo; ow < hi; ++ow) line[ow] += src[ow];
          } else {
            for (std::int64_t ow = lo; ow < hi; ++ow) line[ow * g.stride] += src[ow];
          }
        }
      }
    }
  }
}

bool wants_grad(const NodePtr& p) { return p && p->requires_grad; }

template <typename F>
Var unary(const Var& x, F&& f, std::function<void(Node&)> bw) {
  Tensor out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(std::move(out), {x}, std::move(bw));
}

}  // namespace

std::int64_t conv_out_size(std::int64_t n, const ConvGeometry& g) {
  const std::int64_t span = n + 2 * g.padding - g.kernel;
  if (span < 0) return 0;
  return span / g.stride + 1;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4(xv, "conv2d");
  require_rank4(wv, "conv2d weight");
  const std::int64_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t cout = wv.dim(0);
  if (wv.dim(1) != cin || wv.dim(2) != g.kernel || wv.dim(3) != g.kernel) {
    throw ShapeError("conv2d weight " + shape_str(wv.shape()) + " incompatible with input " +
                     shape_str(xv.shape()));
  }
  const std::int64_t oh = conv_out_size(h, g), ow = conv_out_size(w, g);
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("conv2d input " + shape_str(xv.shape()) + " smaller than kernel " +
                     std::to_string(g.kernel));
  }
  const std::int64_t kdim = cin * g.kernel * g.kernel;
  const std::int64_t plane = oh * ow;

  Tensor out(Shape{n, cout, oh, ow});
  Buffer cols(static_cast<std::size_t>(kdim * plane));
  ConstMapMat wm(wv.data(), cout, kdim);
  for (std::int64_t b = 0; b < n; ++b) {
    im2col(xv.data() + b * cin * h * w, cin, h, w, g, oh, ow, cols.data());
    MapMat ym(out.data() + b * cout * plane, cout, plane);
    ym.noalias() = wm * ConstMapMat(cols.data(), kdim, plane);
    if (bias.defined()) {
      for (std::int64_t c = 0; c < cout; ++c) ym.row(c).array() += bias.value()[c];
    }
  }

  return make_result(std::move(out), {x, weight, bias}, [g, n, cin, h, w, cout, oh, ow, kdim, plane](Node& self) {
    const NodePtr& xn = self.parents[0];
    const NodePtr& wn = self.parents[1];
    const NodePtr& bn = self.parents[2];
    const double* dy = self.grad.data();
    Buffer cols(static_cast<std::size_t>(kdim * plane));
    ConstMapMat wm(wn->value.data(), cout, kdim);
    double* dx = wants_grad(xn) ? xn->grad_buffer() : nullptr;
    double* dw = wants_grad(wn) ? wn->grad_buffer() : nullptr;
    double* db = wants_grad(bn) ? bn->grad_buffer() : nullptr;
    for (std::int64_t b = 0; b < n; ++b) {
      ConstMapMat dym(dy + b * cout * plane, cout, plane);
      if (dw) {
        im2col(xn->value.data() + b * cin * h * w, cin, h, w, g, oh, ow, cols.data());
        MapMat(dw, cout, kdim).noalias() += dym * ConstMapMat(cols.data(), kdim, plane).transpose();
      }
      if (db) {
        for (std::int64_t c = 0; c < cout; ++c) db[c] += dym.row(c).sum();
      }
      if (dx) {
        MapMat(cols.data(), kdim, plane).noalias() = wm.transpose() * dym;
        col2im(cols.data(), cin, h, w, g, oh, ow, dx + b * cin * h * w);
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g,
                     int output_padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4(xv, "conv_transpose2d");
  require_rank4(wv, "conv_transpose2d weight");
  const std::int64_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t cout = wv.dim(1);
  if (wv.dim(0) != cin || wv.dim(2) != g.kernel || wv.dim(3) != g.kernel) {
    throw ShapeError("conv_transpose2d weight " + shape_str(wv.shape()) +
                     " incompatible with input " + shape_str(xv.shape()));
  }
  if (output_padding < 0 || output_padding >= g.stride) {
    throw ShapeError("conv_transpose2d output_padding must lie in [0, stride)");
  }
  const std::int64_t oh = (h - 1) * g.stride - 2 * g.padding + g.kernel + output_padding;
  const std::int64_t ow = (w - 1) * g.stride - 2 * g.padding + g.kernel + output_padding;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d produces an empty output");
  const std::int64_t kdim = cout * g.kernel * g.kernel;
  const std::int64_t plane = h * w;

  Tensor out(Shape{n, cout, oh, ow});
  Buffer cols(static_cast<std::size_t>(kdim * plane));
  ConstMapMat wm(wv.data(), cin, kdim);
  for (std::int64_t b = 0; b < n; ++b) {
    MapMat(cols.data(), kdim, plane).noalias() =
        wm.transpose() * ConstMapMat(xv.data() + b * cin * plane, cin, plane);
    double* y = out.data() + b * cout * oh * ow;
    col2im(cols.data(), cout, oh, ow, g, h, w, y);
    if (bias.defined()) {
      for (std::int64_t c = 0; c < cout; ++c) {
        const double bc = bias.value()[c];
        for (std::int64_t i = 0; i < oh * ow; ++i) y[c * oh * ow + i] += bc;
      }
    }
  }

  return make_result(std::move(out), {x, weight, bias}, [g, n, cin, h, w, cout, oh, ow, kdim, plane](Node& self) {
    const NodePtr& xn = self.parents[0];
    const NodePtr& wn = self.parents[1];
    const NodePtr& bn = self.parents[2];
    const double* dy = self.grad.data();
    Buffer cols(static_cast<std::size_t>(kdim * plane));
    ConstMapMat wm(wn->value.data(), cin, kdim);
    double* dx = wants_grad(xn) ? xn->grad_buffer() : nullptr;
    double* dw = wants_grad(wn) ? wn->grad_buffer() : nullptr;
    double* db = wants_grad(bn) ? bn->grad_buffer() : nullptr;
    for (std::int64_t b = 0; b < n; ++b) {
      const double* dyb = dy + b * cout * oh * ow;
      if (db) {
        for (std::int64_t c = 0; c < cout; ++c) {
          double s = 0.0;
          for (std::int64_t i = 0; i < oh * ow; ++i) s += dyb[c * oh * ow + i];
          db[c] += s;
        }
      }
      if (!dx && !dw) continue;
      im2col(dyb, cout, oh, ow, g, h, w, cols.data());
      ConstMapMat cm(cols.data(), kdim, plane);
      if (dx) MapMat(dx + b * cin * plane, cin, plane).noalias() += wm * cm;
      if (dw) {
        MapMat(dw, cin, kdim).noalias() +=
            ConstMapMat(xn->value.data() + b * cin * plane, cin, plane) * cm.transpose();
      }
    }
  });
}

Var reflection_pad2d(const Var& x, int pad) {
  const Tensor& xv = x.value();
  require_rank4(xv, "reflection_pad2d");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (pad < 0 || pad >= h || pad >= w) {
    throw ShapeError("reflection pad " + std::to_string(pad) + " needs spatial dims > pad, got " +
                     shape_str(xv.shape()));
  }
  const std::int64_t ph = h + 2 * pad, pw = w + 2 * pad;
  auto reflect = [](std::int64_t i, std::int64_t len) {
    if (i < 0) return -i;
    if (i >= len) return 2 * (len - 1) - i;
    return i;
  };
  // Source index for every padded position, reused by the backward pass.
  std::vector<std::int64_t> row_src(static_cast<std::size_t>(ph)), col_src(static_cast<std::size_t>(pw));
  for (std::int64_t i = 0; i < ph; ++i) row_src[i] = reflect(i - pad, h);
  for (std::int64_t j = 0; j < pw; ++j) col_src[j] = reflect(j - pad, w);

  Tensor out(Shape{n, c, ph, pw});
  for (std::int64_t p = 0; p < n * c; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * ph * pw;
    for (std::int64_t i = 0; i < ph; ++i)
      for (std::int64_t j = 0; j < pw; ++j) dst[i * pw + j] = src[row_src[i] * w + col_src[j]];
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    double* dx = self.parents[0]->grad_buffer();
    const double* dy = self.grad.data();
    for (std::int64_t p = 0; p < n * c; ++p) {
      double* dst = dx + p * h * w;
      const double* src = dy + p * ph * pw;
      for (std::int64_t i = 0; i < ph; ++i)
        for (std::int64_t j = 0; j < pw; ++j) dst[row_src[i] * w + col_src[j]] += src[i * pw + j];
    }
  });
}

Var instance_norm2d(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  require_rank4(xv, "instance_norm2d");
  const std::int64_t n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  if (static_cast<std::int64_t>(gamma.value().size()) != c ||
      static_cast<std::int64_t>(beta.value().size()) != c) {
    throw ShapeError("instance_norm2d affine parameters do not match " + std::to_string(c) +
                     " channels");
  }
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(n * c));
  Tensor out(xv.shape());
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t off = (b * c + ch) * plane;
      const double* src = xv.data() + off;
      double mu = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) mu += src[i];
      mu /= static_cast<double>(plane);
      double var = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) var += (src[i] - mu) * (src[i] - mu);
      var /= static_cast<double>(plane);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(b * c + ch)] = is;
      const double gm = gamma.value()[ch], bt = beta.value()[ch];
      for (std::int64_t i = 0; i < plane; ++i) {
        const double xh = (src[i] - mu) * is;
        xhat[off + i] = xh;
        out[off + i] = gm * xh + bt;
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, plane](Node& self) {
    const NodePtr& xn = self.parents[0];
    const NodePtr& gn = self.parents[1];
    const NodePtr& bn = self.parents[2];
    const double* dy = self.grad.data();
    double* dx = wants_grad(xn) ? xn->grad_buffer() : nullptr;
    double* dg = wants_grad(gn) ? gn->grad_buffer() : nullptr;
    double* db = wants_grad(bn) ? bn->grad_buffer() : nullptr;
    const double m = static_cast<double>(plane);
    for (std::int64_t b = 0; b < n; ++b) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const std::int64_t off = (b * c + ch) * plane;
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) {
          sum_dy += dy[off + i];
          sum_dy_xhat += dy[off + i] * xhat[off + i];
        }
        if (dg) dg[ch] += sum_dy_xhat;
        if (db) db[ch] += sum_dy;
        if (dx) {
          const double gm = gn->value[ch];
          const double is = inv_std[static_cast<std::size_t>(b * c + ch)];
          for (std::int64_t i = 0; i < plane; ++i) {
            dx[off + i] += gm * is / m * (m * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
          }
        }
      }
    }
  });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& self) {
    const Tensor& in = self.parents[0]->value;
    double* dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] > 0.0) dx[i] += self.grad[i];
  });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(x, [slope](double v) { return v > 0.0 ? v : slope * v; }, [slope](Node& self) {
    const Tensor& in = self.parents[0]->value;
    double* dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < in.size(); ++i) dx[i] += in[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
  });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](Node& self) {
    double* dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double y = self.value[i];
      dx[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var sigmoid(const Var& x) {
  return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](Node& self) {
    double* dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double y = self.value[i];
      dx[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (wants_grad(p)) p->accumulate(self.grad);
    }
  });
}

Var mean(const Var& x) {
  const Tensor& v = x.value();
  if (v.empty()) throw ShapeError("mean of an empty tensor");
  double s = 0.0;
  for (double e : v.values()) s += e;
  return make_result(Tensor::scalar(s / static_cast<double>(v.size())), {x}, [](Node& self) {
    auto& p = self.parents[0];
    const double g = self.grad[0] / static_cast<double>(p->value.size());
    double* dx = p->grad_buffer();
    for (std::size_t i = 0; i < p->value.size(); ++i) dx[i] += g;
  });
}

Var log_clamped(const Var& x, double eps) {
  const double lo = eps, hi = 1.0 - eps;
  return unary(x, [lo, hi](double v) { return std::log(std::clamp(v, lo, hi)); }, [lo, hi](Node& self) {
    const Tensor& in = self.parents[0]->value;
    double* dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] >= lo && in[i] <= hi) dx[i] += self.grad[i] / in[i];
  });
}

Var one_minus(const Var& x) {
  return unary(x, [](double v) { return 1.0 - v; }, [](Node& self) {
    double* dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] -= self.grad[i];
  });
}

Var l1_mean(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1 shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.empty()) throw ShapeError("l1 of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  return make_result(Tensor::scalar(s / static_cast<double>(av.size())), {a, b}, [](Node& self) {
    const NodePtr& an = self.parents[0];
    const NodePtr& bn = self.parents[1];
    const double g = self.grad[0] / static_cast<double>(an->value.size());
    double* da = wants_grad(an) ? an->grad_buffer() : nullptr;
    double* db = wants_grad(bn) ? bn->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < an->value.size(); ++i) {
      const double d = an->value[i] - bn->value[i];
      const double s = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
      if (da) da[i] += s;
      if (db) db[i] -= s;
    }
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum term/weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * terms[i].item();
  return make_result(Tensor::scalar(s), terms, [weights](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (wants_grad(self.parents[i])) self.parents[i]->grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

Var detach(const Var& x) { return Var(x.value(), false); }

}  // namespace intrinsic::ag
