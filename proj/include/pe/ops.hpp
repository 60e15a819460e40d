#pragma once

#include <cmath>
#include <vector>

#include "pe/tensor.hpp"

namespace pe {

namespace ops_detail {

struct Dims4 {
  int n, c, h, w;
  bool batched;
};

inline Dims4 as4d(const Tensor& x, const char* what) {
  if (x.dim() == 4) return {x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], true};
  if (x.dim() == 3) return {1, x.shape()[0], x.shape()[1], x.shape()[2], false};
  throw ShapeMismatch(std::string(what) + ": expected (C,H,W) or (N,C,H,W)");
}

inline std::vector<int> shape4(const Dims4& d, int c, int h, int w) {
  if (d.batched) return {d.n, c, h, w};
  return {c, h, w};
}

}  // namespace ops_detail

// 3x3 cross-correlation, padding 1, stride 1 or 2.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     int stride = 1) {
  using namespace ops_detail;
  Dims4 d = as4d(x, "conv2d");
  if (weight.dim() != 4 || weight.shape()[2] != 3 || weight.shape()[3] != 3)
    throw ShapeMismatch("conv2d: weight must be (C_out,C_in,3,3)");
  if (stride != 1 && stride != 2) throw ShapeMismatch("conv2d: stride must be 1 or 2");
  const int c_out = weight.shape()[0];
  const int c_in = weight.shape()[1];
  if (c_in != d.c) throw ShapeMismatch("conv2d: input channels do not match weight");
  if (bias.dim() != 1 || bias.shape()[0] != c_out)
    throw ShapeMismatch("conv2d: bias must be (C_out)");
  const int oh = (d.h + 2 - 3) / stride + 1;
  const int ow = (d.w + 2 - 3) / stride + 1;

  Tensor out = autodiff_detail::make_result(shape4(d, c_out, oh, ow),
                                            {x, weight, bias});
  const double* xd = x.data().data();
  const double* wd = weight.data().data();
  const double* bd = bias.data().data();
  double* od = out.data().data();
  auto xi = [d](int n, int c, int y, int xx) {
    return ((static_cast<size_t>(n) * d.c + c) * d.h + y) * d.w + xx;
  };
  auto oi = [c_out, oh, ow](int n, int c, int y, int xx) {
    return ((static_cast<size_t>(n) * c_out + c) * oh + y) * ow + xx;
  };
  auto wi = [c_in](int co, int ci, int ky, int kx) {
    return ((static_cast<size_t>(co) * c_in + ci) * 3 + ky) * 3 + kx;
  };
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < c_out; ++co)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = bd[co];
          const int iy0 = y * stride - 1;
          const int ix0 = xx * stride - 1;
          for (int ci = 0; ci < c_in; ++ci)
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= d.h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= d.w) continue;
                acc += xd[xi(n, ci, iy, ix)] * wd[wi(co, ci, ky, kx)];
              }
            }
          od[oi(n, co, y, xx)] = acc;
        }

  auto self = out.impl().get();
  auto xp = x.impl();
  auto wp = weight.impl();
  auto bp = bias.impl();
  out.impl()->backprop = [self, xp, wp, bp, d, c_out, c_in, oh, ow, stride, xi, oi, wi]() {
    const double* g = self->grad.data();
    const double* xd = xp->data.data();
    const double* wd = wp->data.data();
    double* gx = xp->grad.data();
    double* gw = wp->grad.data();
    double* gb = bp->grad.data();
    for (int n = 0; n < d.n; ++n)
      for (int co = 0; co < c_out; ++co)
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            const double go = g[oi(n, co, y, xx)];
            if (go == 0.0) continue;
            gb[co] += go;
            const int iy0 = y * stride - 1;
            const int ix0 = xx * stride - 1;
            for (int ci = 0; ci < c_in; ++ci)
              for (int ky = 0; ky < 3; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= d.h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const int ix = ix0 + kx;
                  if (ix < 0 || ix >= d.w) continue;
                  gx[xi(n, ci, iy, ix)] += go * wd[wi(co, ci, ky, kx)];
                  gw[wi(co, ci, ky, kx)] += go * xd[xi(n, ci, iy, ix)];
                }
              }
          }
  };
  return out;
}

// Train mode normalizes by batch statistics over (N,H,W) per channel and
// updates running stats; eval mode uses running stats.
inline Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           std::vector<double>& running_mean,
                           std::vector<double>& running_var, bool training,
                           double momentum = 0.1, double eps = 1e-5) {
  using namespace ops_detail;
  Dims4 d = as4d(x, "batch_norm2d");
  if (gamma.dim() != 1 || gamma.shape()[0] != d.c || beta.dim() != 1 ||
      beta.shape()[0] != d.c)
    throw ShapeMismatch("batch_norm2d: gamma/beta must be (C)");
  if (running_mean.size() != static_cast<size_t>(d.c) ||
      running_var.size() != static_cast<size_t>(d.c))
    throw ShapeMismatch("batch_norm2d: running stats must be (C)");

  const size_t plane = static_cast<size_t>(d.h) * d.w;
  const size_t m = static_cast<size_t>(d.n) * plane;
  std::vector<double> mean(d.c), var(d.c);
  if (training) {
    for (int c = 0; c < d.c; ++c) {
      double s = 0.0;
      for (int n = 0; n < d.n; ++n) {
        const double* p = x.data().data() + (static_cast<size_t>(n) * d.c + c) * plane;
        for (size_t i = 0; i < plane; ++i) s += p[i];
      }
      mean[c] = s / static_cast<double>(m);
      double v = 0.0;
      for (int n = 0; n < d.n; ++n) {
        const double* p = x.data().data() + (static_cast<size_t>(n) * d.c + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          double dv = p[i] - mean[c];
          v += dv * dv;
        }
      }
      var[c] = v / static_cast<double>(m);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c];
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  Tensor out = autodiff_detail::make_result(x.shape(), {x, gamma, beta});
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  for (int n = 0; n < d.n; ++n)
    for (int c = 0; c < d.c; ++c) {
      const double inv = 1.0 / std::sqrt(var[c] + eps);
      const size_t base = (static_cast<size_t>(n) * d.c + c) * plane;
      for (size_t i = 0; i < plane; ++i) {
        double xh = (x.data()[base + i] - mean[c]) * inv;
        (*xhat)[base + i] = xh;
        out.data()[base + i] = gamma.data()[c] * xh + beta.data()[c];
      }
    }

  auto self = out.impl().get();
  auto xp = x.impl();
  auto gp = gamma.impl();
  auto bp = beta.impl();
  out.impl()->backprop = [self, xp, gp, bp, d, plane, m, var, eps, xhat, training]() {
    for (int c = 0; c < d.c; ++c) {
      const double inv = 1.0 / std::sqrt(var[c] + eps);
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (int n = 0; n < d.n; ++n) {
        const size_t base = (static_cast<size_t>(n) * d.c + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          sum_dy += self->grad[base + i];
          sum_dy_xh += self->grad[base + i] * (*xhat)[base + i];
        }
      }
      gp->grad[c] += sum_dy_xh;
      bp->grad[c] += sum_dy;
      const double g = gp->data[c];
      const double mm = static_cast<double>(m);
      for (int n = 0; n < d.n; ++n) {
        const size_t base = (static_cast<size_t>(n) * d.c + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double dy = self->grad[base + i];
          if (training) {
            xp->grad[base + i] +=
                g * inv * (dy - sum_dy / mm - (*xhat)[base + i] * sum_dy_xh / mm);
          } else {
            xp->grad[base + i] += g * inv * dy;
          }
        }
      }
    }
  };
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out = autodiff_detail::make_result(x.shape(), {x});
  for (size_t i = 0; i < x.size(); ++i) out.data()[i] = std::max(0.0, x.data()[i]);
  auto self = out.impl().get();
  auto xp = x.impl();
  out.impl()->backprop = [self, xp]() {
    for (size_t i = 0; i < xp->data.size(); ++i)
      if (xp->data[i] > 0.0) xp->grad[i] += self->grad[i];
  };
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("add: shapes differ");
  Tensor out = autodiff_detail::make_result(a.shape(), {a, b});
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  auto self = out.impl().get();
  auto ap = a.impl();
  auto bp = b.impl();
  out.impl()->backprop = [self, ap, bp]() {
    for (size_t i = 0; i < self->grad.size(); ++i) {
      ap->grad[i] += self->grad[i];
      bp->grad[i] += self->grad[i];
    }
  };
  return out;
}

// x: (F) or (N,F); weight: (M,F); bias: (M)
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.dim() != 2) throw ShapeMismatch("linear: weight must be (M,F)");
  const int m = weight.shape()[0];
  const int f = weight.shape()[1];
  if (bias.dim() != 1 || bias.shape()[0] != m) throw ShapeMismatch("linear: bias must be (M)");
  int n = 1;
  bool batched = false;
  if (x.dim() == 2) {
    n = x.shape()[0];
    batched = true;
    if (x.shape()[1] != f) throw ShapeMismatch("linear: feature dim mismatch");
  } else if (x.dim() == 1) {
    if (x.shape()[0] != f) throw ShapeMismatch("linear: feature dim mismatch");
  } else {
    throw ShapeMismatch("linear: expected (F) or (N,F)");
  }
  Tensor out = autodiff_detail::make_result(
      batched ? std::vector<int>{n, m} : std::vector<int>{m}, {x, weight, bias});
  for (int b = 0; b < n; ++b)
    for (int r = 0; r < m; ++r) {
      double acc = bias.data()[r];
      for (int c = 0; c < f; ++c)
        acc += weight.data()[static_cast<size_t>(r) * f + c] *
               x.data()[static_cast<size_t>(b) * f + c];
      out.data()[static_cast<size_t>(b) * m + r] = acc;
    }
  auto self = out.impl().get();
  auto xp = x.impl();
  auto wp = weight.impl();
  auto bp = bias.impl();
  out.impl()->backprop = [self, xp, wp, bp, n, m, f]() {
    for (int b = 0; b < n; ++b)
      for (int r = 0; r < m; ++r) {
        const double go = self->grad[static_cast<size_t>(b) * m + r];
        if (go == 0.0) continue;
        bp->grad[r] += go;
        for (int c = 0; c < f; ++c) {
          wp->grad[static_cast<size_t>(r) * f + c] +=
              go * xp->data[static_cast<size_t>(b) * f + c];
          xp->grad[static_cast<size_t>(b) * f + c] +=
              go * wp->data[static_cast<size_t>(r) * f + c];
        }
      }
  };
  return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  using namespace ops_detail;
  Dims4 da = as4d(a, "concat_channels");
  Dims4 db = as4d(b, "concat_channels");
  if (da.n != db.n || da.h != db.h || da.w != db.w || da.batched != db.batched)
    throw ShapeMismatch("concat_channels: spatial/batch dims differ");
  const int c = da.c + db.c;
  Tensor out = autodiff_detail::make_result(shape4(da, c, da.h, da.w), {a, b});
  const size_t plane = static_cast<size_t>(da.h) * da.w;
  for (int n = 0; n < da.n; ++n) {
    std::copy(a.data().begin() + static_cast<size_t>(n) * da.c * plane,
              a.data().begin() + static_cast<size_t>(n + 1) * da.c * plane,
              out.data().begin() + static_cast<size_t>(n) * c * plane);
    std::copy(b.data().begin() + static_cast<size_t>(n) * db.c * plane,
              b.data().begin() + static_cast<size_t>(n + 1) * db.c * plane,
              out.data().begin() + static_cast<size_t>(n) * c * plane + da.c * plane);
  }
  auto self = out.impl().get();
  auto ap = a.impl();
  auto bp = b.impl();
  const int ca = da.c, cb = db.c, nn = da.n;
  out.impl()->backprop = [self, ap, bp, ca, cb, nn, plane, c]() {
    for (int n = 0; n < nn; ++n) {
      const size_t ob = static_cast<size_t>(n) * c * plane;
      for (size_t i = 0; i < static_cast<size_t>(ca) * plane; ++i)
        ap->grad[static_cast<size_t>(n) * ca * plane + i] += self->grad[ob + i];
      for (size_t i = 0; i < static_cast<size_t>(cb) * plane; ++i)
        bp->grad[static_cast<size_t>(n) * cb * plane + i] +=
            self->grad[ob + ca * plane + i];
    }
  };
  return out;
}

inline Tensor global_avg_pool(const Tensor& x) {
  using namespace ops_detail;
  Dims4 d = as4d(x, "global_avg_pool");
  const size_t plane = static_cast<size_t>(d.h) * d.w;
  Tensor out = autodiff_detail::make_result(
      d.batched ? std::vector<int>{d.n, d.c} : std::vector<int>{d.c}, {x});
  for (int n = 0; n < d.n; ++n)
    for (int c = 0; c < d.c; ++c) {
      const double* p = x.data().data() + (static_cast<size_t>(n) * d.c + c) * plane;
      double s = 0.0;
      for (size_t i = 0; i < plane; ++i) s += p[i];
      out.data()[static_cast<size_t>(n) * d.c + c] = s / static_cast<double>(plane);
    }
  auto self = out.impl().get();
  auto xp = x.impl();
  out.impl()->backprop = [self, xp, d, plane]() {
    for (int n = 0; n < d.n; ++n)
      for (int c = 0; c < d.c; ++c) {
        const double g = self->grad[static_cast<size_t>(n) * d.c + c] /
                         static_cast<double>(plane);
        double* gp = xp->grad.data() + (static_cast<size_t>(n) * d.c + c) * plane;
        for (size_t i = 0; i < plane; ++i) gp[i] += g;
      }
  };
  return out;
}

// Half-pixel-center bilinear, scale factor 2. Constants are preserved.
inline Tensor bilinear_upsample2x(const Tensor& x) {
  using namespace ops_detail;
  Dims4 d = as4d(x, "bilinear_upsample2x");
  const int oh = 2 * d.h, ow = 2 * d.w;
  Tensor out = autodiff_detail::make_result(shape4(d, d.c, oh, ow), {x});

  struct Tap {
    int a, b;
    double wb;  // weight of b; weight of a is 1-wb
  };
  auto taps = [](int out_len, int in_len) {
    std::vector<Tap> t(out_len);
    for (int i = 0; i < out_len; ++i) {
      double f = (i + 0.5) * 0.5 - 0.5;
      int lo = static_cast<int>(std::floor(f));
      double wb = f - lo;
      t[i].a = std::clamp(lo, 0, in_len - 1);
      t[i].b = std::clamp(lo + 1, 0, in_len - 1);
      t[i].wb = wb;
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(oh, d.h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(ow, d.w));
  for (int n = 0; n < d.n; ++n)
    for (int c = 0; c < d.c; ++c) {
      const double* p = x.data().data() +
                        (static_cast<size_t>(n) * d.c + c) * d.h * d.w;
      double* o = out.data().data() + (static_cast<size_t>(n) * d.c + c) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const Tap& vy = (*ty)[y];
        for (int xx = 0; xx < ow; ++xx) {
          const Tap& vx = (*tx)[xx];
          o[static_cast<size_t>(y) * ow + xx] =
              (1 - vy.wb) * ((1 - vx.wb) * p[vy.a * d.w + vx.a] +
                             vx.wb * p[vy.a * d.w + vx.b]) +
              vy.wb * ((1 - vx.wb) * p[vy.b * d.w + vx.a] +
                       vx.wb * p[vy.b * d.w + vx.b]);
        }
      }
    }
  auto self = out.impl().get();
  auto xp = x.impl();
  out.impl()->backprop = [self, xp, d, oh, ow, ty, tx]() {
    for (int n = 0; n < d.n; ++n)
      for (int c = 0; c < d.c; ++c) {
        double* gp = xp->grad.data() + (static_cast<size_t>(n) * d.c + c) * d.h * d.w;
        const double* g = self->grad.data() +
                          (static_cast<size_t>(n) * d.c + c) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const Tap& vy = (*ty)[y];
          for (int xx = 0; xx < ow; ++xx) {
            const Tap& vx = (*tx)[xx];
            const double go = g[static_cast<size_t>(y) * ow + xx];
            gp[vy.a * d.w + vx.a] += go * (1 - vy.wb) * (1 - vx.wb);
            gp[vy.a * d.w + vx.b] += go * (1 - vy.wb) * vx.wb;
            gp[vy.b * d.w + vx.a] += go * vy.wb * (1 - vx.wb);
            gp[vy.b * d.w + vx.b] += go * vy.wb * vx.wb;
          }
        }
      }
  };
  return out;
}

// Mean over the batch of -log softmax(logits)[label]; max-subtraction
// stabilized. logits: (K) with one label, or (N,K) with N labels.
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  int n, k;
  if (logits.dim() == 2) {
    n = logits.shape()[0];
    k = logits.shape()[1];
  } else if (logits.dim() == 1) {
    n = 1;
    k = logits.shape()[0];
  } else {
    throw ShapeMismatch("softmax_cross_entropy: expected (K) or (N,K)");
  }
  if (k < 2) throw ShapeMismatch("softmax_cross_entropy: K must be >= 2");
  if (static_cast<int>(labels.size()) != n)
    throw ShapeMismatch("softmax_cross_entropy: label count mismatch");
  for (int lab : labels)
    if (lab < 0 || lab >= k) throw LabelOutOfRange("label outside [0,K)");

  Tensor out = autodiff_detail::make_result({1}, {logits});
  auto probs = std::make_shared<std::vector<double>>(logits.size());
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const double* row = logits.data().data() + static_cast<size_t>(b) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j)
      (*probs)[static_cast<size_t>(b) * k + j] = std::exp(row[j] - mx) / denom;
    loss -= (row[labels[b]] - mx) - std::log(denom);
  }
  out.data()[0] = loss / static_cast<double>(n);

  auto self = out.impl().get();
  auto lp = logits.impl();
  out.impl()->backprop = [self, lp, probs, labels, n, k]() {
    const double g = self->grad[0] / static_cast<double>(n);
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < k; ++j) {
        double p = (*probs)[static_cast<size_t>(b) * k + j];
        lp->grad[static_cast<size_t>(b) * k + j] +=
            g * (p - (j == labels[b] ? 1.0 : 0.0));
      }
  };
  return out;
}

inline Tensor softmax_cross_entropy(const Tensor& logits, int label) {
  return softmax_cross_entropy(logits, std::vector<int>{label});
}

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeMismatch("mse_loss: shapes differ");
  Tensor out = autodiff_detail::make_result({1}, {pred, target});
  const size_t n = pred.size();
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double dv = pred.data()[i] - target.data()[i];
    s += dv * dv;
  }
  out.data()[0] = s / static_cast<double>(n);
  auto self = out.impl().get();
  auto pp = pred.impl();
  auto tp = target.impl();
  out.impl()->backprop = [self, pp, tp, n]() {
    const double g = self->grad[0] * 2.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      double dv = pp->data[i] - tp->data[i];
      pp->grad[i] += g * dv;
      tp->grad[i] -= g * dv;
    }
  };
  return out;
}

// Squared error averaged over elements with nonzero mask weight.
// A sample with no present entries contributes zero loss and zero gradient.
inline Tensor masked_mse_loss(const Tensor& pred, const Tensor& target,
                              const std::vector<double>& mask) {
  if (pred.shape() != target.shape()) throw ShapeMismatch("masked_mse_loss: shapes differ");
  if (mask.size() != pred.size()) throw ShapeMismatch("masked_mse_loss: mask size");
  Tensor out = autodiff_detail::make_result({1}, {pred, target});
  const size_t n = pred.size();
  double s = 0.0, cnt = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    double dv = pred.data()[i] - target.data()[i];
    s += mask[i] * dv * dv;
    cnt += mask[i];
  }
  out.data()[0] = cnt > 0.0 ? s / cnt : 0.0;
  auto self = out.impl().get();
  auto pp = pred.impl();
  auto tp = target.impl();
  auto mk = std::make_shared<std::vector<double>>(mask);
  out.impl()->backprop = [self, pp, tp, mk, n, cnt]() {
    if (cnt <= 0.0) return;
    const double g = self->grad[0] * 2.0 / cnt;
    for (size_t i = 0; i < n; ++i) {
      if ((*mk)[i] == 0.0) continue;
      double dv = pp->data[i] - tp->data[i];
      pp->grad[i] += g * (*mk)[i] * dv;
      tp->grad[i] -= g * (*mk)[i] * dv;
    }
  };
  return out;
}

// Forward-only softmax row helper (probabilities for reporting).
inline std::vector<double> softmax_values(const Tensor& logits) {
  std::vector<double> out(logits.size());
  int n = logits.dim() == 2 ? logits.shape()[0] : 1;
  int k = logits.dim() == 2 ? logits.shape()[1] : logits.shape()[0];
  for (int b = 0; b < n; ++b) {
    const double* row = logits.data().data() + static_cast<size_t>(b) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j)
      out[static_cast<size_t>(b) * k + j] = std::exp(row[j] - mx) / denom;
  }
  return out;
}

}  // namespace pe
