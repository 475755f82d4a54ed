#include "seqft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "seqft/errors.hpp"

namespace seqft {

namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Graph::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

std::vector<double>& ensure_grad(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.shape().size() != rank) {
    throw DimensionError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                         " tensor, got " + shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int64_t r = a.dim(0), k = a.dim(1), k2 = b.dim(0), c = b.dim(1);
  if (k != k2) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  Tensor out = Tensor::zeros({r, c}, tracking({&a, &b}));
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (int64_t i = 0; i < r; ++i) {
      for (int64_t l = 0; l < k; ++l) {
        const double ail = pa[i * k + l];
        if (ail == 0.0) continue;
        const double* brow = pb + l * c;
        double* orow = po + i * c;
        for (int64_t j = 0; j < c; ++j) orow[j] += ail * brow[j];
      }
    }
  }
  if (out.requires_grad()) {
    ImplPtr ia = a.impl_ptr(), ib = b.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record("matmul", [ia, ib, io, r, k, c]() {
      if (io->grad.empty()) return;
      const double* go = io->grad.data();
      if (ia->requires_grad) {
        double* ga = ensure_grad(*ia).data();
        const double* pb = ib->data.data();
        for (int64_t i = 0; i < r; ++i) {
          for (int64_t l = 0; l < k; ++l) {
            double acc = 0.0;
            const double* brow = pb + l * c;
            const double* grow = go + i * c;
            for (int64_t j = 0; j < c; ++j) acc += grow[j] * brow[j];
            ga[i * k + l] += acc;
          }
        }
      }
      if (ib->requires_grad) {
        double* gb = ensure_grad(*ib).data();
        const double* pa = ia->data.data();
        for (int64_t i = 0; i < r; ++i) {
          const double* grow = go + i * c;
          for (int64_t l = 0; l < k; ++l) {
            const double ail = pa[i * k + l];
            if (ail == 0.0) continue;
            double* gbrow = gb + l * c;
            for (int64_t j = 0; j < c; ++j) gbrow[j] += ail * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  if (stride < 1) throw ContractError("conv2d stride must be >= 1");
  if (padding < 0) throw ContractError("conv2d padding must be >= 0");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t f = kernel.dim(0), ck = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (ck != c) {
    throw DimensionError("conv2d channel mismatch: input " + shape_to_string(input.shape()) +
                         " vs kernel " + shape_to_string(kernel.shape()));
  }
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw DimensionError("conv2d kernel " + shape_to_string(kernel.shape()) +
                         " larger than padded input " + shape_to_string(input.shape()) +
                         " with padding " + std::to_string(padding));
  }
  const int64_t ho = (h + 2 * padding - kh) / stride + 1;
  const int64_t wo = (w + 2 * padding - kw) / stride + 1;
  Tensor out = Tensor::zeros({n, f, ho, wo}, tracking({&input, &kernel}));
  {
    const double* pin = input.data().data();
    const double* pk = kernel.data().data();
    double* po = out.data().data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t of = 0; of < f; ++of) {
        double* oimg = po + (in * f + of) * ho * wo;
        for (int64_t ic = 0; ic < c; ++ic) {
          const double* iimg = pin + (in * c + ic) * h * w;
          const double* kimg = pk + (of * c + ic) * kh * kw;
          for (int64_t oh = 0; oh < ho; ++oh) {
            const int64_t y0 = oh * stride - padding;
            for (int64_t i = 0; i < kh; ++i) {
              const int64_t y = y0 + i;
              if (y < 0 || y >= h) continue;
              const double* irow = iimg + y * w;
              const double* krow = kimg + i * kw;
              double* orow = oimg + oh * wo;
              for (int64_t ow = 0; ow < wo; ++ow) {
                const int64_t x0 = ow * stride - padding;
                double acc = 0.0;
                for (int64_t j = 0; j < kw; ++j) {
                  const int64_t x = x0 + j;
                  if (x < 0 || x >= w) continue;
                  acc += irow[x] * krow[j];
                }
                orow[ow] += acc;
              }
            }
          }
        }
      }
    }
  }
  if (out.requires_grad()) {
    ImplPtr ii = input.impl_ptr(), ik = kernel.impl_ptr(), io = out.impl_ptr();
    const int st = stride, pd = padding;
    Graph::active()->record("conv2d", [ii, ik, io, st, pd, n, c, h, w, f, kh, kw, ho, wo]() {
      if (io->grad.empty()) return;
      const double* go = io->grad.data();
      const bool need_din = ii->requires_grad;
      const bool need_dker = ik->requires_grad;
      if (!need_din && !need_dker) return;
      double* din = need_din ? ensure_grad(*ii).data() : nullptr;
      double* dker = need_dker ? ensure_grad(*ik).data() : nullptr;
      const double* pin = ii->data.data();
      const double* pk = ik->data.data();
      for (int64_t in = 0; in < n; ++in) {
        for (int64_t of = 0; of < f; ++of) {
          const double* gimg = go + (in * f + of) * ho * wo;
          for (int64_t ic = 0; ic < c; ++ic) {
            const double* iimg = pin + (in * c + ic) * h * w;
            const double* kimg = pk + (of * c + ic) * kh * kw;
            double* dimg = need_din ? din + (in * c + ic) * h * w : nullptr;
            double* dkimg = need_dker ? dker + (of * c + ic) * kh * kw : nullptr;
            for (int64_t oh = 0; oh < ho; ++oh) {
              const int64_t y0 = oh * st - pd;
              for (int64_t ow = 0; ow < wo; ++ow) {
                const double g = gimg[oh * wo + ow];
                if (g == 0.0) continue;
                const int64_t x0 = ow * st - pd;
                for (int64_t i = 0; i < kh; ++i) {
                  const int64_t y = y0 + i;
                  if (y < 0 || y >= h) continue;
                  for (int64_t j = 0; j < kw; ++j) {
                    const int64_t x = x0 + j;
                    if (x < 0 || x >= w) continue;
                    if (need_dker) dkimg[i * kw + j] += g * iimg[y * w + x];
                    if (need_din) dimg[y * w + x] += g * kimg[i * kw + j];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), tracking({&x}));
  const double* px = x.data().data();
  double* po = out.data().data();
  const std::size_t count = x.data().size();
  for (std::size_t i = 0; i < count; ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
  if (out.requires_grad()) {
    ImplPtr ix = x.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record("relu", [ix, io, count]() {
      if (io->grad.empty() || !ix->requires_grad) return;
      double* gx = ensure_grad(*ix).data();
      const double* go = io->grad.data();
      const double* px = ix->data.data();
      for (std::size_t i = 0; i < count; ++i) {
        if (px[i] > 0.0) gx[i] += go[i];
      }
    });
  }
  return out;
}

Tensor avg_pool2d(const Tensor& x, int window, int stride) {
  require_rank(x, 4, "avg_pool2d");
  if (window < 1 || stride < 1) throw ContractError("avg_pool2d window and stride must be >= 1");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window > h || window > w) {
    throw DimensionError("avg_pool2d window " + std::to_string(window) + " larger than input " +
                         shape_to_string(x.shape()));
  }
  const int64_t ho = (h - window) / stride + 1;
  const int64_t wo = (w - window) / stride + 1;
  Tensor out = Tensor::zeros({n, c, ho, wo}, tracking({&x}));
  const double inv = 1.0 / (static_cast<double>(window) * window);
  {
    const double* px = x.data().data();
    double* po = out.data().data();
    for (int64_t img = 0; img < n * c; ++img) {
      const double* iimg = px + img * h * w;
      double* oimg = po + img * ho * wo;
      for (int64_t oh = 0; oh < ho; ++oh) {
        for (int64_t ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          for (int i = 0; i < window; ++i) {
            const double* irow = iimg + (oh * stride + i) * w + ow * stride;
            for (int j = 0; j < window; ++j) acc += irow[j];
          }
          oimg[oh * wo + ow] = acc * inv;
        }
      }
    }
  }
  if (out.requires_grad()) {
    ImplPtr ix = x.impl_ptr(), io = out.impl_ptr();
    const int win = window, st = stride;
    Graph::active()->record("avg_pool2d", [ix, io, win, st, n, c, h, w, ho, wo, inv]() {
      if (io->grad.empty() || !ix->requires_grad) return;
      double* gx = ensure_grad(*ix).data();
      const double* go = io->grad.data();
      for (int64_t img = 0; img < n * c; ++img) {
        double* gimg = gx + img * h * w;
        const double* goimg = go + img * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          for (int64_t ow = 0; ow < wo; ++ow) {
            const double g = goimg[oh * wo + ow] * inv;
            if (g == 0.0) continue;
            for (int i = 0; i < win; ++i) {
              double* grow = gimg + (oh * st + i) * w + ow * st;
              for (int j = 0; j < win; ++j) grow[j] += g;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out = Tensor::zeros({n, c}, tracking({&x}));
  const double inv = 1.0 / (static_cast<double>(h) * w);
  {
    const double* px = x.data().data();
    double* po = out.data().data();
    for (int64_t img = 0; img < n * c; ++img) {
      double acc = 0.0;
      const double* iimg = px + img * h * w;
      for (int64_t i = 0; i < h * w; ++i) acc += iimg[i];
      po[img] = acc * inv;
    }
  }
  if (out.requires_grad()) {
    ImplPtr ix = x.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record("global_avg_pool", [ix, io, n, c, h, w, inv]() {
      if (io->grad.empty() || !ix->requires_grad) return;
      double* gx = ensure_grad(*ix).data();
      const double* go = io->grad.data();
      for (int64_t img = 0; img < n * c; ++img) {
        const double g = go[img] * inv;
        double* gimg = gx + img * h * w;
        for (int64_t i = 0; i < h * w; ++i) gimg[i] += g;
      }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  const int64_t n = a.dim(0), ca = a.dim(1), h = a.dim(2), w = a.dim(3);
  const int64_t cb = b.dim(1);
  if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w) {
    throw DimensionError("concat_channels non-channel dims disagree: " +
                         shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor out = Tensor::zeros({n, ca + cb, h, w}, tracking({&a, &b}));
  const int64_t plane = h * w;
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (int64_t in = 0; in < n; ++in) {
      std::copy_n(pa + in * ca * plane, ca * plane, po + in * (ca + cb) * plane);
      std::copy_n(pb + in * cb * plane, cb * plane, po + (in * (ca + cb) + ca) * plane);
    }
  }
  if (out.requires_grad()) {
    ImplPtr ia = a.impl_ptr(), ib = b.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record("concat_channels", [ia, ib, io, n, ca, cb, plane]() {
      if (io->grad.empty()) return;
      const double* go = io->grad.data();
      if (ia->requires_grad) {
        double* ga = ensure_grad(*ia).data();
        for (int64_t in = 0; in < n; ++in) {
          const double* src = go + in * (ca + cb) * plane;
          double* dst = ga + in * ca * plane;
          for (int64_t i = 0; i < ca * plane; ++i) dst[i] += src[i];
        }
      }
      if (ib->requires_grad) {
        double* gb = ensure_grad(*ib).data();
        for (int64_t in = 0; in < n; ++in) {
          const double* src = go + (in * (ca + cb) + ca) * plane;
          double* dst = gb + in * cb * plane;
          for (int64_t i = 0; i < cb * plane; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, double momentum, double eps) {
  require_rank(x, 4, "batch_norm");
  require_rank(gamma, 1, "batch_norm");
  require_rank(beta, 1, "batch_norm");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.dim(0) != c || beta.dim(0) != c ||
      static_cast<int64_t>(running_mean.size()) != c ||
      static_cast<int64_t>(running_var.size()) != c) {
    throw DimensionError("batch_norm parameter sizes disagree with " + std::to_string(c) +
                         " channels");
  }
  const int64_t plane = h * w;
  const int64_t m = n * plane;  // samples per channel
  Tensor out = Tensor::zeros(x.shape(), tracking({&x, &gamma, &beta}));

  std::vector<double> mean(c), inv_std(c);
  if (training) {
    for (int64_t ic = 0; ic < c; ++ic) {
      double acc = 0.0;
      const double* px = x.data().data();
      for (int64_t in = 0; in < n; ++in) {
        const double* img = px + (in * c + ic) * plane;
        for (int64_t i = 0; i < plane; ++i) acc += img[i];
      }
      const double mu = acc / static_cast<double>(m);
      double var_acc = 0.0;
      for (int64_t in = 0; in < n; ++in) {
        const double* img = px + (in * c + ic) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = img[i] - mu;
          var_acc += d * d;
        }
      }
      const double var = var_acc / static_cast<double>(m);  // biased
      mean[ic] = mu;
      inv_std[ic] = 1.0 / std::sqrt(var + eps);
      running_mean[ic] = momentum * running_mean[ic] + (1.0 - momentum) * mu;
      running_var[ic] = momentum * running_var[ic] + (1.0 - momentum) * var;
    }
  } else {
    for (int64_t ic = 0; ic < c; ++ic) {
      mean[ic] = running_mean[ic];
      inv_std[ic] = 1.0 / std::sqrt(running_var[ic] + eps);
    }
  }

  {
    const double* px = x.data().data();
    const double* pg = gamma.data().data();
    const double* pb = beta.data().data();
    double* po = out.data().data();
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t ic = 0; ic < c; ++ic) {
        const double mu = mean[ic], istd = inv_std[ic], g = pg[ic], b = pb[ic];
        const double* img = px + (in * c + ic) * plane;
        double* oimg = po + (in * c + ic) * plane;
        for (int64_t i = 0; i < plane; ++i) oimg[i] = g * (img[i] - mu) * istd + b;
      }
    }
  }

  if (out.requires_grad()) {
    ImplPtr ix = x.impl_ptr(), ig = gamma.impl_ptr(), ib = beta.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record(
        "batch_norm", [ix, ig, ib, io, mean, inv_std, training, n, c, plane, m]() {
          if (io->grad.empty()) return;
          const double* go = io->grad.data();
          const double* px = ix->data.data();
          const double* pg = ig->data.data();
          double* gx = ix->requires_grad ? ensure_grad(*ix).data() : nullptr;
          double* gg = ig->requires_grad ? ensure_grad(*ig).data() : nullptr;
          double* gb = ib->requires_grad ? ensure_grad(*ib).data() : nullptr;
          for (int64_t ic = 0; ic < c; ++ic) {
            const double mu = mean[ic], istd = inv_std[ic];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int64_t in = 0; in < n; ++in) {
              const std::size_t base = static_cast<std::size_t>((in * c + ic) * plane);
              for (int64_t i = 0; i < plane; ++i) {
                const double dy = go[base + i];
                sum_dy += dy;
                sum_dy_xhat += dy * (px[base + i] - mu) * istd;
              }
            }
            if (gg) gg[ic] += sum_dy_xhat;
            if (gb) gb[ic] += sum_dy;
            if (gx) {
              const double g = pg[ic];
              if (training) {
                const double inv_m = 1.0 / static_cast<double>(m);
                for (int64_t in = 0; in < n; ++in) {
                  const std::size_t base = static_cast<std::size_t>((in * c + ic) * plane);
                  for (int64_t i = 0; i < plane; ++i) {
                    const double xhat = (px[base + i] - mu) * istd;
                    gx[base + i] +=
                        g * istd * (go[base + i] - inv_m * (sum_dy + xhat * sum_dy_xhat));
                  }
                }
              } else {
                for (int64_t in = 0; in < n; ++in) {
                  const std::size_t base = static_cast<std::size_t>((in * c + ic) * plane);
                  for (int64_t i = 0; i < plane; ++i) gx[base + i] += g * istd * go[base + i];
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const int64_t n = x.dim(0), k = x.dim(1);
  Tensor out = Tensor::zeros(x.shape(), tracking({&x}));
  {
    const double* px = x.data().data();
    double* po = out.data().data();
    for (int64_t i = 0; i < n; ++i) {
      const double* row = px + i * k;
      double* orow = po + i * k;
      const double mx = *std::max_element(row, row + k);
      double lse = 0.0;
      for (int64_t j = 0; j < k; ++j) lse += std::exp(row[j] - mx);
      lse = mx + std::log(lse);
      for (int64_t j = 0; j < k; ++j) orow[j] = std::exp(row[j] - lse);
    }
  }
  if (out.requires_grad()) {
    ImplPtr ix = x.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record("softmax_rows", [ix, io, n, k]() {
      if (io->grad.empty() || !ix->requires_grad) return;
      double* gx = ensure_grad(*ix).data();
      const double* go = io->grad.data();
      const double* py = io->data.data();
      for (int64_t i = 0; i < n; ++i) {
        const double* yrow = py + i * k;
        const double* grow = go + i * k;
        double dot = 0.0;
        for (int64_t j = 0; j < k; ++j) dot += grow[j] * yrow[j];
        double* gxrow = gx + i * k;
        for (int64_t j = 0; j < k; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
      }
    });
  }
  return out;
}

Tensor add_bias_rows(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias_rows");
  require_rank(bias, 1, "add_bias_rows");
  const int64_t n = x.dim(0), k = x.dim(1);
  if (bias.dim(0) != k) {
    throw DimensionError("add_bias_rows bias " + shape_to_string(bias.shape()) +
                         " does not match rows of " + shape_to_string(x.shape()));
  }
  Tensor out = Tensor::zeros(x.shape(), tracking({&x, &bias}));
  {
    const double* px = x.data().data();
    const double* pb = bias.data().data();
    double* po = out.data().data();
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < k; ++j) po[i * k + j] = px[i * k + j] + pb[j];
    }
  }
  if (out.requires_grad()) {
    ImplPtr ix = x.impl_ptr(), ib = bias.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record("add_bias_rows", [ix, ib, io, n, k]() {
      if (io->grad.empty()) return;
      const double* go = io->grad.data();
      if (ix->requires_grad) {
        double* gx = ensure_grad(*ix).data();
        for (int64_t i = 0; i < n * k; ++i) gx[i] += go[i];
      }
      if (ib->requires_grad) {
        double* gb = ensure_grad(*ib).data();
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < k; ++j) gb[j] += go[i * k + j];
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::zeros({1}, tracking({&x}));
  out.data()[0] = acc;
  if (out.requires_grad()) {
    ImplPtr ix = x.impl_ptr(), io = out.impl_ptr();
    Graph::active()->record("sum", [ix, io]() {
      if (io->grad.empty() || !ix->requires_grad) return;
      double* gx = ensure_grad(*ix).data();
      const double g = io->grad[0];
      for (std::size_t i = 0; i < ix->data.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

}  // namespace seqft
