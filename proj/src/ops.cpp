// Always use the packed GEMM kernels: small products would otherwise take
// coefficient-based paths whose reductions split by buffer address, which
// makes float results depend on heap layout.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ess/tensor.hpp"

namespace ess::ad {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
Node<T>& parent(Node<T>& out, std::size_t i) {
  return *out.parents[i];
}

// Gradient buffer of parent i, or nullptr when it does not take gradient.
template <class T>
T* grad_of(Node<T>& out, std::size_t i) {
  Node<T>& p = *out.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

// Column buffer for one image: [(c * 9) x (ho * wo)].
template <class T>
void im2col(const T* img, std::size_t c, std::size_t h, std::size_t w, std::size_t stride,
            std::size_t ho, std::size_t wo, T* cols) {
  const std::size_t hw = ho * wo;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* row = cols + ((ch * 9) + ky * 3 + kx) * hw;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - 1;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - 1;
            const bool inside = iy >= 0 && iy < static_cast<long>(h) && ix >= 0 && ix < static_cast<long>(w);
            row[oy * wo + ox] = inside ? img[(ch * h + iy) * w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t stride,
            std::size_t ho, std::size_t wo, T* img) {
  const std::size_t hw = ho * wo;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((ch * 9) + ky * 3 + kx) * hw;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            img[(ch * h + iy) * w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = grad_of(o, k)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    if (T* g = grad_of(o, 0)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (T* g = grad_of(o, 1)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    const auto& av = parent(o, 0).data;
    const auto& bv = parent(o, 1).data;
    if (T* g = grad_of(o, 0)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bv[i];
    }
    if (T* g = grad_of(o, 1)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * av[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& o) {
    if (T* g = grad_of(o, 0)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * factor;
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  return make_result<T>("relu", a.shape(), std::move(out), {a}, [](Node<T>& o) {
    if (T* g = grad_of(o, 0)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        if (o.data[i] > T(0)) g[i] += o.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  MapMat<T>(out.data(), m, n).noalias() =
      CMapMat<T>(a.data().data(), m, k) * CMapMat<T>(b.data().data(), k, n);
  return make_result<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& o) {
    CMapMat<T> go(o.grad.data(), m, n);
    if (T* g = grad_of(o, 0)) {
      MapMat<T>(g, m, k).noalias() += go * CMapMat<T>(parent(o, 1).data.data(), k, n).transpose();
    }
    if (T* g = grad_of(o, 1)) {
      MapMat<T>(g, k, n).noalias() += CMapMat<T>(parent(o, 0).data.data(), m, k).transpose() * go;
    }
  });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require(x.rank() == 2 && weight.rank() == 2 && x.dim(1) == weight.dim(1),
          "linear: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias) {
    require(bias.rank() == 1 && bias.dim(0) == outd,
            "linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  std::vector<T> out(n * outd);
  MapMat<T> y(out.data(), n, outd);
  y.noalias() = CMapMat<T>(x.data().data(), n, in) * CMapMat<T>(weight.data().data(), outd, in).transpose();
  if (has_bias) {
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), outd);
  }
  std::vector<Tensor<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result<T>("linear", {n, outd}, std::move(out), std::move(parents),
                        [n, in, outd, has_bias](Node<T>& o) {
                          CMapMat<T> go(o.grad.data(), n, outd);
                          if (T* g = grad_of(o, 0)) {
                            MapMat<T>(g, n, in).noalias() += go * CMapMat<T>(parent(o, 1).data.data(), outd, in);
                          }
                          if (T* g = grad_of(o, 1)) {
                            MapMat<T>(g, outd, in).noalias() +=
                                go.transpose() * CMapMat<T>(parent(o, 0).data.data(), n, in);
                          }
                          if (has_bias) {
                            if (T* g = grad_of(o, 2)) {
                              for (std::size_t i = 0; i < n; ++i) {
                                const T* row = o.grad.data() + i * outd;
                                for (std::size_t j = 0; j < outd; ++j) g[j] += row[j];
                              }
                            }
                          }
                        });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias, std::size_t stride) {
  require(stride >= 1, "conv2d: stride must be positive");
  require(input.rank() == 3 || input.rank() == 4, "conv2d: input must be [c x h x w] or [n x c x h x w], got " +
                                                      shape_str(input.shape()));
  require(kernels.rank() == 4 && kernels.dim(2) == 3 && kernels.dim(3) == 3,
          "conv2d: kernels must be [c_out x c_in x 3 x 3], got " + shape_str(kernels.shape()));
  const bool batched = input.rank() == 4;
  const std::size_t n = batched ? input.dim(0) : 1;
  const std::size_t c = input.dim(batched ? 1 : 0);
  const std::size_t h = input.dim(batched ? 2 : 1);
  const std::size_t w = input.dim(batched ? 3 : 2);
  const std::size_t co = kernels.dim(0);
  require(kernels.dim(1) == c, "conv2d: kernels " + shape_str(kernels.shape()) + " do not match input " +
                                   shape_str(input.shape()));
  require(h >= 3 && w >= 3, "conv2d: spatial extent must be at least 3x3, got " + shape_str(input.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) {
    require(bias.rank() == 1 && bias.dim(0) == co, "conv2d: bias " + shape_str(bias.shape()) +
                                                       " does not match kernels " + shape_str(kernels.shape()));
  }
  const std::size_t ho = (h - 1) / stride + 1;
  const std::size_t wo = (w - 1) / stride + 1;
  const std::size_t hw = ho * wo;
  const std::size_t kk = c * 9;

  std::vector<T> out(n * co * hw);
  std::vector<T> cols(kk * hw);
  CMapMat<T> kmat(kernels.data().data(), co, kk);
  for (std::size_t b = 0; b < n; ++b) {
    im2col(input.data().data() + b * c * h * w, c, h, w, stride, ho, wo, cols.data());
    MapMat<T> y(out.data() + b * co * hw, co, hw);
    y.noalias() = kmat * CMapMat<T>(cols.data(), kk, hw);
    if (has_bias) {
      y.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.data().data(), co);
    }
  }
  Shape shape = batched ? Shape{n, co, ho, wo} : Shape{co, ho, wo};
  std::vector<Tensor<T>> parents{input, kernels};
  if (has_bias) parents.push_back(bias);
  return make_result<T>(
      "conv2d", std::move(shape), std::move(out), std::move(parents),
      [n, c, h, w, co, ho, wo, hw, kk, stride, has_bias](Node<T>& o) {
        T* gx = grad_of(o, 0);
        T* gk = grad_of(o, 1);
        T* gb = has_bias ? grad_of(o, 2) : nullptr;
        const auto& x = parent(o, 0).data;
        CMapMat<T> kmat(parent(o, 1).data.data(), co, kk);
        std::vector<T> cols(kk * hw);
        std::vector<T> dcols(gx ? kk * hw : 0);
        for (std::size_t b = 0; b < n; ++b) {
          CMapMat<T> go(o.grad.data() + b * co * hw, co, hw);
          if (gk) {
            im2col(x.data() + b * c * h * w, c, h, w, stride, ho, wo, cols.data());
            MapMat<T>(gk, co, kk).noalias() += go * CMapMat<T>(cols.data(), kk, hw).transpose();
          }
          if (gx) {
            MapMat<T>(dcols.data(), kk, hw).noalias() = kmat.transpose() * go;
            col2im(dcols.data(), c, h, w, stride, ho, wo, gx + b * c * h * w);
          }
          if (gb) {
            const T* gob = o.grad.data() + b * co * hw;
            for (std::size_t r = 0; r < co; ++r) {
              T acc = 0;
              for (std::size_t k = 0; k < hw; ++k) acc += gob[r * hw + k];
              gb[r] += acc;
            }
          }
        }
      });
}

template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  require(x.rank() >= 2, "avg_pool2: need at least 2 axes, got " + shape_str(x.shape()));
  const std::size_t r = x.rank();
  const std::size_t h = x.dim(r - 2), w = x.dim(r - 1);
  require(h >= 2 && w >= 2, "avg_pool2: spatial extent too small in " + shape_str(x.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  const std::size_t planes = x.numel() / (h * w);
  Shape shape = x.shape();
  shape[r - 2] = ho;
  shape[r - 1] = wo;
  std::vector<T> out(planes * ho * wo);
  const T* in = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = in + p * h * w;
    T* dst = out.data() + p * ho * wo;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const T* s = src + (2 * y) * w + 2 * xx;
        dst[y * wo + xx] = (s[0] + s[1] + s[w] + s[w + 1]) * T(0.25);
      }
    }
  }
  return make_result<T>("avg_pool2", std::move(shape), std::move(out), {x}, [planes, h, w, ho, wo](Node<T>& o) {
    T* g = grad_of(o, 0);
    if (!g) return;
    for (std::size_t p = 0; p < planes; ++p) {
      T* dst = g + p * h * w;
      const T* src = o.grad.data() + p * ho * wo;
      for (std::size_t y = 0; y < ho; ++y) {
        for (std::size_t xx = 0; xx < wo; ++xx) {
          const T v = src[y * wo + xx] * T(0.25);
          T* d = dst + (2 * y) * w + 2 * xx;
          d[0] += v;
          d[1] += v;
          d[w] += v;
          d[w + 1] += v;
        }
      }
    }
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require(numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& o) {
    if (T* g = grad_of(o, 0)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    require(t == tail && p.rank() == parts[0].rank(),
            "concat: shape " + shape_str(p.shape()) + " incompatible with " + shape_str(parts[0].shape()));
    rows += p.dim(0);
  }
  std::vector<T> out;
  out.reserve(rows * numel(tail));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape = parts[0].shape();
  shape[0] = rows;
  return make_result<T>("concat", std::move(shape), std::move(out), parts, [offsets](Node<T>& o) {
    for (std::size_t k = 0; k < o.parents.size(); ++k) {
      if (T* g = grad_of(o, k)) {
        const std::size_t len = o.parents[k]->data.size();
        for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[offsets[k] + i];
      }
    }
  });
}

template <class T>
Tensor<T> l2_normalize(const Tensor<T>& x) {
  require(x.rank() == 1 || x.rank() == 2, "l2_normalize: expected [d] or [n x d], got " + shape_str(x.shape()));
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* v = x.data().data() + r * d;
    T ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += v[j] * v[j];
    const T norm = std::sqrt(ss);
    if (!(norm > T(1e-12))) throw std::domain_error("l2_normalize: row " + std::to_string(r) + " has near-zero norm");
    norms[r] = norm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = v[j] / norm;
  }
  return make_result<T>("l2_normalize", x.shape(), std::move(out), {x}, [rows, d, norms](Node<T>& o) {
    T* g = grad_of(o, 0);
    if (!g) return;
    // d(v/|v|) applied to upstream u: (u - y (y.u)) / |v|
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = o.data.data() + r * d;
      const T* u = o.grad.data() + r * d;
      T dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * u[j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += (u[j] - y[j] * dot) / norms[r];
    }
  });
}

template <class T>
Tensor<T> log_sum_exp(const Tensor<T>& logits) {
  require(logits.rank() == 1 || logits.rank() == 2,
          "log_sum_exp: expected [n] or [rows x n], got " + shape_str(logits.shape()));
  const std::size_t n = logits.shape().back();
  const std::size_t rows = logits.numel() / n;
  std::vector<T> out(rows);
  std::vector<T> soft(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.data().data() + r * n;
    const T mx = *std::max_element(z, z + n);
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      soft[r * n + j] = std::exp(z[j] - mx);
      s += soft[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) soft[r * n + j] /= s;
    out[r] = mx + std::log(s);
  }
  Shape shape = logits.rank() == 1 ? Shape{1} : Shape{rows};
  return make_result<T>("log_sum_exp", std::move(shape), std::move(out), {logits},
                        [rows, n, soft = std::move(soft)](Node<T>& o) {
                          T* g = grad_of(o, 0);
                          if (!g) return;
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += o.grad[r] * soft[r * n + j];
                          }
                        });
}

template <class T>
Tensor<T> soft_cross_entropy(const Tensor<T>& logits, std::span<const T> targets) {
  require(logits.rank() == 1 || logits.rank() == 2,
          "soft_cross_entropy: expected [n] or [rows x n], got " + shape_str(logits.shape()));
  require(targets.size() == logits.numel(), "soft_cross_entropy: target length " + std::to_string(targets.size()) +
                                                " does not match logits " + shape_str(logits.shape()));
  const std::size_t n = logits.shape().back();
  const std::size_t rows = logits.numel() / n;
  std::vector<T> soft(logits.numel());
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.data().data() + r * n;
    const T* t = targets.data() + r * n;
    const T mx = *std::max_element(z, z + n);
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      soft[r * n + j] = std::exp(z[j] - mx);
      s += soft[r * n + j];
    }
    const T lse = mx + std::log(s);
    T row = 0;
    for (std::size_t j = 0; j < n; ++j) {
      soft[r * n + j] /= s;
      if (t[j] != T(0)) row += t[j] * (lse - z[j]);
    }
    total += row;
  }
  std::vector<T> tgt(targets.begin(), targets.end());
  return make_result<T>("soft_cross_entropy", {1}, {total / static_cast<T>(rows)}, {logits},
                        [rows, n, soft = std::move(soft), tgt = std::move(tgt)](Node<T>& o) {
                          T* g = grad_of(o, 0);
                          if (!g) return;
                          const T up = o.grad[0] / static_cast<T>(rows);
                          for (std::size_t r = 0; r < rows; ++r) {
                            T tsum = 0;
                            for (std::size_t j = 0; j < n; ++j) tsum += tgt[r * n + j];
                            for (std::size_t j = 0; j < n; ++j) {
                              g[r * n + j] += up * (tsum * soft[r * n + j] - tgt[r * n + j]);
                            }
                          }
                        });
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  require(logits.rank() == 1 || logits.rank() == 2,
          "cross_entropy: expected [n] or [rows x n], got " + shape_str(logits.shape()));
  const std::size_t n = logits.shape().back();
  const std::size_t rows = logits.numel() / n;
  require(labels.size() == rows, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                     std::to_string(rows) + " rows");
  std::vector<T> targets(logits.numel(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= n) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) + " outside " +
                              std::to_string(n) + " classes");
    }
    targets[r * n + labels[r]] = T(1);
  }
  return soft_cross_entropy(logits, std::span<const T>(targets));
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label) {
  const std::size_t one[1] = {label};
  return cross_entropy(logits, std::span<const std::size_t>(one));
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return make_result<T>("sum", {1}, {s}, {x}, [](Node<T>& o) {
    if (T* g = grad_of(o, 0)) {
      const std::size_t len = o.parents[0]->data.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[0];
    }
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

#define ESS_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> avg_pool2(const Tensor<T>&);                                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                    \
  template Tensor<T> l2_normalize(const Tensor<T>&);                                           \
  template Tensor<T> log_sum_exp(const Tensor<T>&);                                            \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>);            \
  template Tensor<T> soft_cross_entropy(const Tensor<T>&, std::span<const T>);                 \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);

ESS_INSTANTIATE_OPS(float)
ESS_INSTANTIATE_OPS(double)

#undef ESS_INSTANTIATE_OPS

}  // namespace ess::ad
