#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sgs/parallel.hpp"
#include "sgs/tensor.hpp"

namespace sgs {

namespace detail {

template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> data,
                  std::vector<Tensor<T>> parents,
                  std::function<void(typename Tensor<T>::Node&)> backward) {
  bool needs_grad = false;
  if (NoGradGuard::grad_enabled()) {
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) {
        needs_grad = true;
        break;
      }
    }
  }
  Tensor<T> out = Tensor<T>::from_data(std::move(shape), std::move(data));
  if (needs_grad) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backward = std::move(backward);
  }
  return out;
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

template <class T>
std::int64_t spatial_size(const Tensor<T>& t) {
  std::int64_t m = 1;
  for (int i = 2; i < t.rank(); ++i) m *= t.dim(i);
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (strict same-shape; broadcasting is explicit below).
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check(a.shape() == b.shape(),
                "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  std::vector<T> out(a.vec());
  const T* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  auto ah = a, bh = b;
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b},
      [ah, bh](typename Tensor<T>::Node& n) mutable {
        const T* g = n.grad.data();
        if (ah.requires_grad()) {
          T* da = ah.grad();
          for (std::int64_t i = 0; i < n.size(); ++i) da[i] += g[i];
        }
        if (bh.requires_grad()) {
          T* db = bh.grad();
          for (std::int64_t i = 0; i < n.size(); ++i) db[i] += g[i];
        }
      });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check(a.shape() == b.shape(),
                "sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  std::vector<T> out(a.vec());
  const T* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
  auto ah = a, bh = b;
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b},
      [ah, bh](typename Tensor<T>::Node& n) mutable {
        const T* g = n.grad.data();
        if (ah.requires_grad()) {
          T* da = ah.grad();
          for (std::int64_t i = 0; i < n.size(); ++i) da[i] += g[i];
        }
        if (bh.requires_grad()) {
          T* db = bh.grad();
          for (std::int64_t i = 0; i < n.size(); ++i) db[i] -= g[i];
        }
      });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check(a.shape() == b.shape(),
                "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  std::vector<T> out(a.vec());
  const T* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  auto ah = a, bh = b;
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b},
      [ah, bh](typename Tensor<T>::Node& n) mutable {
        const T* g = n.grad.data();
        if (ah.requires_grad()) {
          T* da = ah.grad();
          const T* vb = bh.data();
          for (std::int64_t i = 0; i < n.size(); ++i) da[i] += g[i] * vb[i];
        }
        if (bh.requires_grad()) {
          T* db = bh.grad();
          const T* va = ah.data();
          for (std::int64_t i = 0; i < n.size(); ++i) db[i] += g[i] * va[i];
        }
      });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v *= c;
  auto ah = a;
  return detail::make_op<T>(a.shape(), std::move(out), {a},
                            [ah, c](typename Tensor<T>::Node& n) mutable {
                              if (!ah.requires_grad()) return;
                              T* da = ah.grad();
                              const T* g = n.grad.data();
                              for (std::int64_t i = 0; i < n.size(); ++i)
                                da[i] += g[i] * c;
                            });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v += c;
  auto ah = a;
  return detail::make_op<T>(a.shape(), std::move(out), {a},
                            [ah](typename Tensor<T>::Node& n) mutable {
                              if (!ah.requires_grad()) return;
                              T* da = ah.grad();
                              const T* g = n.grad.data();
                              for (std::int64_t i = 0; i < n.size(); ++i)
                                da[i] += g[i];
                            });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

template <class T>
Tensor<T> abs_val(const Tensor<T>& a) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v = std::abs(v);
  auto ah = a;
  return detail::make_op<T>(
      a.shape(), std::move(out), {a},
      [ah](typename Tensor<T>::Node& n) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T* x = ah.data();
        const T* g = n.grad.data();
        // subgradient 0 at x == 0
        for (std::int64_t i = 0; i < n.size(); ++i) {
          da[i] += x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0));
        }
      });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  detail::check(slope >= T(0) && slope < T(1),
                "leaky_relu: slope must be in [0,1)");
  std::vector<T> out(a.vec());
  for (auto& v : out) v = v > T(0) ? v : slope * v;
  auto ah = a;
  return detail::make_op<T>(
      a.shape(), std::move(out), {a},
      [ah, slope](typename Tensor<T>::Node& n) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T* x = ah.data();
        const T* g = n.grad.data();
        for (std::int64_t i = 0; i < n.size(); ++i) {
          da[i] += x[i] > T(0) ? g[i] : slope * g[i];
        }
      });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.vec());
  for (auto& v : out) {
    if (v >= T(0)) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  auto ah = a;
  return detail::make_op<T>(
      a.shape(), std::move(out), {a},
      [ah](typename Tensor<T>::Node& n) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T* y = n.data.data();
        const T* g = n.grad.data();
        for (std::int64_t i = 0; i < n.size(); ++i) {
          da[i] += g[i] * y[i] * (T(1) - y[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a.data()[i]);
  auto ah = a;
  return detail::make_op<T>(
      {1}, {static_cast<T>(acc)}, {a},
      [ah](typename Tensor<T>::Node& n) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T g = n.grad[0];
        for (std::int64_t i = 0; i < ah.size(); ++i) da[i] += g;
      });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a.data()[i]);
  const std::int64_t m = a.size();
  auto ah = a;
  return detail::make_op<T>(
      {1}, {static_cast<T>(acc / static_cast<double>(m))}, {a},
      [ah, m](typename Tensor<T>::Node& n) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T g = n.grad[0] / static_cast<T>(m);
        for (std::int64_t i = 0; i < ah.size(); ++i) da[i] += g;
      });
}

// Per-instance mean over everything but the leading axis: [N,...] -> [N].
template <class T>
Tensor<T> instance_mean(const Tensor<T>& a) {
  detail::check(a.rank() >= 2, "instance_mean: rank must be >= 2");
  const std::int64_t n_inst = a.dim(0);
  const std::int64_t m = a.size() / n_inst;
  std::vector<T> out(static_cast<std::size_t>(n_inst));
  for (std::int64_t i = 0; i < n_inst; ++i) {
    double acc = 0.0;
    const T* p = a.data() + i * m;
    for (std::int64_t j = 0; j < m; ++j) acc += static_cast<double>(p[j]);
    out[static_cast<std::size_t>(i)] = static_cast<T>(acc / static_cast<double>(m));
  }
  auto ah = a;
  return detail::make_op<T>(
      {n_inst}, std::move(out), {a},
      [ah, n_inst, m](typename Tensor<T>::Node& n) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        for (std::int64_t i = 0; i < n_inst; ++i) {
          const T g = n.grad[static_cast<std::size_t>(i)] / static_cast<T>(m);
          T* row = da + i * m;
          for (std::int64_t j = 0; j < m; ++j) row[j] += g;
        }
      });
}

// ---------------------------------------------------------------------------
// Shape plumbing.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> flatten(const Tensor<T>& a) {
  detail::check(a.rank() >= 2, "flatten: rank must be >= 2");
  const std::int64_t n = a.dim(0);
  const std::int64_t rest = a.size() / n;
  std::vector<T> out(a.vec());
  auto ah = a;
  return detail::make_op<T>(
      {n, rest}, std::move(out), {a},
      [ah](typename Tensor<T>::Node& n_) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T* g = n_.grad.data();
        for (std::int64_t i = 0; i < n_.size(); ++i) da[i] += g[i];
      });
}

// Channel-axis concatenation of [N,Ci,spatial...] tensors with identical
// instance and spatial extents.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  detail::check(!parts.empty(), "concat: no inputs");
  const auto& first = parts.front();
  detail::check(first.rank() >= 3, "concat: rank must be >= 3");
  const std::int64_t n_inst = first.dim(0);
  const std::int64_t sp = detail::spatial_size(first);
  std::int64_t c_total = 0;
  for (const auto& p : parts) {
    detail::check(p.rank() == first.rank() && p.dim(0) == n_inst &&
                      detail::spatial_size(p) == sp,
                  "concat: incompatible shapes " + shape_str(first.shape()) +
                      " vs " + shape_str(p.shape()));
    for (int d = 2; d < p.rank(); ++d) {
      detail::check(p.dim(d) == first.dim(d), "concat: spatial mismatch");
    }
    c_total += p.dim(1);
  }
  Shape shape = first.shape();
  shape[1] = c_total;
  std::vector<T> out(static_cast<std::size_t>(n_inst * c_total * sp));
  std::int64_t c_off = 0;
  for (const auto& p : parts) {
    const std::int64_t c = p.dim(1);
    for (std::int64_t i = 0; i < n_inst; ++i) {
      const T* src = p.data() + i * c * sp;
      T* dst = out.data() + (i * c_total + c_off) * sp;
      std::copy(src, src + c * sp, dst);
    }
    c_off += c;
  }
  auto parents = parts;
  return detail::make_op<T>(
      std::move(shape), std::move(out), parts,
      [parents, n_inst, sp, c_total](typename Tensor<T>::Node& n) mutable {
        const T* g = n.grad.data();
        std::int64_t c_off = 0;
        for (auto& p : parents) {
          const std::int64_t c = p.dim(1);
          if (p.requires_grad()) {
            T* dp = p.grad();
            for (std::int64_t i = 0; i < n_inst; ++i) {
              const T* src = g + (i * c_total + c_off) * sp;
              T* dst = dp + i * c * sp;
              for (std::int64_t j = 0; j < c * sp; ++j) dst[j] += src[j];
            }
          }
          c_off += c;
        }
      });
}

// Single channel of a [N,C,spatial...] tensor as [N,1,spatial...].
template <class T>
Tensor<T> select_channel(const Tensor<T>& a, std::int64_t ch) {
  detail::check(a.rank() >= 3, "select_channel: rank must be >= 3");
  const std::int64_t n = a.dim(0), c = a.dim(1);
  detail::check(ch >= 0 && ch < c, "select_channel: index out of range");
  const std::int64_t sp = detail::spatial_size(a);
  Shape shape = a.shape();
  shape[1] = 1;
  std::vector<T> out(static_cast<std::size_t>(n * sp));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* src = a.data() + (i * c + ch) * sp;
    std::copy(src, src + sp, out.data() + i * sp);
  }
  auto ah = a;
  return detail::make_op<T>(
      std::move(shape), std::move(out), {a},
      [ah, ch, n, c, sp](typename Tensor<T>::Node& nd) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T* g = nd.grad.data();
        for (std::int64_t i = 0; i < n; ++i) {
          T* dst = da + (i * c + ch) * sp;
          const T* src = g + i * sp;
          for (std::int64_t j = 0; j < sp; ++j) dst[j] += src[j];
        }
      });
}

// Column slice of a [N,F] tensor: columns [start, start+count).
template <class T>
Tensor<T> columns(const Tensor<T>& a, std::int64_t start, std::int64_t count) {
  detail::check(a.rank() == 2, "columns: expects rank-2 input");
  const std::int64_t n = a.dim(0), f = a.dim(1);
  detail::check(start >= 0 && count > 0 && start + count <= f,
                "columns: slice out of range");
  std::vector<T> out(static_cast<std::size_t>(n * count));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* src = a.data() + i * f + start;
    std::copy(src, src + count, out.data() + i * count);
  }
  auto ah = a;
  return detail::make_op<T>(
      {n, count}, std::move(out), {a},
      [ah, start, count, f, n](typename Tensor<T>::Node& nd) mutable {
        if (!ah.requires_grad()) return;
        T* da = ah.grad();
        const T* g = nd.grad.data();
        for (std::int64_t i = 0; i < n; ++i) {
          T* dst = da + i * f + start;
          const T* src = g + i * count;
          for (std::int64_t j = 0; j < count; ++j) dst[j] += src[j];
        }
      });
}

// ---------------------------------------------------------------------------
// Broadcasts of per-channel / per-instance vectors over spatial dims.
// ---------------------------------------------------------------------------

// [N,C] -> [N,C,spatial...] replicating over the spatial extents.
template <class T>
Tensor<T> broadcast_nc(const Tensor<T>& v, const Shape& like) {
  detail::check(v.rank() == 2, "broadcast_nc: expects [N,C]");
  detail::check(like.size() >= 3 && like[0] == v.dim(0) && like[1] == v.dim(1),
                "broadcast_nc: target " + shape_str(like) +
                    " incompatible with " + shape_str(v.shape()));
  std::int64_t sp = 1;
  for (std::size_t i = 2; i < like.size(); ++i) sp *= like[i];
  const std::int64_t nc = v.size();
  std::vector<T> out(static_cast<std::size_t>(nc * sp));
  for (std::int64_t i = 0; i < nc; ++i) {
    std::fill(out.begin() + i * sp, out.begin() + (i + 1) * sp, v.data()[i]);
  }
  auto vh = v;
  return detail::make_op<T>(
      like, std::move(out), {v},
      [vh, nc, sp](typename Tensor<T>::Node& n) mutable {
        if (!vh.requires_grad()) return;
        T* dv = vh.grad();
        const T* g = n.grad.data();
        for (std::int64_t i = 0; i < nc; ++i) {
          double acc = 0.0;
          const T* row = g + i * sp;
          for (std::int64_t j = 0; j < sp; ++j) acc += static_cast<double>(row[j]);
          dv[i] += static_cast<T>(acc);
        }
      });
}

// [C] -> [N,C,spatial...].
template <class T>
Tensor<T> broadcast_c(const Tensor<T>& v, const Shape& like) {
  detail::check(v.rank() == 1, "broadcast_c: expects [C]");
  detail::check(like.size() >= 3 && like[1] == v.dim(0),
                "broadcast_c: target " + shape_str(like) +
                    " incompatible with " + shape_str(v.shape()));
  const std::int64_t n_inst = like[0];
  const std::int64_t c = like[1];
  std::int64_t sp = 1;
  for (std::size_t i = 2; i < like.size(); ++i) sp *= like[i];
  std::vector<T> out(static_cast<std::size_t>(n_inst * c * sp));
  for (std::int64_t i = 0; i < n_inst; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      std::fill(out.begin() + (i * c + ch) * sp, out.begin() + (i * c + ch + 1) * sp,
                v.data()[ch]);
    }
  }
  auto vh = v;
  return detail::make_op<T>(
      like, std::move(out), {v},
      [vh, n_inst, c, sp](typename Tensor<T>::Node& n) mutable {
        if (!vh.requires_grad()) return;
        T* dv = vh.grad();
        const T* g = n.grad.data();
        for (std::int64_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < n_inst; ++i) {
            const T* row = g + (i * c + ch) * sp;
            for (std::int64_t j = 0; j < sp; ++j) acc += static_cast<double>(row[j]);
          }
          dv[ch] += static_cast<T>(acc);
        }
      });
}

// Single-channel field replicated across C channels: [N,1,sp] -> [N,C,sp].
template <class T>
Tensor<T> broadcast_channel(const Tensor<T>& z, std::int64_t c) {
  detail::check(z.rank() >= 3 && z.dim(1) == 1,
                "broadcast_channel: expects [N,1,spatial...]");
  const std::int64_t n_inst = z.dim(0);
  const std::int64_t sp = detail::spatial_size(z);
  Shape shape = z.shape();
  shape[1] = c;
  std::vector<T> out(static_cast<std::size_t>(n_inst * c * sp));
  for (std::int64_t i = 0; i < n_inst; ++i) {
    const T* src = z.data() + i * sp;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      std::copy(src, src + sp, out.data() + (i * c + ch) * sp);
    }
  }
  auto zh = z;
  return detail::make_op<T>(
      std::move(shape), std::move(out), {z},
      [zh, n_inst, c, sp](typename Tensor<T>::Node& n) mutable {
        if (!zh.requires_grad()) return;
        T* dz = zh.grad();
        const T* g = n.grad.data();
        for (std::int64_t i = 0; i < n_inst; ++i) {
          T* dst = dz + i * sp;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* src = g + (i * c + ch) * sp;
            for (std::int64_t j = 0; j < sp; ++j) dst[j] += src[j];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Linear layer: x[N,F] * w[F,O] + b[O].
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::check(x.rank() == 2 && w.rank() == 2 && b.rank() == 1,
                "linear: expects x[N,F], w[F,O], b[O]");
  const std::int64_t n = x.dim(0), f = x.dim(1), o = w.dim(1);
  detail::check(w.dim(0) == f, "linear: weight rows " + std::to_string(w.dim(0)) +
                                   " do not match input features " +
                                   std::to_string(f));
  detail::check(b.dim(0) == o, "linear: bias length mismatch");
  std::vector<T> out(static_cast<std::size_t>(n * o));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* xi = x.data() + i * f;
    T* oi = out.data() + i * o;
    for (std::int64_t j = 0; j < o; ++j) oi[j] = b.data()[j];
    for (std::int64_t k = 0; k < f; ++k) {
      const T xv = xi[k];
      const T* __restrict wrow = w.data() + k * o;
      T* __restrict orow = oi;
      for (std::int64_t j = 0; j < o; ++j) orow[j] += xv * wrow[j];
    }
  }
  auto xh = x, wh = w, bh = b;
  return detail::make_op<T>(
      {n, o}, std::move(out), {x, w, b},
      [xh, wh, bh, n, f, o](typename Tensor<T>::Node& nd) mutable {
        const T* g = nd.grad.data();
        if (bh.requires_grad()) {
          T* db = bh.grad();
          for (std::int64_t i = 0; i < n; ++i) {
            const T* gi = g + i * o;
            for (std::int64_t j = 0; j < o; ++j) db[j] += gi[j];
          }
        }
        if (wh.requires_grad()) {
          T* dw = wh.grad();
          for (std::int64_t i = 0; i < n; ++i) {
            const T* xi = xh.data() + i * f;
            const T* gi = g + i * o;
            for (std::int64_t k = 0; k < f; ++k) {
              const T xv = xi[k];
              T* __restrict drow = dw + k * o;
              for (std::int64_t j = 0; j < o; ++j) drow[j] += xv * gi[j];
            }
          }
        }
        if (xh.requires_grad()) {
          T* dx = xh.grad();
          for (std::int64_t i = 0; i < n; ++i) {
            T* dxi = dx + i * f;
            const T* gi = g + i * o;
            for (std::int64_t k = 0; k < f; ++k) {
              const T* __restrict wrow = wh.data() + k * o;
              double acc = 0.0;
              for (std::int64_t j = 0; j < o; ++j)
                acc += static_cast<double>(wrow[j]) * static_cast<double>(gi[j]);
              dxi[k] += static_cast<T>(acc);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// conv3d. Input [N,Ci,D,H,W], weight [Co,Ci,kd,kh,kw], bias [Co].
// Supports per-axis asymmetric padding; the public entry point takes the
// usual symmetric integer padding.
// ---------------------------------------------------------------------------

struct ConvPad {
  std::array<std::int64_t, 3> lo{0, 0, 0};
  std::array<std::int64_t, 3> hi{0, 0, 0};
};

namespace detail {

template <class T>
struct ConvDims {
  std::int64_t n, ci, d, h, w;
  std::int64_t co, kd, kh, kw;
  std::int64_t pd, ph, pw;     // padded extents
  std::int64_t od, oh, ow;     // output extents
  std::int64_t stride;
  ConvPad pad;
};

template <class T>
ConvDims<T> conv_dims(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>& b, std::int64_t stride,
                      const ConvPad& pad) {
  check(x.rank() == 5, "conv3d: input must be [N,C,D,H,W], got " +
                           shape_str(x.shape()));
  check(w.rank() == 5, "conv3d: weight must be [Co,Ci,kd,kh,kw], got " +
                           shape_str(w.shape()));
  check(b.rank() == 1 && b.dim(0) == w.dim(0), "conv3d: bias length mismatch");
  check(stride >= 1, "conv3d: stride must be >= 1");
  check(x.dim(1) == w.dim(1),
        "conv3d: input channels " + std::to_string(x.dim(1)) +
            " do not match weight channels " + std::to_string(w.dim(1)));
  ConvDims<T> c;
  c.n = x.dim(0);
  c.ci = x.dim(1);
  c.d = x.dim(2);
  c.h = x.dim(3);
  c.w = x.dim(4);
  c.co = w.dim(0);
  c.kd = w.dim(2);
  c.kh = w.dim(3);
  c.kw = w.dim(4);
  c.stride = stride;
  c.pad = pad;
  c.pd = c.d + pad.lo[0] + pad.hi[0];
  c.ph = c.h + pad.lo[1] + pad.hi[1];
  c.pw = c.w + pad.lo[2] + pad.hi[2];
  check(c.pd >= c.kd && c.ph >= c.kh && c.pw >= c.kw,
        "conv3d: padded extent smaller than kernel");
  c.od = (c.pd - c.kd) / stride + 1;
  c.oh = (c.ph - c.kh) / stride + 1;
  c.ow = (c.pw - c.kw) / stride + 1;
  return c;
}

template <class T>
std::vector<T> pad_input(const Tensor<T>& x, const ConvDims<T>& c) {
  std::vector<T> padded(
      static_cast<std::size_t>(c.n * c.ci * c.pd * c.ph * c.pw), T(0));
  const std::int64_t slices = c.n * c.ci;
  parallel_for(slices, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t s = lo; s < hi; ++s) {
      const T* src = x.data() + s * c.d * c.h * c.w;
      T* dst = padded.data() + s * c.pd * c.ph * c.pw;
      for (std::int64_t z = 0; z < c.d; ++z) {
        for (std::int64_t y = 0; y < c.h; ++y) {
          std::copy(src + (z * c.h + y) * c.w, src + (z * c.h + y + 1) * c.w,
                    dst + ((z + c.pad.lo[0]) * c.ph + y + c.pad.lo[1]) * c.pw +
                        c.pad.lo[2]);
        }
      }
    }
  });
  return padded;
}

}  // namespace detail

template <class T>
Tensor<T> conv3d_pad(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                     std::int64_t stride, const ConvPad& pad) {
  const auto c = detail::conv_dims(x, w, b, stride, pad);
  const std::vector<T> padded = detail::pad_input(x, c);

  std::vector<T> out(static_cast<std::size_t>(c.n * c.co * c.od * c.oh * c.ow));
  const std::int64_t out_slice = c.od * c.oh * c.ow;
  const std::int64_t pad_slice = c.pd * c.ph * c.pw;
  const std::int64_t ktaps = c.kd * c.kh * c.kw;

  parallel_for(c.n * c.co, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t nc = lo; nc < hi; ++nc) {
      const std::int64_t ni = nc / c.co;
      const std::int64_t co = nc % c.co;
      T* slice = out.data() + nc * out_slice;
      std::fill(slice, slice + out_slice, b.data()[co]);
      for (std::int64_t ci = 0; ci < c.ci; ++ci) {
        const T* base = padded.data() + (ni * c.ci + ci) * pad_slice;
        const T* wk = w.data() + (co * c.ci + ci) * ktaps;
        for (std::int64_t kd = 0; kd < c.kd; ++kd) {
          for (std::int64_t kh = 0; kh < c.kh; ++kh) {
            for (std::int64_t kw = 0; kw < c.kw; ++kw) {
              const T wv = wk[(kd * c.kh + kh) * c.kw + kw];
              if (wv == T(0)) continue;
              for (std::int64_t od = 0; od < c.od; ++od) {
                for (std::int64_t oh = 0; oh < c.oh; ++oh) {
                  const T* __restrict in_row =
                      base + ((od * stride + kd) * c.ph + oh * stride + kh) * c.pw +
                      kw;
                  T* __restrict out_row = slice + (od * c.oh + oh) * c.ow;
                  if (stride == 1) {
                    for (std::int64_t ow = 0; ow < c.ow; ++ow)
                      out_row[ow] += wv * in_row[ow];
                  } else {
                    for (std::int64_t ow = 0; ow < c.ow; ++ow)
                      out_row[ow] += wv * in_row[ow * stride];
                  }
                }
              }
            }
          }
        }
      }
    }
  });

  auto xh = x, wh = w, bh = b;
  return detail::make_op<T>(
      {c.n, c.co, c.od, c.oh, c.ow}, std::move(out), {x, w, b},
      [xh, wh, bh, c](typename Tensor<T>::Node& nd) mutable {
        const T* g = nd.grad.data();
        const std::int64_t out_slice = c.od * c.oh * c.ow;
        const std::int64_t pad_slice = c.pd * c.ph * c.pw;
        const std::int64_t ktaps = c.kd * c.kh * c.kw;

        if (bh.requires_grad()) {
          T* db = bh.grad();
          for (std::int64_t co = 0; co < c.co; ++co) {
            double acc = 0.0;
            for (std::int64_t ni = 0; ni < c.n; ++ni) {
              const T* slice = g + (ni * c.co + co) * out_slice;
              for (std::int64_t i = 0; i < out_slice; ++i)
                acc += static_cast<double>(slice[i]);
            }
            db[co] += static_cast<T>(acc);
          }
        }

        if (wh.requires_grad()) {
          const std::vector<T> padded = detail::pad_input(xh, c);
          T* dw = wh.grad();
          parallel_for(c.co * c.ci, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t cc = lo; cc < hi; ++cc) {
              const std::int64_t co = cc / c.ci;
              const std::int64_t ci = cc % c.ci;
              T* wk = dw + cc * ktaps;
              for (std::int64_t kd = 0; kd < c.kd; ++kd) {
                for (std::int64_t kh = 0; kh < c.kh; ++kh) {
                  for (std::int64_t kw = 0; kw < c.kw; ++kw) {
                    double acc = 0.0;
                    for (std::int64_t ni = 0; ni < c.n; ++ni) {
                      const T* gsl = g + (ni * c.co + co) * out_slice;
                      const T* base = padded.data() + (ni * c.ci + ci) * pad_slice;
                      for (std::int64_t od = 0; od < c.od; ++od) {
                        for (std::int64_t oh = 0; oh < c.oh; ++oh) {
                          const T* __restrict grow = gsl + (od * c.oh + oh) * c.ow;
                          const T* __restrict in_row =
                              base +
                              ((od * c.stride + kd) * c.ph + oh * c.stride + kh) *
                                  c.pw +
                              kw;
                          if (c.stride == 1) {
                            T racc = T(0);
                            for (std::int64_t ow = 0; ow < c.ow; ++ow)
                              racc += grow[ow] * in_row[ow];
                            acc += static_cast<double>(racc);
                          } else {
                            T racc = T(0);
                            for (std::int64_t ow = 0; ow < c.ow; ++ow)
                              racc += grow[ow] * in_row[ow * c.stride];
                            acc += static_cast<double>(racc);
                          }
                        }
                      }
                    }
                    wk[(kd * c.kh + kh) * c.kw + kw] += static_cast<T>(acc);
                  }
                }
              }
            }
          });
        }

        if (xh.requires_grad()) {
          std::vector<T> dpad(
              static_cast<std::size_t>(c.n * c.ci * pad_slice), T(0));
          parallel_for(c.n * c.ci, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t sl = lo; sl < hi; ++sl) {
              const std::int64_t ni = sl / c.ci;
              const std::int64_t ci = sl % c.ci;
              T* base = dpad.data() + sl * pad_slice;
              for (std::int64_t co = 0; co < c.co; ++co) {
                const T* gsl = g + (ni * c.co + co) * out_slice;
                const T* wk = wh.data() + (co * c.ci + ci) * ktaps;
                for (std::int64_t kd = 0; kd < c.kd; ++kd) {
                  for (std::int64_t kh = 0; kh < c.kh; ++kh) {
                    for (std::int64_t kw = 0; kw < c.kw; ++kw) {
                      const T wv = wk[(kd * c.kh + kh) * c.kw + kw];
                      if (wv == T(0)) continue;
                      for (std::int64_t od = 0; od < c.od; ++od) {
                        for (std::int64_t oh = 0; oh < c.oh; ++oh) {
                          const T* __restrict grow = gsl + (od * c.oh + oh) * c.ow;
                          T* __restrict drow =
                              base +
                              ((od * c.stride + kd) * c.ph + oh * c.stride + kh) *
                                  c.pw +
                              kw;
                          if (c.stride == 1) {
                            for (std::int64_t ow = 0; ow < c.ow; ++ow)
                              drow[ow] += wv * grow[ow];
                          } else {
                            for (std::int64_t ow = 0; ow < c.ow; ++ow)
                              drow[ow * c.stride] += wv * grow[ow];
                          }
                        }
                      }
                    }
                  }
                }
              }
            }
          });
          // fold the padded gradient back onto the unpadded input
          T* dx = xh.grad();
          parallel_for(c.n * c.ci, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t sl = lo; sl < hi; ++sl) {
              const T* base = dpad.data() + sl * pad_slice;
              T* dst = dx + sl * c.d * c.h * c.w;
              for (std::int64_t z = 0; z < c.d; ++z) {
                for (std::int64_t y = 0; y < c.h; ++y) {
                  const T* src =
                      base +
                      ((z + c.pad.lo[0]) * c.ph + y + c.pad.lo[1]) * c.pw +
                      c.pad.lo[2];
                  T* drow = dst + (z * c.h + y) * c.w;
                  for (std::int64_t xw = 0; xw < c.w; ++xw) drow[xw] += src[xw];
                }
              }
            }
          });
        }
      });
}

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::int64_t stride, std::int64_t padding) {
  detail::check(padding >= 0, "conv3d: padding must be >= 0");
  ConvPad pad;
  pad.lo = {padding, padding, padding};
  pad.hi = {padding, padding, padding};
  return conv3d_pad(x, w, b, stride, pad);
}

// ---------------------------------------------------------------------------
// maxpool3d (kernel 2, stride 2) and nearest-neighbour upsampling (factor 2).
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> maxpool3d_2(const Tensor<T>& x) {
  detail::check(x.rank() == 5, "maxpool3d: expects [N,C,D,H,W]");
  const std::int64_t n = x.dim(0), ch = x.dim(1), d = x.dim(2), h = x.dim(3),
                     w = x.dim(4);
  detail::check(d % 2 == 0 && h % 2 == 0 && w % 2 == 0,
                "maxpool3d: spatial extents must be even, got " +
                    shape_str(x.shape()));
  const std::int64_t od = d / 2, oh = h / 2, ow = w / 2;
  std::vector<T> out(static_cast<std::size_t>(n * ch * od * oh * ow));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  const std::int64_t in_slice = d * h * w;
  const std::int64_t out_slice = od * oh * ow;
  for (std::int64_t s = 0; s < n * ch; ++s) {
    const T* src = x.data() + s * in_slice;
    T* dst = out.data() + s * out_slice;
    std::int64_t* am = argmax->data() + s * out_slice;
    for (std::int64_t z = 0; z < od; ++z) {
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = 0;
          // ascending scan with strict > keeps the lowest linear index on ties
          for (std::int64_t kz = 0; kz < 2; ++kz) {
            for (std::int64_t ky = 0; ky < 2; ++ky) {
              for (std::int64_t kx = 0; kx < 2; ++kx) {
                const std::int64_t idx =
                    ((2 * z + kz) * h + 2 * y + ky) * w + 2 * xx + kx;
                if (src[idx] > best) {
                  best = src[idx];
                  best_idx = idx;
                }
              }
            }
          }
          dst[(z * oh + y) * ow + xx] = best;
          am[(z * oh + y) * ow + xx] = best_idx;
        }
      }
    }
  }
  auto xh = x;
  return detail::make_op<T>(
      {n, ch, od, oh, ow}, std::move(out), {x},
      [xh, argmax, in_slice, out_slice, n, ch](typename Tensor<T>::Node& nd) mutable {
        if (!xh.requires_grad()) return;
        T* dx = xh.grad();
        const T* g = nd.grad.data();
        for (std::int64_t s = 0; s < n * ch; ++s) {
          const std::int64_t* am = argmax->data() + s * out_slice;
          const T* gs = g + s * out_slice;
          T* dst = dx + s * in_slice;
          for (std::int64_t i = 0; i < out_slice; ++i) dst[am[i]] += gs[i];
        }
      });
}

template <class T>
Tensor<T> upsample_nearest_2(const Tensor<T>& x) {
  detail::check(x.rank() == 5, "upsample: expects [N,C,D,H,W]");
  const std::int64_t n = x.dim(0), ch = x.dim(1), d = x.dim(2), h = x.dim(3),
                     w = x.dim(4);
  const std::int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
  std::vector<T> out(static_cast<std::size_t>(n * ch * od * oh * ow));
  const std::int64_t in_slice = d * h * w;
  const std::int64_t out_slice = od * oh * ow;
  for (std::int64_t s = 0; s < n * ch; ++s) {
    const T* src = x.data() + s * in_slice;
    T* dst = out.data() + s * out_slice;
    for (std::int64_t z = 0; z < od; ++z) {
      for (std::int64_t y = 0; y < oh; ++y) {
        const T* srow = src + ((z / 2) * h + y / 2) * w;
        T* drow = dst + (z * oh + y) * ow;
        for (std::int64_t xx = 0; xx < ow; ++xx) drow[xx] = srow[xx / 2];
      }
    }
  }
  auto xh = x;
  return detail::make_op<T>(
      {n, ch, od, oh, ow}, std::move(out), {x},
      [xh, in_slice, out_slice, n, ch, d, h, w, oh, ow,
       od](typename Tensor<T>::Node& nd) mutable {
        if (!xh.requires_grad()) return;
        T* dx = xh.grad();
        const T* g = nd.grad.data();
        for (std::int64_t s = 0; s < n * ch; ++s) {
          const T* gs = g + s * out_slice;
          T* dst = dx + s * in_slice;
          for (std::int64_t z = 0; z < od; ++z) {
            for (std::int64_t y = 0; y < oh; ++y) {
              const T* grow = gs + (z * oh + y) * ow;
              T* drow = dst + ((z / 2) * h + y / 2) * w;
              for (std::int64_t xx = 0; xx < ow; ++xx) drow[xx / 2] += grow[xx];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Instance statistics and normalization (population standard deviation).
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void compute_channel_stats(const Tensor<T>& x, std::vector<T>& mu,
                           std::vector<T>& sigma) {
  const std::int64_t nc = x.dim(0) * x.dim(1);
  const std::int64_t m = spatial_size(x);
  mu.resize(static_cast<std::size_t>(nc));
  sigma.resize(static_cast<std::size_t>(nc));
  for (std::int64_t i = 0; i < nc; ++i) {
    const T* p = x.data() + i * m;
    double acc = 0.0;
    for (std::int64_t j = 0; j < m; ++j) acc += static_cast<double>(p[j]);
    const double mean_v = acc / static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      const double dv = static_cast<double>(p[j]) - mean_v;
      var += dv * dv;
    }
    var /= static_cast<double>(m);
    mu[static_cast<std::size_t>(i)] = static_cast<T>(mean_v);
    sigma[static_cast<std::size_t>(i)] = static_cast<T>(std::sqrt(var));
  }
}

}  // namespace detail

// Per-(instance,channel) mean and population standard deviation of
// [N,C,spatial...]; both outputs are differentiable in x.
template <class T>
std::pair<Tensor<T>, Tensor<T>> channel_stats(const Tensor<T>& x) {
  detail::check(x.rank() >= 3, "channel_stats: expects [N,C,spatial...]");
  detail::check(detail::spatial_size(x) >= 1, "channel_stats: empty spatial");
  const std::int64_t n = x.dim(0), c = x.dim(1);
  const std::int64_t m = detail::spatial_size(x);
  std::vector<T> mu, sigma;
  detail::compute_channel_stats(x, mu, sigma);
  auto xh = x;
  auto mu_copy = mu, sigma_copy = sigma;
  Tensor<T> mu_t = detail::make_op<T>(
      {n, c}, std::move(mu), {x},
      [xh, m](typename Tensor<T>::Node& nd) mutable {
        if (!xh.requires_grad()) return;
        T* dx = xh.grad();
        for (std::int64_t i = 0; i < nd.size(); ++i) {
          const T g = nd.grad[static_cast<std::size_t>(i)] / static_cast<T>(m);
          T* row = dx + i * m;
          for (std::int64_t j = 0; j < m; ++j) row[j] += g;
        }
      });
  Tensor<T> sigma_t = detail::make_op<T>(
      {n, c}, std::move(sigma), {x},
      [xh, m, mu_copy, sigma_copy](typename Tensor<T>::Node& nd) mutable {
        if (!xh.requires_grad()) return;
        T* dx = xh.grad();
        const T* xv = xh.data();
        for (std::int64_t i = 0; i < nd.size(); ++i) {
          const T sg = sigma_copy[static_cast<std::size_t>(i)];
          if (sg <= T(0)) continue;
          const T g = nd.grad[static_cast<std::size_t>(i)] /
                      (static_cast<T>(m) * sg);
          const T mu_v = mu_copy[static_cast<std::size_t>(i)];
          const T* row = xv + i * m;
          T* drow = dx + i * m;
          for (std::int64_t j = 0; j < m; ++j) drow[j] += g * (row[j] - mu_v);
        }
      });
  return {mu_t, sigma_t};
}

// (x - mu) / (sigma + eps) per (instance, channel).
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
  detail::check(x.rank() >= 3, "instance_norm: expects [N,C,spatial...]");
  const std::int64_t nc = x.dim(0) * x.dim(1);
  const std::int64_t m = detail::spatial_size(x);
  std::vector<T> mu, sigma;
  detail::compute_channel_stats(x, mu, sigma);
  std::vector<T> out(x.vec());
  for (std::int64_t i = 0; i < nc; ++i) {
    const T inv = T(1) / (sigma[static_cast<std::size_t>(i)] + eps);
    const T mu_v = mu[static_cast<std::size_t>(i)];
    T* row = out.data() + i * m;
    for (std::int64_t j = 0; j < m; ++j) row[j] = (row[j] - mu_v) * inv;
  }
  auto xh = x;
  auto sigma_copy = sigma;
  return detail::make_op<T>(
      x.shape(), std::move(out), {x},
      [xh, sigma_copy, eps, nc, m](typename Tensor<T>::Node& nd) mutable {
        if (!xh.requires_grad()) return;
        // dx = (g - mean(g))/s - y * mean(g*y)/sigma  with s = sigma + eps
        T* dx = xh.grad();
        const T* y = nd.data.data();
        const T* g = nd.grad.data();
        for (std::int64_t i = 0; i < nc; ++i) {
          const T sg = sigma_copy[static_cast<std::size_t>(i)];
          const T s = sg + eps;
          const T* yr = y + i * m;
          const T* gr = g + i * m;
          T* dr = dx + i * m;
          double gsum = 0.0, gysum = 0.0;
          for (std::int64_t j = 0; j < m; ++j) {
            gsum += static_cast<double>(gr[j]);
            gysum += static_cast<double>(gr[j]) * static_cast<double>(yr[j]);
          }
          const T gmean = static_cast<T>(gsum / static_cast<double>(m));
          const T gymean = static_cast<T>(gysum / static_cast<double>(m));
          const T inv_s = T(1) / s;
          const T inv_sigma = sg > T(0) ? T(1) / sg : T(0);
          for (std::int64_t j = 0; j < m; ++j) {
            dr[j] += (gr[j] - gmean) * inv_s - yr[j] * gymean * inv_sigma;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Fused segmentation losses (targets are constants).
// ---------------------------------------------------------------------------

// Mean binary cross-entropy with probability clamping at [1e-7, 1-1e-7].
template <class T>
Tensor<T> bce_with_target(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check(pred.shape() == target.shape(),
                "bce: shape mismatch " + shape_str(pred.shape()) + " vs " +
                    shape_str(target.shape()));
  const T lo = static_cast<T>(1e-7);
  const T hi = T(1) - lo;
  const std::int64_t m = pred.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double p = std::min<double>(std::max<double>(pred.data()[i], lo), hi);
    const double t = target.data()[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  auto ph = pred, th = target;
  return detail::make_op<T>(
      {1}, {static_cast<T>(acc / static_cast<double>(m))}, {pred, target},
      [ph, th, lo, hi, m](typename Tensor<T>::Node& nd) mutable {
        if (!ph.requires_grad()) return;
        T* dp = ph.grad();
        const T g = nd.grad[0] / static_cast<T>(m);
        const T* pv = ph.data();
        const T* tv = th.data();
        for (std::int64_t i = 0; i < m; ++i) {
          if (pv[i] <= lo || pv[i] >= hi) continue;  // clamped: zero gradient
          dp[i] += g * (pv[i] - tv[i]) / (pv[i] * (T(1) - pv[i]));
        }
      });
}

// Soft dice loss 1 - 2|p*t| / (|p| + |t| + eps).
template <class T>
Tensor<T> dice_with_target(const Tensor<T>& pred, const Tensor<T>& target,
                           T eps) {
  detail::check(pred.shape() == target.shape(),
                "dice: shape mismatch " + shape_str(pred.shape()) + " vs " +
                    shape_str(target.shape()));
  detail::check(eps > T(0), "dice: eps must be > 0");
  const std::int64_t m = pred.size();
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double p = pred.data()[i];
    const double t = target.data()[i];
    inter += p * t;
    psum += p;
    tsum += t;
  }
  const double den = psum + tsum + static_cast<double>(eps);
  const double loss = 1.0 - 2.0 * inter / den;
  auto ph = pred, th = target;
  return detail::make_op<T>(
      {1}, {static_cast<T>(loss)}, {pred, target},
      [ph, th, inter, den, m](typename Tensor<T>::Node& nd) mutable {
        if (!ph.requires_grad()) return;
        T* dp = ph.grad();
        const T g = nd.grad[0];
        const T* tv = th.data();
        const T inv_den2 = static_cast<T>(1.0 / (den * den));
        const T two_inter = static_cast<T>(2.0 * inter);
        for (std::int64_t i = 0; i < m; ++i) {
          dp[i] += g * (two_inter - T(2) * tv[i] * static_cast<T>(den)) * inv_den2;
        }
      });
}

}  // namespace sgs
