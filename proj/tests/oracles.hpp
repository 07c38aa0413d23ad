// Independent reference implementations used to freeze expected values.
// Everything here is deliberately naive (nested loops, direct summation)
// and must stay independent of the library's kernels.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sgs/tensor.hpp"
#include "sgs/volume.hpp"

namespace oracle {

// direct 6-nested-loop convolution, symmetric zero padding
template <class T>
std::vector<T> conv3d_loops(const std::vector<T>& x, std::int64_t n,
                            std::int64_t ci, std::int64_t d, std::int64_t h,
                            std::int64_t w, const std::vector<T>& wgt,
                            std::int64_t co, std::int64_t k,
                            const std::vector<T>& bias, std::int64_t stride,
                            std::int64_t pad) {
  const std::int64_t od = (d + 2 * pad - k) / stride + 1;
  const std::int64_t oh = (h + 2 * pad - k) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - k) / stride + 1;
  std::vector<T> out(static_cast<std::size_t>(n * co * od * oh * ow));
  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t c = 0; c < co; ++c) {
      for (std::int64_t z = 0; z < od; ++z) {
        for (std::int64_t y = 0; y < oh; ++y) {
          for (std::int64_t xx = 0; xx < ow; ++xx) {
            double acc = bias[static_cast<std::size_t>(c)];
            for (std::int64_t ic = 0; ic < ci; ++ic) {
              for (std::int64_t kz = 0; kz < k; ++kz) {
                for (std::int64_t ky = 0; ky < k; ++ky) {
                  for (std::int64_t kx = 0; kx < k; ++kx) {
                    const std::int64_t iz = z * stride + kz - pad;
                    const std::int64_t iy = y * stride + ky - pad;
                    const std::int64_t ix = xx * stride + kx - pad;
                    if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 ||
                        ix >= w) {
                      continue;
                    }
                    acc += static_cast<double>(
                               x[static_cast<std::size_t>(
                                   (((ni * ci + ic) * d + iz) * h + iy) * w +
                                   ix)]) *
                           wgt[static_cast<std::size_t>(
                               (((c * ci + ic) * k + kz) * k + ky) * k + kx)];
                  }
                }
              }
            }
            out[static_cast<std::size_t>(
                (((ni * co + c) * od + z) * oh + y) * ow + xx)] =
                static_cast<T>(acc);
          }
        }
      }
    }
  }
  return out;
}

template <class T>
std::vector<T> matmul_loops(const std::vector<T>& a, std::int64_t n,
                            std::int64_t k, const std::vector<T>& b,
                            std::int64_t m, const std::vector<T>& bias) {
  std::vector<T> out(static_cast<std::size_t>(n * m));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(j)];
      for (std::int64_t p = 0; p < k; ++p) {
        acc += static_cast<double>(a[static_cast<std::size_t>(i * k + p)]) *
               b[static_cast<std::size_t>(p * m + j)];
      }
      out[static_cast<std::size_t>(i * m + j)] = static_cast<T>(acc);
    }
  }
  return out;
}

// per-(instance,channel) mean / population std by direct summation
inline void channel_stats_loops(const std::vector<double>& x, std::int64_t n,
                                std::int64_t c, std::int64_t m,
                                std::vector<double>& mu,
                                std::vector<double>& sigma) {
  mu.assign(static_cast<std::size_t>(n * c), 0.0);
  sigma.assign(static_cast<std::size_t>(n * c), 0.0);
  for (std::int64_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      acc += x[static_cast<std::size_t>(i * m + j)];
    }
    mu[static_cast<std::size_t>(i)] = acc / static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      const double dv =
          x[static_cast<std::size_t>(i * m + j)] - mu[static_cast<std::size_t>(i)];
      var += dv * dv;
    }
    sigma[static_cast<std::size_t>(i)] = std::sqrt(var / static_cast<double>(m));
  }
}

// direct windowed SSIM with a 7^3 Gaussian window (sigma 1.5), mean over
// interior voxels where the full window fits
inline double ssim3d_loops(const sgs::Volume& a, const sgs::Volume& b,
                           double range) {
  const int r = 3;
  double taps[7];
  double tap_sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[i + r] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
    tap_sum += taps[i + r];
  }
  for (auto& t : taps) t /= tap_sum;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t z = r; z < a.nz - r; ++z) {
    for (std::int64_t y = r; y < a.ny - r; ++y) {
      for (std::int64_t x = r; x < a.nx - r; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int dz = -r; dz <= r; ++dz) {
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
              const double wgt = taps[dz + r] * taps[dy + r] * taps[dx + r];
              const double va = a.at(x + dx, y + dy, z + dz);
              const double vb = b.at(x + dx, y + dy, z + dz);
              ma += wgt * va;
              mb += wgt * vb;
              maa += wgt * va * va;
              mbb += wgt * vb * vb;
              mab += wgt * va * vb;
            }
          }
        }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++count;
      }
    }
  }
  return acc / static_cast<double>(count);
}

// lattice count of an origin-centred ball of radius `rad`
inline std::int64_t ball_voxel_count(double cx, double cy, double cz,
                                     double rad, std::int64_t n) {
  std::int64_t count = 0;
  for (std::int64_t z = 0; z < n; ++z) {
    for (std::int64_t y = 0; y < n; ++y) {
      for (std::int64_t x = 0; x < n; ++x) {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        if (dx * dx + dy * dy + dz * dz <= rad * rad) ++count;
      }
    }
  }
  return count;
}

}  // namespace oracle
