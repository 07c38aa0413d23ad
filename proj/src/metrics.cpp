#include "sgs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sgs/common.hpp"

namespace sgs {

namespace {

constexpr double kPsnrCap = 200.0;

void check_shapes(const Volume& a, const Volume& b, const char* op) {
  if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz) {
    throw DataError(std::string(op) + ": volume shapes differ");
  }
}

double auto_range(const Volume& y) {
  float lo = y.data[0], hi = y.data[0];
  for (float v : y.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return static_cast<double>(hi) - static_cast<double>(lo);
}

double auto_range_masked(const Volume& y, const std::vector<std::uint8_t>& m) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (!m[i]) continue;
    const double v = y.data[i];
    if (first) {
      lo = hi = v;
      first = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (first) throw DataError("masked metric: empty mask");
  return hi - lo;
}

std::int64_t mask_count(const std::vector<std::uint8_t>& m) {
  std::int64_t n = 0;
  for (auto v : m) n += v;
  return n;
}

double mse_impl(const Volume& a, const Volume& b,
                const std::vector<std::uint8_t>* mask) {
  double acc = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) throw DataError("masked metric: empty mask");
  return acc / static_cast<double>(n);
}

double psnr_from_mse(double mse_v, double range) {
  if (!(range > 0.0)) throw DataError("psnr: data range must be > 0");
  if (mse_v < 1e-20) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(range * range / mse_v));
}

// Separable Gaussian blur (window 7, sigma 1.5, taps normalized to sum 1),
// zero padded; values are exact wherever the full window fits.
struct Field {
  std::int64_t nx, ny, nz;
  std::vector<double> v;
  double at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return v[static_cast<std::size_t>((z * ny + y) * nx + x)];
  }
  double& at(std::int64_t x, std::int64_t y, std::int64_t z) {
    return v[static_cast<std::size_t>((z * ny + y) * nx + x)];
  }
};

constexpr int kSsimRadius = 3;

std::vector<double> gaussian_taps() {
  std::vector<double> taps(2 * kSsimRadius + 1);
  double sum = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    const double t = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
    taps[static_cast<std::size_t>(i + kSsimRadius)] = t;
    sum += t;
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

Field blur(const Field& in) {
  static const std::vector<double> taps = gaussian_taps();
  Field tmp{in.nx, in.ny, in.nz,
            std::vector<double>(in.v.size(), 0.0)};
  Field tmp2 = tmp, out = tmp;
  for (std::int64_t z = 0; z < in.nz; ++z) {
    for (std::int64_t y = 0; y < in.ny; ++y) {
      for (std::int64_t x = 0; x < in.nx; ++x) {
        double acc = 0.0;
        for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
          const std::int64_t xx = x + k;
          if (xx < 0 || xx >= in.nx) continue;
          acc += taps[static_cast<std::size_t>(k + kSsimRadius)] * in.at(xx, y, z);
        }
        tmp.at(x, y, z) = acc;
      }
    }
  }
  for (std::int64_t z = 0; z < in.nz; ++z) {
    for (std::int64_t y = 0; y < in.ny; ++y) {
      for (std::int64_t x = 0; x < in.nx; ++x) {
        double acc = 0.0;
        for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
          const std::int64_t yy = y + k;
          if (yy < 0 || yy >= in.ny) continue;
          acc += taps[static_cast<std::size_t>(k + kSsimRadius)] * tmp.at(x, yy, z);
        }
        tmp2.at(x, y, z) = acc;
      }
    }
  }
  for (std::int64_t z = 0; z < in.nz; ++z) {
    for (std::int64_t y = 0; y < in.ny; ++y) {
      for (std::int64_t x = 0; x < in.nx; ++x) {
        double acc = 0.0;
        for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
          const std::int64_t zz = z + k;
          if (zz < 0 || zz >= in.nz) continue;
          acc += taps[static_cast<std::size_t>(k + kSsimRadius)] * tmp2.at(x, y, zz);
        }
        out.at(x, y, z) = acc;
      }
    }
  }
  return out;
}

double ssim_impl(const Volume& yhat, const Volume& y, double range,
                 const std::vector<std::uint8_t>* mask) {
  check_shapes(yhat, y, "ssim3d");
  const std::int64_t nx = y.nx, ny = y.ny, nz = y.nz;
  if (nx < 2 * kSsimRadius + 1 || ny < 2 * kSsimRadius + 1 ||
      nz < 2 * kSsimRadius + 1) {
    throw DataError("ssim3d: volume smaller than the 7^3 window");
  }
  if (range <= 0.0) {
    range = mask ? auto_range_masked(y, *mask) : auto_range(y);
  }
  if (!(range > 0.0)) throw DataError("ssim3d: data range must be > 0");
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  Field a{nx, ny, nz, std::vector<double>(y.data.size())};
  Field b = a, aa = a, bb = a, ab = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    double va = yhat.data[i], vb = y.data[i];
    if (mask != nullptr && !(*mask)[i]) va = vb = 0.0;  // images times mask
    a.v[i] = va;
    b.v[i] = vb;
    aa.v[i] = va * va;
    bb.v[i] = vb * vb;
    ab.v[i] = va * vb;
  }
  const Field mu_a = blur(a), mu_b = blur(b), m_aa = blur(aa), m_bb = blur(bb),
              m_ab = blur(ab);

  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t z = kSsimRadius; z < nz - kSsimRadius; ++z) {
    for (std::int64_t y_ = kSsimRadius; y_ < ny - kSsimRadius; ++y_) {
      for (std::int64_t x = kSsimRadius; x < nx - kSsimRadius; ++x) {
        if (mask != nullptr &&
            !(*mask)[static_cast<std::size_t>((z * ny + y_) * nx + x)]) {
          continue;
        }
        const double ma = mu_a.at(x, y_, z);
        const double mb = mu_b.at(x, y_, z);
        const double va = m_aa.at(x, y_, z) - ma * ma;
        const double vb = m_bb.at(x, y_, z) - mb * mb;
        const double cov = m_ab.at(x, y_, z) - ma * mb;
        const double val = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                           ((ma * ma + mb * mb + c1) * (va + vb + c2));
        acc += val;
        ++count;
      }
    }
  }
  if (count == 0) throw DataError("ssim3d: empty evaluation region");
  return acc / static_cast<double>(count);
}

double diff_moment(const Volume& yhat, const Volume& y,
                   const std::vector<std::uint8_t>* mask, bool second,
                   double* mean_out = nullptr) {
  double acc = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    acc += static_cast<double>(yhat.data[i]) - y.data[i];
    ++n;
  }
  if (n == 0) throw DataError("masked metric: empty mask");
  const double mean_d = acc / static_cast<double>(n);
  if (mean_out != nullptr) *mean_out = mean_d;
  if (!second) return mean_d;
  double var = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    const double d = static_cast<double>(yhat.data[i]) - y.data[i] - mean_d;
    var += d * d;
  }
  return var / static_cast<double>(n);
}

}  // namespace

double psnr(const Volume& yhat, const Volume& y, double data_range) {
  check_shapes(yhat, y, "psnr");
  if (data_range <= 0.0) data_range = auto_range(y);
  return psnr_from_mse(mse_impl(yhat, y, nullptr), data_range);
}

double ssim3d(const Volume& yhat, const Volume& y, double data_range) {
  return ssim_impl(yhat, y, data_range, nullptr);
}

double mae(const Volume& yhat, const Volume& y) {
  check_shapes(yhat, y, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    acc += std::abs(static_cast<double>(yhat.data[i]) - y.data[i]);
  }
  return acc / static_cast<double>(y.data.size());
}

double nrmse(const Volume& yhat, const Volume& y) {
  check_shapes(yhat, y, "nrmse");
  const double range = auto_range(y);
  if (!(range > 0.0)) throw DataError("nrmse: ground-truth range is zero");
  return std::sqrt(mse_impl(yhat, y, nullptr)) / range;
}

double bias(const Volume& yhat, const Volume& y) {
  check_shapes(yhat, y, "bias");
  return diff_moment(yhat, y, nullptr, false);
}

double variance(const Volume& yhat, const Volume& y) {
  check_shapes(yhat, y, "variance");
  return diff_moment(yhat, y, nullptr, true);
}

std::vector<std::uint8_t> mask_channel(const MaskVolume& m, std::int64_t c) {
  if (c < 0 || c >= m.channels) throw DataError("mask_channel: out of range");
  const std::uint8_t* p = m.data.data() + c * m.voxels_per_channel();
  return std::vector<std::uint8_t>(p, p + m.voxels_per_channel());
}

double psnr_masked(const Volume& yhat, const Volume& y,
                   const std::vector<std::uint8_t>& mask, double data_range) {
  check_shapes(yhat, y, "psnr");
  if (mask.size() != y.data.size()) throw DataError("psnr: mask size mismatch");
  if (mask_count(mask) == 0) throw DataError("psnr: empty mask");
  if (data_range <= 0.0) data_range = auto_range_masked(y, mask);
  return psnr_from_mse(mse_impl(yhat, y, &mask), data_range);
}

double ssim3d_masked(const Volume& yhat, const Volume& y,
                     const std::vector<std::uint8_t>& mask, double data_range) {
  if (mask.size() != y.data.size()) throw DataError("ssim3d: mask size mismatch");
  if (mask_count(mask) == 0) throw DataError("ssim3d: empty mask");
  return ssim_impl(yhat, y, data_range, &mask);
}

double mae_masked(const Volume& yhat, const Volume& y,
                  const std::vector<std::uint8_t>& mask) {
  check_shapes(yhat, y, "mae");
  if (mask.size() != y.data.size()) throw DataError("mae: mask size mismatch");
  double acc = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (!mask[i]) continue;
    acc += std::abs(static_cast<double>(yhat.data[i]) - y.data[i]);
    ++n;
  }
  if (n == 0) throw DataError("mae: empty mask");
  return acc / static_cast<double>(n);
}

double nrmse_masked(const Volume& yhat, const Volume& y,
                    const std::vector<std::uint8_t>& mask) {
  check_shapes(yhat, y, "nrmse");
  const double range = auto_range_masked(y, mask);
  if (!(range > 0.0)) throw DataError("nrmse: ground-truth range is zero");
  return std::sqrt(mse_impl(yhat, y, &mask)) / range;
}

double bias_masked(const Volume& yhat, const Volume& y,
                   const std::vector<std::uint8_t>& mask) {
  check_shapes(yhat, y, "bias");
  return diff_moment(yhat, y, &mask, false);
}

double variance_masked(const Volume& yhat, const Volume& y,
                       const std::vector<std::uint8_t>& mask) {
  check_shapes(yhat, y, "variance");
  return diff_moment(yhat, y, &mask, true);
}

double dice_binary(const std::vector<std::uint8_t>& a,
                   const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw DataError("dice: mask size mismatch");
  std::int64_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 1 || b[i] > 1) throw DataError("dice: non-binary mask value");
    inter += a[i] && b[i] ? 1 : 0;
    na += a[i];
    nb += b[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

void MetricReport::finalize() {
  aggregate.clear();
  std::set<std::string> keys;
  for (const auto& c : cases) {
    for (const auto& [k, v] : c.values) keys.insert(k);
  }
  for (const auto& k : keys) {
    double acc = 0.0;
    std::int64_t n = 0;
    for (const auto& c : cases) {
      auto it = c.values.find(k);
      if (it != c.values.end()) {
        acc += it->second;
        ++n;
      }
    }
    if (n > 0) aggregate[k] = acc / static_cast<double>(n);
  }
}

void write_report_text(const std::string& path, const MetricReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path + "'");
  out << "# sgsgan metrics report\n";
  out << "# regions:";
  for (const auto& r : report.regions) out << " " << r;
  out << "\n";
  out.precision(9);
  for (const auto& c : report.cases) {
    out << "[" << c.case_id << "]\n";
    for (const auto& [k, v] : c.values) out << k << " = " << v << "\n";
  }
  out << "[aggregate]\n";
  for (const auto& [k, v] : report.aggregate) out << k << " = " << v << "\n";
}

MetricReport read_report_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report '" + path + "'");
  MetricReport rep;
  std::string line, section;
  std::set<std::string> regions;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("# regions:", 0) == 0) {
      std::istringstream ss(line.substr(10));
      std::string r;
      while (ss >> r) rep.regions.push_back(r);
      continue;
    }
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": malformed section header");
      }
      section = line.substr(1, line.size() - 2);
      if (section != "aggregate") rep.cases.push_back({section, {}});
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || section.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 'metric.region = value'");
    }
    std::string key = line.substr(0, eq);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    const double value = std::strtod(line.c_str() + eq + 1, nullptr);
    if (section == "aggregate") {
      rep.aggregate[key] = value;
    } else {
      rep.cases.back().values[key] = value;
    }
  }
  return rep;
}

void write_report_tsv(const std::string& path, const MetricReport& report) {
  static const char* metric_order[] = {"psnr",  "ssim", "mae",       "nrmse",
                                       "bias",  "variance", "unet_score"};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path + "'");
  out.precision(6);
  out << std::fixed;
  std::vector<std::string> cols;
  for (const char* m : metric_order) {
    for (const auto& r : report.regions) {
      const std::string key = std::string(m) + "." + r;
      if (report.aggregate.count(key)) cols.push_back(key);
    }
  }
  bool first = true;
  for (const auto& c : cols) {
    std::string header = c;
    std::replace(header.begin(), header.end(), '.', '_');
    out << (first ? "" : "\t") << header;
    first = false;
  }
  out << "\n";
  first = true;
  for (const auto& c : cols) {
    out << (first ? "" : "\t") << report.aggregate.at(c);
    first = false;
  }
  out << "\n";
}

}  // namespace sgs
