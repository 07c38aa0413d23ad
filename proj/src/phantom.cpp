#include "sgs/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sgs/common.hpp"
#include "sgs/io.hpp"

namespace sgs {

std::uint64_t PhantomSpec::hash() const {
  std::uint64_t h = fnv1a64(&size, sizeof(size));
  h = fnv1a64(&background, sizeof(background), h);
  h = fnv1a64(&rois, sizeof(rois), h);
  for (const auto& o : organs) {
    h = fnv1a64(&o.cx, sizeof(double) * 7, h);
    h = fnv1a64(&o.roi_label, sizeof(o.roi_label), h);
  }
  return h;
}

std::pair<Volume, MaskVolume> render_phantom(const PhantomSpec& spec) {
  const std::int64_t n = spec.size;
  for (const auto& o : spec.organs) {
    if (o.activity <= 0.0) {
      throw DataError("phantom: organ activity must exceed background");
    }
    if (o.cx - o.ax < 0 || o.cx + o.ax > n - 1 || o.cy - o.ay < 0 ||
        o.cy + o.ay > n - 1 || o.cz - o.az < 0 || o.cz + o.az > n - 1) {
      throw DataError("phantom: organ does not fit inside the grid");
    }
    if (o.roi_label >= static_cast<int>(spec.rois)) {
      throw DataError("phantom: roi_label out of range");
    }
  }
  Volume activity(n, n, n, static_cast<float>(spec.background));
  MaskVolume masks(n, n, n, spec.rois);
  for (std::int64_t z = 0; z < n; ++z) {
    for (std::int64_t y = 0; y < n; ++y) {
      for (std::int64_t x = 0; x < n; ++x) {
        int roi_hits = 0;
        for (const auto& o : spec.organs) {
          const double dx = (static_cast<double>(x) - o.cx) / o.ax;
          const double dy = (static_cast<double>(y) - o.cy) / o.ay;
          const double dz = (static_cast<double>(z) - o.cz) / o.az;
          if (dx * dx + dy * dy + dz * dz <= 1.0) {
            activity.at(x, y, z) += static_cast<float>(o.activity);
            if (o.roi_label >= 0) {
              ++roi_hits;
              masks.at(o.roi_label, x, y, z) = 1;
            }
          }
        }
        if (roi_hits > 1) {
          throw DataError("phantom: ROI organs overlap at voxel (" +
                          std::to_string(x) + "," + std::to_string(y) + "," +
                          std::to_string(z) + ")");
        }
      }
    }
  }
  return {std::move(activity), std::move(masks)};
}

Volume sample_counts(const Volume& activity, const DoseSimConfig& cfg,
                     RngStream& rng) {
  if (cfg.drf < 1) throw ConfigError("dose simulation: drf must be >= 1");
  Volume out(activity.nx, activity.ny, activity.nz);
  const double scale = cfg.rescale ? static_cast<double>(cfg.drf) : 1.0;
  for (std::int64_t i = 0; i < activity.size(); ++i) {
    const double lam =
        static_cast<double>(activity.data[static_cast<std::size_t>(i)]) /
        static_cast<double>(cfg.drf);
    if (lam < 0.0) throw DataError("dose simulation: negative activity");
    out.data[static_cast<std::size_t>(i)] =
        static_cast<float>(scale * static_cast<double>(rng.poisson(lam)));
  }
  return out;
}

Volume smooth_boxcar3(const Volume& v) {
  Volume out(v.nx, v.ny, v.nz);
  for (std::int64_t z = 0; z < v.nz; ++z) {
    for (std::int64_t y = 0; y < v.ny; ++y) {
      for (std::int64_t x = 0; x < v.nx; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
              const std::int64_t xx = x + dx, yy = y + dy, zz = z + dz;
              if (xx < 0 || xx >= v.nx || yy < 0 || yy >= v.ny || zz < 0 ||
                  zz >= v.nz) {
                continue;
              }
              acc += v.at(xx, yy, zz);
              ++cnt;
            }
          }
        }
        out.at(x, y, z) = static_cast<float>(acc / cnt);
      }
    }
  }
  return out;
}

Volume simulate_full_dose(const Volume& activity, std::uint64_t seed) {
  RngStream rng(seed);
  DoseSimConfig full;
  full.drf = 1;
  full.rescale = false;
  return smooth_boxcar3(sample_counts(activity, full, rng));
}

Volume simulate_low_dose(const Volume& activity, const DoseSimConfig& cfg,
                         std::uint64_t seed) {
  RngStream rng(seed);
  return smooth_boxcar3(sample_counts(activity, cfg, rng));
}

Volume resize_volume(const Volume& v, std::int64_t tx, std::int64_t ty,
                     std::int64_t tz) {
  if (tx < 2 || ty < 2 || tz < 2) {
    throw ConfigError("resize: target extents must be >= 2");
  }
  if (tx == v.nx && ty == v.ny && tz == v.nz) return v;
  Volume out(tx, ty, tz);
  const double sx = tx > 1 ? static_cast<double>(v.nx - 1) / (tx - 1) : 0.0;
  const double sy = ty > 1 ? static_cast<double>(v.ny - 1) / (ty - 1) : 0.0;
  const double sz = tz > 1 ? static_cast<double>(v.nz - 1) / (tz - 1) : 0.0;
  for (std::int64_t z = 0; z < tz; ++z) {
    const double fz = z * sz;
    const std::int64_t z0 = std::min<std::int64_t>(static_cast<std::int64_t>(fz), v.nz - 2);
    const double wz = fz - z0;
    for (std::int64_t y = 0; y < ty; ++y) {
      const double fy = y * sy;
      const std::int64_t y0 = std::min<std::int64_t>(static_cast<std::int64_t>(fy), v.ny - 2);
      const double wy = fy - y0;
      for (std::int64_t x = 0; x < tx; ++x) {
        const double fx = x * sx;
        const std::int64_t x0 = std::min<std::int64_t>(static_cast<std::int64_t>(fx), v.nx - 2);
        const double wx = fx - x0;
        double acc = 0.0;
        for (int dz = 0; dz <= 1; ++dz) {
          const double kz = dz ? wz : 1.0 - wz;
          if (kz == 0.0) continue;
          for (int dy = 0; dy <= 1; ++dy) {
            const double ky = dy ? wy : 1.0 - wy;
            if (ky == 0.0) continue;
            for (int dx = 0; dx <= 1; ++dx) {
              const double kx = dx ? wx : 1.0 - wx;
              if (kx == 0.0) continue;
              acc += kz * ky * kx * v.at(x0 + dx, y0 + dy, z0 + dz);
            }
          }
        }
        out.at(x, y, z) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

PhantomSpec default_phantom_spec(std::int64_t size, double background,
                                 RngStream& rng) {
  PhantomSpec spec;
  spec.size = size;
  spec.background = background;
  spec.rois = 4;
  const double s = static_cast<double>(size - 1);

  struct Proto {
    double cx, cy, cz, ax, ay, az, act_lo, act_hi;
    int roi;
  };
  // fractional layout chosen so the jittered organs never overlap
  const Proto protos[] = {
      {0.32, 0.40, 0.55, 0.18, 0.14, 0.12, 140, 200, 0},  // liver analog
      {0.50, 0.50, 0.20, 0.13, 0.13, 0.11, 240, 320, 1},  // brain analog
      {0.70, 0.62, 0.58, 0.09, 0.07, 0.10, 180, 260, 2},  // kidney analog
      {0.50, 0.55, 0.84, 0.07, 0.07, 0.06, 420, 600, 3},  // bladder analog
  };
  for (const auto& p : protos) {
    Organ o;
    o.cx = (p.cx + rng.uniform(-0.02, 0.02)) * s;
    o.cy = (p.cy + rng.uniform(-0.02, 0.02)) * s;
    o.cz = (p.cz + rng.uniform(-0.02, 0.02)) * s;
    const double grow = rng.uniform(0.85, 1.15);
    o.ax = std::max(1.5, p.ax * grow * s);
    o.ay = std::max(1.5, p.ay * grow * s);
    o.az = std::max(1.5, p.az * grow * s);
    o.activity = rng.uniform(p.act_lo, p.act_hi);
    o.roi_label = p.roi;
    spec.organs.push_back(o);
    if (p.roi == 1) {
      // inner structure of the brain analog (not a separate ROI)
      Organ inner = o;
      inner.ax *= 0.45;
      inner.ay *= 0.45;
      inner.az *= 0.45;
      inner.activity = rng.uniform(80, 120);
      inner.roi_label = -1;
      spec.organs.push_back(inner);
    }
  }
  return spec;
}

std::vector<ManifestEntry> build_dataset(const DatasetBuildParams& params,
                                         std::uint64_t seed,
                                         const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (params.count < 1) throw ConfigError("dataset: count must be >= 1");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "train", ec);
  fs::create_directories(fs::path(out_dir) / "test", ec);
  if (ec) throw DataError("cannot create dataset directories under " + out_dir);

  const std::int64_t n_train = static_cast<std::int64_t>(
      std::floor(static_cast<double>(params.count) * params.train_fraction));
  const std::int64_t render_size = params.size * params.render_scale;

  std::vector<ManifestEntry> manifest;
  for (std::int64_t idx = 0; idx < params.count; ++idx) {
    RngStream spec_rng(
        derive_seed(seed, {stream_tag("phantom"), static_cast<std::uint64_t>(idx)}));
    PhantomSpec spec =
        default_phantom_spec(render_size, params.background, spec_rng);
    auto [activity, masks] = render_phantom(spec);

    Volume y = simulate_full_dose(
        activity, derive_seed(seed, {stream_tag("full"),
                                     static_cast<std::uint64_t>(idx)}));
    if (params.render_scale > 1) {
      y = resize_volume(y, params.size, params.size, params.size);
      // masks are re-rendered at the target grid from the scaled geometry
      PhantomSpec coarse = spec;
      coarse.size = params.size;
      const double f = static_cast<double>(params.size - 1) /
                       static_cast<double>(render_size - 1);
      for (auto& o : coarse.organs) {
        o.cx *= f;
        o.cy *= f;
        o.cz *= f;
        o.ax *= f;
        o.ay *= f;
        o.az *= f;
      }
      masks = render_phantom(coarse).second;
    }

    const std::string split = idx < n_train ? "train" : "test";
    for (std::int64_t samp = 0; samp < params.samples_per_case; ++samp) {
      Volume x = simulate_low_dose(
          activity, params.dose,
          derive_seed(seed, {stream_tag("low"), static_cast<std::uint64_t>(idx),
                             static_cast<std::uint64_t>(samp)}));
      if (params.render_scale > 1) {
        x = resize_volume(x, params.size, params.size, params.size);
      }
      char id[32];
      if (params.samples_per_case > 1) {
        std::snprintf(id, sizeof(id), "case_%04d_%c", static_cast<int>(idx),
                      static_cast<char>('a' + samp));
      } else {
        std::snprintf(id, sizeof(id), "case_%04d", static_cast<int>(idx));
      }
      const fs::path dir = fs::path(out_dir) / split / id;
      fs::create_directories(dir, ec);
      if (ec) throw DataError("cannot create case directory " + dir.string());
      write_volume((dir / "x.pvol").string(), x);
      write_volume((dir / "y.pvol").string(), y);
      write_mask((dir / "s.pmsk").string(), masks);
      manifest.push_back({id, split, to_hex(spec.hash())});
    }
  }

  std::ofstream mf(fs::path(out_dir) / "manifest.tsv");
  if (!mf) throw DataError("cannot write manifest under " + out_dir);
  mf << "case_id\tsplit\tspec_hash\n";
  for (const auto& e : manifest) {
    mf << e.case_id << "\t" << e.split << "\t" << e.spec_hash << "\n";
  }
  return manifest;
}

}  // namespace sgs
