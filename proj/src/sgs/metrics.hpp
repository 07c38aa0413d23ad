#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgs/volume.hpp"

namespace sgs {

// Whole-image measures. data_range <= 0 selects the per-case ground-truth
// range max(y) - min(y).
double psnr(const Volume& yhat, const Volume& y, double data_range = 0.0);
double ssim3d(const Volume& yhat, const Volume& y, double data_range = 0.0);
double mae(const Volume& yhat, const Volume& y);
double nrmse(const Volume& yhat, const Volume& y);
double bias(const Volume& yhat, const Volume& y);
double variance(const Volume& yhat, const Volume& y);

// Single ROI channel of a multi-channel mask as a flat binary view.
std::vector<std::uint8_t> mask_channel(const MaskVolume& m, std::int64_t c);

// ROI-restricted variants: images are multiplied by the mask and the
// error denominators count only mask voxels. The mask must be non-empty.
double psnr_masked(const Volume& yhat, const Volume& y,
                   const std::vector<std::uint8_t>& mask,
                   double data_range = 0.0);
double ssim3d_masked(const Volume& yhat, const Volume& y,
                     const std::vector<std::uint8_t>& mask,
                     double data_range = 0.0);
double mae_masked(const Volume& yhat, const Volume& y,
                  const std::vector<std::uint8_t>& mask);
double nrmse_masked(const Volume& yhat, const Volume& y,
                    const std::vector<std::uint8_t>& mask);
double bias_masked(const Volume& yhat, const Volume& y,
                   const std::vector<std::uint8_t>& mask);
double variance_masked(const Volume& yhat, const Volume& y,
                       const std::vector<std::uint8_t>& mask);

// Dice overlap of two binary masks; 1 when both are empty.
double dice_binary(const std::vector<std::uint8_t>& a,
                   const std::vector<std::uint8_t>& b);

// Per-case and aggregate metric values, keyed "metric.region" with regions
// roi_1..roi_R and "all". Aggregates are arithmetic means over cases.
struct CaseMetrics {
  std::string case_id;
  std::map<std::string, double> values;
};

struct MetricReport {
  std::vector<std::string> regions;  // roi_1.., all
  std::vector<CaseMetrics> cases;
  std::map<std::string, double> aggregate;

  void finalize();  // recomputes aggregate means
};

// Structured text document: key-value records per case plus an aggregate
// block, in config-file syntax.
void write_report_text(const std::string& path, const MetricReport& report);
MetricReport read_report_text(const std::string& path);

// Single-row summary table, columns metric_region (PSNR/SSIM/MAE/... x
// {per-ROI, all}), mirroring the usual results-table layout.
void write_report_tsv(const std::string& path, const MetricReport& report);

}  // namespace sgs
