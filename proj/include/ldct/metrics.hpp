#pragma once

#include <string>
#include <vector>

#include "ldct/imaging.hpp"

namespace ldct::metrics {

/// Reported for identical images instead of +∞.
inline constexpr double kPsnrCapDb = 100.0;

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double mse(const imaging::Image& a, const imaging::Image& b);
/// 10·log10(1 / MSE) for unit dynamic range, capped at kPsnrCapDb.
double psnr(const imaging::Image& a, const imaging::Image& b);
double rmse(const imaging::Image& a, const imaging::Image& b);

/// Normalised 1-D Gaussian taps.
std::vector<double> gaussian_kernel(std::size_t size, double sigma);

/// Mean SSIM over every fully contained 11×11 Gaussian window (σ = 1.5).
double ssim(const imaging::Image& a, const imaging::Image& b);

struct Roi {
  std::size_t y = 0, x = 0, height = 0, width = 0;
};

/// |mean(lesion) − mean(background)| / std(background), population std.
double cnr(const imaging::Image& img, const Roi& lesion, const Roi& background);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};
Summary summarize(const std::vector<double>& values);

struct MetricReport {
  std::vector<std::string> names;
  std::vector<double> psnr_db;
  std::vector<double> rmse;  // unit scale; tables print ×100
  std::vector<double> ssim;  // fraction; tables print ×100
  std::vector<double> cnr;   // empty unless requested
  Summary psnr_summary, rmse_summary, ssim_summary, cnr_summary;

  std::size_t size() const { return psnr_db.size(); }
  void add(const std::string& name, double psnr_value, double rmse_value, double ssim_value);
  void finalize();
  std::string to_json() const;
  /// "PSNR,RMSE,SSIM" table with mean±std cells (RMSE ×10⁻², SSIM %).
  std::string to_csv() const;
};

MetricReport compare(const std::vector<imaging::Image>& outputs, const std::vector<imaging::Image>& references,
                     const std::vector<std::string>& names = {});

}  // namespace ldct::metrics
