#include "ldct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ldct/error.hpp"

namespace ldct::metrics {
namespace {

void check_pair(const imaging::Image& a, const imaging::Image& b) {
  require(a.same_shape(b), ErrorKind::kShape,
          "image shapes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
              std::to_string(b.height) + "x" + std::to_string(b.width));
  require(!a.values.empty(), ErrorKind::kShape, "empty image");
}

// "valid" separable Gaussian filter of a single plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * src[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

struct RoiStats {
  double mean = 0.0, std = 0.0;
};

RoiStats roi_stats(const imaging::Image& img, const Roi& r) {
  require(r.height > 0 && r.width > 0, ErrorKind::kInvalidArgument, "empty ROI");
  require(r.y + r.height <= img.height && r.x + r.width <= img.width, ErrorKind::kInvalidArgument,
          "ROI exceeds the image");
  std::vector<double> v;
  for (std::size_t y = r.y; y < r.y + r.height; ++y)
    for (std::size_t x = r.x; x < r.x + r.width; ++x) v.push_back(img.at(y, x));
  const auto s = summarize(v);
  return {s.mean, s.std};
}

bool overlaps(const Roi& a, const Roi& b) {
  return a.y < b.y + b.height && b.y < a.y + a.height && a.x < b.x + b.width && b.x < a.x + a.width;
}

std::string pm(const Summary& s, double scale, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << s.mean * scale << "±" << s.std * scale;
  return os.str();
}

}  // namespace

double mse(const imaging::Image& a, const imaging::Image& b) {
  check_pair(a, b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    total += d * d;
  }
  return total / static_cast<double>(a.values.size());
}

double psnr(const imaging::Image& a, const imaging::Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / m));
}

double rmse(const imaging::Image& a, const imaging::Image& b) { return std::sqrt(mse(a, b)); }

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  std::vector<double> k(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

double ssim(const imaging::Image& a, const imaging::Image& b) {
  check_pair(a, b);
  require(a.height >= kSsimWindow && a.width >= kSsimWindow, ErrorKind::kShape,
          "SSIM needs images of at least 11x11");
  const auto k = gaussian_kernel(kSsimWindow, kSsimSigma);
  const std::size_t h = a.height, w = a.width;
  std::vector<double> aa(a.values.size()), bb(a.values.size()), ab(a.values.size());
  for (std::size_t i = 0; i < aa.size(); ++i) {
    aa[i] = a.values[i] * a.values[i];
    bb[i] = b.values[i] * b.values[i];
    ab[i] = a.values[i] * b.values[i];
  }
  const auto mu_a = filter_valid(a.values, h, w, k), mu_b = filter_valid(b.values, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k), e_bb = filter_valid(bb, h, w, k), e_ab = filter_valid(ab, h, w, k);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
    const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + kSsimC1) * (2.0 * cov + kSsimC2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kSsimC1) * (var_a + var_b + kSsimC2));
  }
  return total / static_cast<double>(mu_a.size());
}

double cnr(const imaging::Image& img, const Roi& lesion, const Roi& background) {
  require(!overlaps(lesion, background), ErrorKind::kInvalidArgument, "lesion and background ROIs overlap");
  const auto l = roi_stats(img, lesion);
  const auto b = roi_stats(img, background);
  require(b.std > 0.0, ErrorKind::kNumerical, "background ROI has zero standard deviation");
  return std::abs(l.mean - b.mean) / b.std;
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) return {};
  // Equal values give exactly zero spread rather than a rounding residue.
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); }))
    return {values.front(), 0.0};
  double total = 0.0;
  for (double v : values) total += v;
  const double mean = total / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

void MetricReport::add(const std::string& name, double psnr_value, double rmse_value, double ssim_value) {
  names.push_back(name);
  psnr_db.push_back(psnr_value);
  rmse.push_back(rmse_value);
  ssim.push_back(ssim_value);
}

void MetricReport::finalize() {
  psnr_summary = summarize(psnr_db);
  rmse_summary = summarize(rmse);
  ssim_summary = summarize(ssim);
  cnr_summary = summarize(cnr);
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["count"] = size();
  auto summary = [](const Summary& s) { return nlohmann::ordered_json{{"mean", s.mean}, {"std", s.std}}; };
  j["psnr_db"] = summary(psnr_summary);
  j["rmse"] = summary(rmse_summary);
  j["ssim"] = summary(ssim_summary);
  if (!cnr.empty()) j["cnr"] = summary(cnr_summary);
  auto& rows = j["images"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < size(); ++i) {
    nlohmann::ordered_json row{{"name", names[i]}, {"psnr_db", psnr_db[i]}, {"rmse", rmse[i]}, {"ssim", ssim[i]}};
    if (i < cnr.size()) row["cnr"] = cnr[i];
    rows.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "PSNR [dB],RMSE [x1e-2],SSIM [%]\n";
  os << pm(psnr_summary, 1.0, 2) << ',' << pm(rmse_summary, 100.0, 2) << ',' << pm(ssim_summary, 100.0, 2) << '\n';
  return os.str();
}

MetricReport compare(const std::vector<imaging::Image>& outputs, const std::vector<imaging::Image>& references,
                     const std::vector<std::string>& names) {
  require(outputs.size() == references.size() && !outputs.empty(), ErrorKind::kInvalidArgument,
          "compare needs equally many outputs and references (at least one)");
  MetricReport r;
  for (std::size_t i = 0; i < outputs.size(); ++i)
    r.add(i < names.size() ? names[i] : std::to_string(i), psnr(outputs[i], references[i]),
          rmse(outputs[i], references[i]), ssim(outputs[i], references[i]));
  r.finalize();
  return r;
}

}  // namespace ldct::metrics
