#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ldct/array.hpp"
#include "ldct/esau_net.hpp"
#include "ldct/imaging.hpp"

// Feature clustering for anatomical-semantics label maps.
namespace ldct::interpret {

inline constexpr std::size_t kDefaultClusters = 5;
inline constexpr std::size_t kDefaultMaxIterations = 100;
inline constexpr std::size_t kPaletteSize = 16;

using Rgb = std::array<std::uint8_t, 3>;
/// Fixed label colours; label i is drawn with entry i.
const std::array<Rgb, kPaletteSize>& palette();

/// Activation entering the denoiser's output projection, (C, H, W).
Array extract_features(const esau::EsauNetParams& model, const imaging::Image& img);

struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> labels;  // row-major, each < k

  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
};

struct Clustering {
  LabelMap map;
  std::size_t iterations = 0;       // assignment passes performed
  std::vector<double> sse_history;  // after each assignment, then after the final centroid update
  double within_cluster_sse = 0.0;  // final value, in standardized feature units
  Array centroids;                  // (k, C), standardized units
};

/// Lloyd's algorithm over the C-dim pixel vectors of a (C, H, W) map after
/// per-channel standardization, seeded by k-means++. Stops when assignments
/// repeat or after `max_iterations` passes. k ≤ 255.
Clustering kmeans_cluster(const Array& features, std::size_t k, std::uint64_t seed,
                          std::size_t max_iterations = kDefaultMaxIterations);

/// Indexed-colour PNG using palette(); rejects k > kPaletteSize.
void render_label_map(const LabelMap& map, const std::filesystem::path& path);
/// Labels recovered by matching each pixel's colour against palette();
/// k is set to the largest label + 1.
LabelMap read_label_map(const std::filesystem::path& path);

/// {k, seed, iterations, within_cluster_sse, mean_sse_per_pixel}.
std::string sidecar_json(const Clustering& c);

/// Minimum-cost perfect matching on a square cost matrix; result[row] = column.
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost);

/// Fraction of pixels whose labels agree after the best one-to-one
/// relabeling of `b` onto `a`.
double matched_agreement(const LabelMap& a, const LabelMap& b);

}  // namespace ldct::interpret
