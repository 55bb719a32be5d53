#include "ldct/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "ldct/error.hpp"
#include "ldct/params.hpp"
#include "png_io.hpp"

namespace ldct::interpret {
namespace {

constexpr std::uint64_t kSeedingStream = 0x6b6d6e73;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

}  // namespace

const std::array<Rgb, kPaletteSize>& palette() {
  static const std::array<Rgb, kPaletteSize> colours{{{230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
                                                      {245, 130, 48},  {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
                                                      {210, 245, 60},  {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
                                                      {170, 110, 40},  {255, 250, 200}, {128, 0, 0},    {0, 0, 128}}};
  return colours;
}

Array extract_features(const esau::EsauNetParams& model, const imaging::Image& img) {
  const auto f = esau::esau_forward(esau::image_to_var(img), model).features.value();
  const auto& s = f.shape();
  return f.reshaped({s[1], s[2], s[3]});
}

Clustering kmeans_cluster(const Array& features, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  require(features.rank() == 3, ErrorKind::kShape, "kmeans_cluster expects a (C, H, W) feature map");
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2), n = h * w;
  require(k >= 1 && k <= 255, ErrorKind::kInvalidArgument, "k must lie in [1, 255]");
  require(k <= n, ErrorKind::kInvalidArgument,
          "k = " + std::to_string(k) + " exceeds the pixel count " + std::to_string(n));
  require(max_iterations >= 1, ErrorKind::kInvalidArgument, "max_iterations must be >= 1");

  // Pixel-major, per-channel standardized copy.
  std::vector<double> x(n * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = features.data() + ch * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += plane[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (plane[i] - mean) * (plane[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
    for (std::size_t i = 0; i < n; ++i) x[i * c + ch] = (plane[i] - mean) * inv;
  }
  auto row = [&](std::size_t i) { return x.data() + i * c; };

  // k-means++ seeding.
  auto rng = derived_rng(seed, kSeedingStream);
  std::vector<double> centroids(k * c);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = static_cast<std::size_t>(rng() % n);
  for (std::size_t j = 0; j < k; ++j) {
    std::copy_n(row(chosen), c, centroids.data() + j * c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(row(i), centroids.data() + j * c, c));
      total += nearest[i];
    }
    if (j + 1 == k) break;
    if (total <= 0.0) {
      chosen = static_cast<std::size_t>(rng() % n);
      continue;
    }
    const double target = uniform01(rng) * total;
    double acc = 0.0;
    chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += nearest[i];
      if (acc > target && nearest[i] > 0.0) {
        chosen = i;
        break;
      }
    }
  }

  Clustering out;
  out.map = {h, w, k, seed, std::vector<std::uint8_t>(n, 0)};
  std::vector<std::size_t> assign(n, k);  // k = unassigned
  auto sse_of = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += squared_distance(row(i), centroids.data() + assign[i] * c, c);
    return s;
  };

  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(row(i), centroids.data(), c);
      for (std::size_t j = 1; j < k; ++j) {
        const double d = squared_distance(row(i), centroids.data() + j * c, c);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    ++out.iterations;
    out.sse_history.push_back(sse_of());
    if (!changed) break;

    std::vector<double> sums(k * c, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t d = 0; d < c; ++d) sums[assign[i] * c + d] += row(i)[d];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (counts[j] > 0)  // an emptied cluster keeps its centroid
        for (std::size_t d = 0; d < c; ++d) centroids[j * c + d] = sums[j * c + d] / static_cast<double>(counts[j]);
    out.sse_history.push_back(sse_of());
  }

  for (std::size_t i = 0; i < n; ++i) out.map.labels[i] = static_cast<std::uint8_t>(assign[i]);
  out.within_cluster_sse = out.sse_history.back();
  out.centroids = Array({k, c}, std::move(centroids));
  return out;
}

void render_label_map(const LabelMap& map, const std::filesystem::path& path) {
  require(map.k >= 1 && map.k <= kPaletteSize, ErrorKind::kInvalidArgument,
          "render_label_map: k = " + std::to_string(map.k) + " exceeds the " + std::to_string(kPaletteSize) +
              "-colour palette");
  require(map.labels.size() == map.height * map.width, ErrorKind::kShape, "render_label_map: label count mismatch");
  png::Indexed img{map.height, map.width, map.labels, {}};
  for (const auto label : map.labels)
    require(label < map.k, ErrorKind::kInvalidArgument, "render_label_map: label out of range");
  img.palette.assign(palette().begin(), palette().begin() + static_cast<std::ptrdiff_t>(map.k));
  png::write_indexed(path, img);
}

LabelMap read_label_map(const std::filesystem::path& path) {
  const auto img = png::read_indexed(path);
  LabelMap map{img.height, img.width, 0, 0, std::vector<std::uint8_t>(img.indices.size())};
  for (std::size_t i = 0; i < img.indices.size(); ++i) {
    require(img.indices[i] < img.palette.size(), ErrorKind::kFormat, "label map: index outside the palette");
    const auto& colour = img.palette[img.indices[i]];
    const auto it = std::find(palette().begin(), palette().end(), colour);
    require(it != palette().end(), ErrorKind::kFormat, "label map: colour not in the label palette");
    map.labels[i] = static_cast<std::uint8_t>(it - palette().begin());
    map.k = std::max<std::size_t>(map.k, map.labels[i] + 1u);
  }
  return map;
}

std::string sidecar_json(const Clustering& c) {
  const std::size_t n = c.map.labels.size();
  nlohmann::ordered_json j{{"k", c.map.k},
                           {"seed", c.map.seed},
                           {"iterations", c.iterations},
                           {"within_cluster_sse", c.within_cluster_sse},
                           {"mean_sse_per_pixel", n ? c.within_cluster_sse / static_cast<double>(n) : 0.0}};
  return j.dump(2) + "\n";
}

std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  for (const auto& r : cost) require(r.size() == n, ErrorKind::kShape, "hungarian: cost matrix must be square");
  if (n == 0) return {};
  // Potentials method, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j)
        if (!used[j]) {
          const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> result(n);
  for (std::size_t j = 1; j <= n; ++j) result[p[j] - 1] = j - 1;
  return result;
}

double matched_agreement(const LabelMap& a, const LabelMap& b) {
  require(a.height == b.height && a.width == b.width && !a.labels.empty(), ErrorKind::kShape,
          "matched_agreement: label maps differ in shape");
  const std::size_t k = std::max(a.k, b.k);
  std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < a.labels.size(); ++i) cost[b.labels[i]][a.labels[i]] -= 1.0;
  const auto match = hungarian(cost);
  double agree = 0.0;
  for (std::size_t r = 0; r < k; ++r) agree -= cost[r][match[r]];
  return agree / static_cast<double>(a.labels.size());
}

}  // namespace ldct::interpret
