#include "ldct/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ldct/error.hpp"
#include "ldct/metrics.hpp"

namespace ldct::contrastive {
namespace {

void require_map(const Array& map, const char* what) {
  require(map.rank() == 3, ErrorKind::kShape, std::string(what) + " must be a (C, H, W) feature map");
}

void require_inside(const Array& map, GridIndex i) {
  require(i.y < map.dim(1) && i.x < map.dim(2), ErrorKind::kInvalidArgument,
          "index (" + std::to_string(i.y) + ", " + std::to_string(i.x) + ") outside a " +
              std::to_string(map.dim(1)) + "x" + std::to_string(map.dim(2)) + " grid");
}

Array batch_item(const Array& batch, std::size_t n) {
  const auto& s = batch.shape();
  const std::size_t per = s[1] * s[2] * s[3];
  return Array({s[1], s[2], s[3]},
               std::vector<double>(batch.storage().begin() + static_cast<std::ptrdiff_t>(n * per),
                                   batch.storage().begin() + static_cast<std::ptrdiff_t>((n + 1) * per)));
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kShape, "cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, ErrorKind::kNumerical, "cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> feature_at(const Array& map, GridIndex i) {
  require_map(map, "feature map");
  require_inside(map, i);
  std::vector<double> v(map.dim(0));
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = map.at(c, i.y, i.x);
  return v;
}

PositiveSet neighbor_positive_match(const Array& map, GridIndex i, std::size_t top_k) {
  require_map(map, "global map");
  require_inside(map, i);
  const auto query = feature_at(map, i);
  struct Candidate {
    GridIndex at;
    double similarity;
  };
  std::vector<Candidate> neighbours;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dy == 0 && dx == 0) continue;
      const auto y = static_cast<std::ptrdiff_t>(i.y) + dy, x = static_cast<std::ptrdiff_t>(i.x) + dx;
      if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(map.dim(1)) ||
          x >= static_cast<std::ptrdiff_t>(map.dim(2)))
        continue;
      const GridIndex j{static_cast<std::size_t>(y), static_cast<std::size_t>(x)};
      neighbours.push_back({j, cosine_similarity(query, feature_at(map, j))});
    }
  std::stable_sort(neighbours.begin(), neighbours.end(),
                   [](const Candidate& a, const Candidate& b) { return a.similarity > b.similarity; });
  PositiveSet out{i, {}};
  for (std::size_t k = 0; k < std::min(top_k, neighbours.size()); ++k) out.positives.push_back(neighbours[k].at);
  return out;
}

NegativeSet hard_negative_sample(const Array& map, GridIndex i, std::size_t radius, std::size_t count,
                                 std::mt19937_64& rng, std::size_t pool_size) {
  require_map(map, "local map");
  require_inside(map, i);
  require(radius >= 1, ErrorKind::kInvalidArgument, "negative radius must be >= 1");
  const std::size_t h = map.dim(1), w = map.dim(2);
  std::vector<GridIndex> eligible;
  for (std::size_t y = i.y >= radius ? i.y - radius : 0; y <= std::min(h - 1, i.y + radius); ++y)
    for (std::size_t x = i.x >= radius ? i.x - radius : 0; x <= std::min(w - 1, i.x + radius); ++x)
      if (y != i.y || x != i.x) eligible.push_back({y, x});
  require(!eligible.empty(), ErrorKind::kInvalidArgument, "no pixel within the negative radius");

  std::vector<GridIndex> pool = eligible;
  if (pool.size() > pool_size) {
    // Partial Fisher–Yates, then restore row-major order for stable ranking.
    for (std::size_t k = 0; k < pool_size; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(pool_size);
    std::sort(pool.begin(), pool.end());
  }

  const auto anchor = feature_at(map, i);
  std::vector<double> sim(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) sim[k] = cosine_similarity(anchor, feature_at(map, pool[k]));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });

  NegativeSet out{i, {}};
  for (std::size_t k = 0; k < std::min(count, order.size()); ++k) out.negatives.push_back(pool[order[k]]);
  return out;
}

std::vector<double> patch_aggregate(const Array& map, const PositiveSet& set) {
  require(!set.positives.empty(), ErrorKind::kInvalidArgument, "patch_aggregate: empty positive set");
  auto acc = feature_at(map, set.query);
  for (const auto& j : set.positives) {
    const auto v = feature_at(map, j);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += v[c];
  }
  for (auto& v : acc) v /= static_cast<double>(set.positives.size() + 1);
  return acc;
}

double global_loss(const Array& pred, const Array& target) {
  require(pred.rank() == 2 && pred.same_shape(target), ErrorKind::kShape, "global_loss: (M, D) shapes must match");
  require(pred.dim(0) >= 1, ErrorKind::kInvalidArgument, "global_loss needs at least one query");
  const std::size_t d = pred.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < pred.dim(0); ++r) {
    const std::span<const double> p(pred.data() + r * d, d), t(target.data() + r * d, d);
    total += 2.0 - 2.0 * cosine_similarity(p, t);
  }
  return total;
}

double local_infonce(std::span<const double> query, std::span<const double> positive,
                     const std::vector<std::vector<double>>& negatives, double tau) {
  require(tau > 0.0, ErrorKind::kInvalidArgument, "InfoNCE temperature must be positive");
  auto dot = [](std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::kShape, "InfoNCE: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  const double pos = dot(query, positive) / tau;
  std::vector<double> logits{pos};
  for (const auto& n : negatives) logits.push_back(dot(query, n) / tau);
  const double peak = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - peak);
  return peak + std::log(z) - pos;
}

double pixel_loss(const imaging::Image& output, const imaging::Image& target) {
  return metrics::mse(output, target) + (1.0 - metrics::ssim(output, target));
}

ad::Var ssim(const ad::Var& a, const ad::Var& b) {
  require(a.value().same_shape(b.value()) && a.shape().size() == 4, ErrorKind::kShape,
          "ssim: inputs must share an (N, C, H, W) shape");
  const auto k = metrics::gaussian_kernel(metrics::kSsimWindow, metrics::kSsimSigma);
  using namespace ad;
  const auto mu_a = separable_filter_valid(a, k), mu_b = separable_filter_valid(b, k);
  const auto mu_aa = mul(mu_a, mu_a), mu_bb = mul(mu_b, mu_b), mu_ab = mul(mu_a, mu_b);
  const auto var_a = sub(separable_filter_valid(mul(a, a), k), mu_aa);
  const auto var_b = sub(separable_filter_valid(mul(b, b), k), mu_bb);
  const auto cov = sub(separable_filter_valid(mul(a, b), k), mu_ab);
  const auto num = mul(add_scalar(scale(mu_ab, 2.0), metrics::kSsimC1), add_scalar(scale(cov, 2.0), metrics::kSsimC2));
  const auto den = mul(add_scalar(add(mu_aa, mu_bb), metrics::kSsimC1), add_scalar(add(var_a, var_b), metrics::kSsimC2));
  return mean(div(num, den));
}

ad::Var pixel_loss(const ad::Var& output, const ad::Var& target) {
  return ad::add(ad::mse(output, target), ad::add_scalar(ad::scale(ssim(output, target), -1.0), 1.0));
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  require(w.lambda >= 0.0, ErrorKind::kInvalidArgument, "lambda must be >= 0");
  return w.global * c.global + w.local * c.local + w.lambda * c.pixel;
}

std::vector<GridIndex> sample_queries(const imaging::Mask& mask, std::size_t count, std::mt19937_64& rng) {
  std::vector<GridIndex> fg;
  for (std::size_t y = 0; y < mask.height; ++y)
    for (std::size_t x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) fg.push_back({y, x});
  require(!fg.empty(), ErrorKind::kEmptyForeground, "cannot sample queries: mask has no foreground");
  std::uniform_int_distribution<std::size_t> pick(0, fg.size() - 1);
  std::vector<GridIndex> out(count);
  for (auto& q : out) q = fg[pick(rng)];
  return out;
}

std::vector<ImageSamples> draw_samples(const mac::MacFeatures& target, const std::vector<imaging::Mask>& masks,
                                       const SampleCounts& counts, std::mt19937_64& rng) {
  const auto& gs = target.global.shape();
  const auto& ls = target.local.shape();
  require(masks.size() == ls[0], ErrorKind::kShape, "one foreground mask per batch image required");
  std::vector<ImageSamples> out(ls[0]);
  for (std::size_t n = 0; n < ls[0]; ++n) {
    require(masks[n].height == ls[2] && masks[n].width == ls[3], ErrorKind::kShape, "mask/feature size mismatch");
    const auto global_map = batch_item(target.global.value(), n);
    const auto local_map = batch_item(target.local.value(), n);
    const auto patch_mask = imaging::pool_mask(masks[n], ls[2] / gs[2]);
    for (const auto& q : sample_queries(patch_mask, counts.global_queries, rng))
      out[n].patches.push_back(neighbor_positive_match(global_map, q));
    for (const auto& q : sample_queries(masks[n], counts.local_queries, rng))
      out[n].pixels.push_back(hard_negative_sample(local_map, q, counts.radius, counts.negatives, rng, counts.pool));
  }
  return out;
}

void write_sample_dump(std::ostream& os, const std::vector<ImageSamples>& samples) {
  auto cell = [&os](GridIndex g) { os << ' ' << g.y << ',' << g.x; };
  for (std::size_t n = 0; n < samples.size(); ++n) {
    for (const auto& p : samples[n].patches) {
      os << "patch " << n;
      cell(p.query);
      os << " pos";
      for (const auto& j : p.positives) cell(j);
      os << '\n';
    }
    for (const auto& p : samples[n].pixels) {
      os << "pixel " << n;
      cell(p.query);
      os << " neg";
      for (const auto& j : p.negatives) cell(j);
      os << '\n';
    }
  }
}

MacLosses mac_losses(const mac::MacFeatures& online, const mac::MacFeatures& target,
                     const std::vector<ImageSamples>& samples, const mac::MacNetState& state, double tau) {
  require(!samples.empty(), ErrorKind::kInvalidArgument, "mac_losses: no samples");
  const double per_image = 1.0 / static_cast<double>(samples.size());

  std::vector<std::vector<ad::PixelRef>> patch_groups;
  std::vector<std::vector<ad::PixelRef>> query_px, positive_px, negative_px;
  std::vector<std::size_t> offsets{0};
  for (std::size_t n = 0; n < samples.size(); ++n) {
    for (const auto& p : samples[n].patches) {
      std::vector<ad::PixelRef> g{{n, p.query.y, p.query.x}};
      for (const auto& j : p.positives) g.push_back({n, j.y, j.x});
      patch_groups.push_back(std::move(g));
    }
    for (const auto& p : samples[n].pixels) {
      query_px.push_back({{n, p.query.y, p.query.x}});
      positive_px.push_back({{n, p.query.y, p.query.x}});
      for (const auto& j : p.negatives) negative_px.push_back({{n, j.y, j.x}});
      offsets.push_back(negative_px.size());
    }
  }
  require(!patch_groups.empty() && !query_px.empty(), ErrorKind::kInvalidArgument,
          "mac_losses: need at least one global and one local query");

  const auto& cfg = state.config;
  const auto online_patch = ad::gather_mean(online.global, patch_groups);
  const auto target_patch = ad::gather_mean(target.global, patch_groups);
  const auto prediction = mac::predict(mac::project(online_patch, state.online, cfg), state.online, cfg);
  const auto target_projection = mac::project(target_patch, state.target, cfg);
  auto global = ad::scale(ad::cosine_alignment_loss(prediction, ad::detach(target_projection)), per_image);

  const auto q = mac::local_embed(ad::gather_mean(online.local, query_px), state.online, cfg);
  const auto p = mac::local_embed(ad::gather_mean(target.local, positive_px), state.online, cfg);
  ad::Var negatives;
  if (!negative_px.empty()) negatives = mac::local_embed(ad::gather_mean(target.local, negative_px), state.online, cfg);
  auto local = ad::scale(ad::info_nce(q, p, negatives, offsets, tau), per_image);
  return {global, local};
}

}  // namespace ldct::contrastive
