#pragma once

#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "ldct/imaging.hpp"
#include "ldct/mac_net.hpp"
#include "ldct/ops.hpp"

// Loss terms of the joint objective and the samplers that pick which
// patches/pixels they compare.
namespace ldct::contrastive {

struct GridIndex {
  std::size_t y = 0;
  std::size_t x = 0;
  friend bool operator==(const GridIndex&, const GridIndex&) = default;
  friend auto operator<=>(const GridIndex&, const GridIndex&) = default;
};

inline constexpr std::size_t kTopPositives = 4;
inline constexpr std::size_t kNegativeRadius = 7;
inline constexpr std::size_t kCandidatePool = 64;
inline constexpr double kDefaultTau = 0.07;
inline constexpr double kDefaultLambda = 10.0;

/// aᵀb / (‖a‖‖b‖). Zero vectors are rejected.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// C-dim vector of a (C, H, W) map at one grid cell.
std::vector<double> feature_at(const Array& map, GridIndex i);

struct PositiveSet {
  GridIndex query;
  std::vector<GridIndex> positives;
};

struct NegativeSet {
  GridIndex query;
  std::vector<GridIndex> negatives;
};

/// The `top_k` most cosine-similar in-bounds 8-neighbours of `i` in a
/// (C, h, w) global map. Ties keep row-major neighbour order.
PositiveSet neighbor_positive_match(const Array& global_map, GridIndex i, std::size_t top_k = kTopPositives);

/// Negatives for pixel `i` of a (C, H, W) local map: a seeded random pool of
/// at most `pool_size` pixels at Chebyshev distance 1..radius, reduced to
/// the `count` most similar to the feature at `i`.
NegativeSet hard_negative_sample(const Array& local_map, GridIndex i, std::size_t radius, std::size_t count,
                                 std::mt19937_64& rng, std::size_t pool_size = kCandidatePool);

/// Mean of the query vector and its positives.
std::vector<double> patch_aggregate(const Array& global_map, const PositiveSet& set);

/// Σ_i (2 − 2·cos(pred_i, target_i)) over rows of two (M, D) matrices.
double global_loss(const Array& predictions, const Array& target_projections);

/// −log(exp(q·p/τ) / (exp(q·p/τ) + Σ_j exp(q·n_j/τ))) for one query.
double local_infonce(std::span<const double> query, std::span<const double> positive,
                     const std::vector<std::vector<double>>& negatives, double tau);

/// MSE + (1 − SSIM).
double pixel_loss(const imaging::Image& output, const imaging::Image& target);
/// Differentiable batch version on (N, 1, H, W): batch MSE + (1 − mean SSIM).
ad::Var pixel_loss(const ad::Var& output, const ad::Var& target);
ad::Var ssim(const ad::Var& a, const ad::Var& b);

struct LossWeights {
  double lambda = kDefaultLambda;  // pixel term
  double global = 1.0;
  double local = 1.0;
};

struct LossComponents {
  double global = 0.0;
  double local = 0.0;
  double pixel = 0.0;
};

/// global·w_g + local·w_l + λ·pixel.
double total_loss(const LossComponents& c, const LossWeights& w = {});

// ---------------------------------------------------------------- sampling

/// `count` i.i.d. uniform draws from the foreground cells of `mask`.
std::vector<GridIndex> sample_queries(const imaging::Mask& mask, std::size_t count, std::mt19937_64& rng);

struct ImageSamples {
  std::vector<PositiveSet> patches;  // global-level queries with P(i)
  std::vector<NegativeSet> pixels;   // local-level queries with N_neg(i)
};

struct SampleCounts {
  std::size_t local_queries = 16;
  std::size_t global_queries = 64;
  std::size_t negatives = 24;
  std::size_t radius = kNegativeRadius;
  std::size_t pool = kCandidatePool;
};

/// Draws every index set for a batch from the target-network features.
/// `masks` are full-resolution foreground masks, one per batch image.
std::vector<ImageSamples> draw_samples(const mac::MacFeatures& target, const std::vector<imaging::Mask>& masks,
                                       const SampleCounts& counts, std::mt19937_64& rng);

/// One line per query: "<kind> <batch> <y>,<x> pos|neg <y>,<x> ...".
void write_sample_dump(std::ostream& os, const std::vector<ImageSamples>& samples);

struct MacLosses {
  ad::Var global;  // summed over queries, averaged over batch images
  ad::Var local;
};

/// Assembles both contrastive losses for a batch. Gradients reach the
/// online tree (and whatever produced `online`); target features and the
/// target projector are constants.
MacLosses mac_losses(const mac::MacFeatures& online, const mac::MacFeatures& target,
                     const std::vector<ImageSamples>& samples, const mac::MacNetState& state, double tau);

}  // namespace ldct::contrastive
