#pragma once

#include <cstdint>
#include <string>

#include "ldct/imaging.hpp"
#include "ldct/ops.hpp"
#include "ldct/params.hpp"

// U-Net denoiser whose every level runs channel-wise multi-head
// self-attention followed by a convolution block with a 1×1 identity path.
namespace ldct::esau {

struct EsauConfig {
  std::size_t base_width = 64;  // channels at full resolution, doubled per down-sampling
  std::size_t heads = 4;
  double leaky_slope = 0.2;
  // Output is the input plus the learned correction.
  bool global_residual = true;
};

inline constexpr std::size_t kDownsamplings = 4;
inline constexpr std::size_t kSpatialMultiple = std::size_t{1} << kDownsamplings;

/// Views (shared leaves) into a parameter tree.
struct AttentionParams {
  ad::Var qkv_pointwise;  // (3C, C, 1, 1)
  ad::Var qkv_depthwise;  // (3C, 1, 3, 3)
  ad::Var alpha;          // (heads)
  ad::Var output;         // (C, C, 1, 1), the w(·) projection
  std::size_t heads = 1;
};

enum class Resample { kNone, kDown, kUp };

struct EsauLevelParams {
  AttentionParams attention;
  ad::Var conv1_w, conv1_b;  // 3×3, in → out
  ad::Var conv2_w, conv2_b;  // 3×3, out → out
  ad::Var iden_w, iden_b;    // 1×1, in → out
  Resample resample = Resample::kNone;
  ad::Var resample_w, resample_b;  // 2×2 stride-2 (down) or 1×1 after nearest ×2 (up)
  double leaky_slope = 0.2;
};

struct EsauNetParams {
  EsauConfig config;
  ParamTree tree;

  EsauLevelParams level(const std::string& name) const;
};

/// Names of the levels in forward order.
std::vector<std::string> level_names();

/// Adds the parameters of one level to `tree` under `prefix`.
void add_level_params(ParamTree& tree, const std::string& prefix, std::size_t in_channels, std::size_t out_channels,
                      std::size_t heads, Resample resample, std::mt19937_64& rng);
EsauLevelParams level_view(const ParamTree& tree, const std::string& prefix, std::size_t heads, Resample resample,
                           double leaky_slope);

EsauNetParams init_esau(const EsauConfig& config, std::uint64_t seed);

/// F + w(Vᵀ softmax(K Qᵀ / α)) per head; F is (N, C, H, W).
ad::Var channel_attention(const ad::Var& features, const AttentionParams& p, ad::AttentionTrace* trace = nullptr);

/// Conv(attention(F)) + Iden(F), before resampling.
ad::Var level_body(const ad::Var& features, const EsauLevelParams& p, ad::AttentionTrace* trace = nullptr);
ad::Var apply_resample(const ad::Var& features, const EsauLevelParams& p);
/// Full level: resample(Conv(F') + Iden(F)).
ad::Var esau_level(const ad::Var& features, const EsauLevelParams& p, ad::AttentionTrace* trace = nullptr);

struct EsauOutput {
  ad::Var denoised;  // (N, 1, H, W)
  ad::Var features;  // activation entering the output projection, (N, base_width, H, W)
};

/// Batched forward pass on (N, 1, H, W) with H, W divisible by 16.
EsauOutput esau_forward(const ad::Var& input, const EsauNetParams& p, ad::AttentionTrace* trace = nullptr);

/// Single-image convenience wrapper; no graph is kept.
imaging::Image esau_forward(const imaging::Image& input, const EsauNetParams& p);

ad::Var image_to_var(const imaging::Image& img);
imaging::Image var_to_image(const ad::Var& v, std::size_t index = 0);

}  // namespace ldct::esau
