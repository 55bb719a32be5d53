#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ldct/autodiff.hpp"

// Differentiable tensor operations. Image-like tensors are NCHW; row
// matrices are (rows, features).
namespace ldct::ad {

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var leaky_relu(const Var& a, double slope);

// Reductions to a rank-0 scalar.
Var sum(const Var& a);
Var mean(const Var& a);
Var mse(const Var& a, const Var& b);

/// Dense 2-D convolution. x: (N,C,H,W); w: (O,C,k,k); optional bias (O).
Var conv2d(const Var& x, const Var& w, const Var* bias, std::size_t stride, std::size_t pad);

/// Per-channel k×k convolution, stride 1. w: (C,1,k,k); "same" padding k/2.
Var depthwise_conv2d(const Var& x, const Var& w);

Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);

/// Separable filtering of each channel with a fixed kernel, no padding
/// ("valid" output of size H-k+1 × W-k+1). The kernel is a constant.
Var separable_filter_valid(const Var& x, const std::vector<double>& kernel);

struct AttentionTrace {
  struct MapInfo {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double max_row_sum_error = 0.0;
  };
  std::vector<MapInfo> maps;  // one per (sample, head)
  std::size_t total_map_elements() const;
};

/// Channel-wise multi-head attention core. qkv stacks Q, K, V along the
/// channel axis: (N, 3C, H, W). For each head with c = C/heads channels,
///   A = softmax_rows(K Qᵀ / alpha[h])      (c × c)
///   out = Aᵀ V                             (c × HW), i.e. (Vᵀ A)ᵀ
/// Returns (N, C, H, W). With `normalize_qk`, every Q and K row is first
/// scaled to unit L2 norm over the H·W pixels, bounding the logits by
/// 1/|alpha| whatever the resolution.
Var channel_attention_core(const Var& qkv, const Var& alpha, std::size_t heads,
                           AttentionTrace* trace = nullptr, bool normalize_qk = false);

inline constexpr double kQkNormFloor = 1e-12;

struct PixelRef {
  std::size_t n = 0;
  std::size_t y = 0;
  std::size_t x = 0;
  friend bool operator==(const PixelRef&, const PixelRef&) = default;
};

/// Row g of the result is the mean over group g of the C-dim feature vectors
/// of x (N,C,H,W) at the referenced pixels. Result (groups, C).
Var gather_mean(const Var& x, const std::vector<std::vector<PixelRef>>& groups);

/// x (M,K) · wᵀ + b, w (O,K), b (O).
Var linear(const Var& x, const Var& w, const Var& b);

/// Rows scaled to unit L2 norm; a zero row is a numerical error.
Var l2_normalize_rows(const Var& x);

/// Σ_i (2 − 2·cos(pred_i, target_i)) over rows.
Var cosine_alignment_loss(const Var& pred, const Var& target);

/// Σ_i −log softmax over [q_i·p_i, q_i·n_j ...] / tau at the positive slot.
/// Negatives of query i occupy rows [offsets[i], offsets[i+1]) of `negatives`.
Var info_nce(const Var& queries, const Var& positives, const Var& negatives,
             const std::vector<std::size_t>& offsets, double tau);

}  // namespace ldct::ad
