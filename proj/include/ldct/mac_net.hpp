#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldct/ops.hpp"
#include "ldct/params.hpp"

// Multi-scale anatomical contrastive network: a U-shaped encoder whose
// coarsest stage feeds only the global head (its skip into the decoder is
// removed), instantiated as an online network and an EMA target network.
namespace ldct::mac {

struct MacConfig {
  std::size_t base_width = 64;  // stage widths base·{1, 2, 4, 8, 8}
  std::size_t local_dim = 256;  // K, output of the local two-layer perceptron
  double leaky_slope = 0.2;
  double ema_momentum = 0.99;

  std::size_t global_dim() const { return 8 * base_width; }
  std::size_t local_feature_dim() const { return base_width; }
  std::size_t projection_dim() const { return global_dim() / 2; }
};

struct MacNetState {
  MacConfig config;
  ParamTree online;  // "enc.*", "proj.*", "pred.*", "local.*"
  ParamTree target;  // "enc.*", "proj.*"
};

struct MacFeatures {
  ad::Var global;  // (N, 8·base, H/16, W/16)
  ad::Var local;   // (N, base, H, W)
};

MacNetState init_mac(const MacConfig& config, std::uint64_t seed);

/// Encoder parameter names that only the global head depends on.
bool is_global_exclusive(const std::string& name);

/// Encoder forward using the "enc.*" entries of `tree`. Input (N, 1, H, W).
MacFeatures disentangled_forward(const ad::Var& image, const ParamTree& tree, const MacConfig& config);

// Two-layer perceptrons over row matrices.
ad::Var project(const ad::Var& rows, const ParamTree& tree, const MacConfig& config);     // proj.*
ad::Var predict(const ad::Var& rows, const ParamTree& tree, const MacConfig& config);     // pred.*
ad::Var local_embed(const ad::Var& rows, const ParamTree& tree, const MacConfig& config);  // local.*, L2-normalized

/// target ← m·target + (1 − m)·online for every target entry.
void ema_update(MacNetState& state, double momentum);
inline void ema_update(MacNetState& state) { ema_update(state, state.config.ema_momentum); }

}  // namespace ldct::mac
