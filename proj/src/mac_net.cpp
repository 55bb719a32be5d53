#include "ldct/mac_net.hpp"

#include "ldct/error.hpp"

namespace ldct::mac {
namespace {

constexpr std::size_t kStages = 4;

std::size_t stage_width(std::size_t base, std::size_t stage) {
  return base << std::min<std::size_t>(stage, kStages - 1);
}

void add_conv(ParamTree& t, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
              std::mt19937_64& rng, double gain = 1.0) {
  t.add(name + ".w", he_normal({out, in, k, k}, in * k * k, rng, gain));
  t.add(name + ".b", Array({out}, 0.0));
}

void add_block(ParamTree& t, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  add_conv(t, name + ".a", in, out, 3, rng);
  add_conv(t, name + ".b", out, out, 3, rng);
}

void add_mlp(ParamTree& t, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
             std::mt19937_64& rng) {
  t.add(name + ".fc1.w", he_normal({hidden, in}, in, rng));
  t.add(name + ".fc1.b", Array({hidden}, 0.0));
  t.add(name + ".fc2.w", he_normal({out, hidden}, hidden, rng, 0.5));
  t.add(name + ".fc2.b", Array({out}, 0.0));
}

ad::Var conv(const ad::Var& x, const ParamTree& t, const std::string& name, std::size_t stride, std::size_t pad) {
  return ad::conv2d(x, t.at(name + ".w"), &t.at(name + ".b"), stride, pad);
}

ad::Var block(const ad::Var& x, const ParamTree& t, const std::string& name, double slope) {
  auto h = ad::leaky_relu(conv(x, t, name + ".a", 1, 1), slope);
  return ad::leaky_relu(conv(h, t, name + ".b", 1, 1), slope);
}

ad::Var mlp(const ad::Var& rows, const ParamTree& t, const std::string& name, double slope) {
  auto h = ad::leaky_relu(ad::linear(rows, t.at(name + ".fc1.w"), t.at(name + ".fc1.b")), slope);
  return ad::linear(h, t.at(name + ".fc2.w"), t.at(name + ".fc2.b"));
}

}  // namespace

MacNetState init_mac(const MacConfig& config, std::uint64_t seed) {
  require(config.base_width >= 1 && config.local_dim >= 1, ErrorKind::kConfig, "MAC widths must be positive");
  require(config.ema_momentum >= 0.0 && config.ema_momentum <= 1.0, ErrorKind::kConfig,
          "EMA momentum must lie in [0, 1]");
  auto rng = derived_rng(seed, 0x6d61636e);
  const std::size_t m = config.base_width;
  ParamTree online;
  add_block(online, "enc.block0", 1, m, rng);
  for (std::size_t s = 1; s <= kStages; ++s) {
    const std::size_t in = stage_width(m, s - 1);
    add_conv(online, "enc.down" + std::to_string(s), in, in, 2, rng);
    add_block(online, "enc.block" + std::to_string(s), in, stage_width(m, s), rng);
  }
  // Decoder starts from stage 3; stage 4 feeds only the global head.
  for (std::size_t s = kStages - 1; s >= 1; --s) {
    const std::size_t below = stage_width(m, s), here = stage_width(m, s - 1);
    add_conv(online, "enc.up" + std::to_string(s), below, here, 1, rng);
    add_block(online, "enc.dec" + std::to_string(s - 1), 2 * here, here, rng);
  }
  const std::size_t g = config.global_dim(), z = config.projection_dim();
  add_mlp(online, "proj", g, g, z, rng);
  add_mlp(online, "pred", z, z, z, rng);
  add_mlp(online, "local", config.local_feature_dim(), config.local_dim, config.local_dim, rng);

  ParamTree target;
  for (const auto& e : online.entries())
    if (e.name.starts_with("enc.") || e.name.starts_with("proj.")) target.add(e.name, e.var.value());
  target.set_requires_grad(false);
  return {config, std::move(online), std::move(target)};
}

bool is_global_exclusive(const std::string& name) {
  const std::string last = std::to_string(kStages);
  return name.starts_with("enc.down" + last + ".") || name.starts_with("enc.block" + last + ".");
}

MacFeatures disentangled_forward(const ad::Var& image, const ParamTree& t, const MacConfig& config) {
  const auto& s = image.shape();
  require(s.size() == 4 && s[1] == 1, ErrorKind::kShape, "MAC encoder expects (N, 1, H, W)");
  require(s[2] % 16 == 0 && s[3] % 16 == 0 && s[2] > 0 && s[3] > 0, ErrorKind::kShape,
          "MAC encoder: spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
              " is not divisible by 16");
  const double slope = config.leaky_slope;
  std::vector<ad::Var> stages{block(image, t, "enc.block0", slope)};
  for (std::size_t k = 1; k <= kStages; ++k) {
    const auto down = conv(stages.back(), t, "enc.down" + std::to_string(k), 2, 0);
    stages.push_back(block(down, t, "enc.block" + std::to_string(k), slope));
  }
  auto f = stages[kStages - 1];
  for (std::size_t k = kStages - 1; k >= 1; --k) {
    const auto up = conv(ad::upsample_nearest2(f), t, "enc.up" + std::to_string(k), 1, 0);
    f = block(ad::concat_channels(up, stages[k - 1]), t, "enc.dec" + std::to_string(k - 1), slope);
  }
  return {stages[kStages], f};
}

ad::Var project(const ad::Var& rows, const ParamTree& t, const MacConfig& c) {
  return mlp(rows, t, "proj", c.leaky_slope);
}

ad::Var predict(const ad::Var& rows, const ParamTree& t, const MacConfig& c) {
  return mlp(rows, t, "pred", c.leaky_slope);
}

ad::Var local_embed(const ad::Var& rows, const ParamTree& t, const MacConfig& c) {
  return ad::l2_normalize_rows(mlp(rows, t, "local", c.leaky_slope));
}

void ema_update(MacNetState& state, double m) {
  require(m >= 0.0 && m <= 1.0, ErrorKind::kInvalidArgument, "EMA momentum must lie in [0, 1]");
  for (auto& e : state.target.entries()) {
    require(state.online.contains(e.name), ErrorKind::kShape, "target entry " + e.name + " has no online twin");
    const auto& o = state.online.at(e.name).value();
    auto& t = e.var.mutable_value();
    require(o.same_shape(t), ErrorKind::kShape, "EMA shape mismatch for " + e.name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = m * t[i] + (1.0 - m) * o[i];
  }
}

}  // namespace ldct::mac
