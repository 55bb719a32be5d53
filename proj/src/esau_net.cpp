#include "ldct/esau_net.hpp"

#include "ldct/error.hpp"

namespace ldct::esau {
namespace {

std::size_t level_width(std::size_t base, std::size_t depth) { return base << depth; }

struct LevelLayout {
  std::string name;
  std::size_t in, out;
  Resample resample;
};

std::vector<LevelLayout> layout(std::size_t w) {
  std::vector<LevelLayout> levels;
  for (std::size_t i = 0; i < kDownsamplings; ++i)
    levels.push_back({"enc" + std::to_string(i), level_width(w, i), level_width(w, i), Resample::kDown});
  const std::size_t deepest = level_width(w, kDownsamplings);
  levels.push_back({"mid", deepest, deepest, Resample::kUp});
  for (std::size_t j = kDownsamplings; j-- > 0;) {
    const std::size_t c = level_width(w, j);
    levels.push_back({"dec" + std::to_string(j), 2 * c, c, j > 0 ? Resample::kUp : Resample::kNone});
  }
  return levels;
}

}  // namespace

std::vector<std::string> level_names() {
  std::vector<std::string> names;
  for (const auto& l : layout(1)) names.push_back(l.name);
  return names;
}

void add_level_params(ParamTree& tree, const std::string& prefix, std::size_t in, std::size_t out,
                      std::size_t heads, Resample resample, std::mt19937_64& rng) {
  require(heads >= 1 && in % heads == 0, ErrorKind::kShape,
          prefix + ": head count " + std::to_string(heads) + " does not divide " + std::to_string(in) + " channels");
  tree.add(prefix + ".attn.qkv", he_normal({3 * in, in, 1, 1}, in, rng));
  tree.add(prefix + ".attn.dw", he_normal({3 * in, 1, 3, 3}, 9, rng, 0.5));
  tree.add(prefix + ".attn.alpha", Array({heads}, 1.0));
  tree.add(prefix + ".attn.proj", he_normal({in, in, 1, 1}, in, rng, 0.5));
  tree.add(prefix + ".conv1.w", he_normal({out, in, 3, 3}, 9 * in, rng));
  tree.add(prefix + ".conv1.b", Array({out}, 0.0));
  tree.add(prefix + ".conv2.w", he_normal({out, out, 3, 3}, 9 * out, rng, 0.5));
  tree.add(prefix + ".conv2.b", Array({out}, 0.0));
  tree.add(prefix + ".iden.w", he_normal({out, in, 1, 1}, in, rng, 0.5));
  tree.add(prefix + ".iden.b", Array({out}, 0.0));
  if (resample == Resample::kDown) {
    tree.add(prefix + ".down.w", he_normal({2 * out, out, 2, 2}, 4 * out, rng));
    tree.add(prefix + ".down.b", Array({2 * out}, 0.0));
  } else if (resample == Resample::kUp) {
    tree.add(prefix + ".up.w", he_normal({out / 2, out, 1, 1}, out, rng));
    tree.add(prefix + ".up.b", Array({out / 2}, 0.0));
  }
}

EsauLevelParams level_view(const ParamTree& tree, const std::string& prefix, std::size_t heads, Resample resample,
                           double leaky_slope) {
  EsauLevelParams p;
  p.attention = {tree.at(prefix + ".attn.qkv"), tree.at(prefix + ".attn.dw"), tree.at(prefix + ".attn.alpha"),
                 tree.at(prefix + ".attn.proj"), heads};
  p.conv1_w = tree.at(prefix + ".conv1.w");
  p.conv1_b = tree.at(prefix + ".conv1.b");
  p.conv2_w = tree.at(prefix + ".conv2.w");
  p.conv2_b = tree.at(prefix + ".conv2.b");
  p.iden_w = tree.at(prefix + ".iden.w");
  p.iden_b = tree.at(prefix + ".iden.b");
  p.resample = resample;
  if (resample == Resample::kDown) {
    p.resample_w = tree.at(prefix + ".down.w");
    p.resample_b = tree.at(prefix + ".down.b");
  } else if (resample == Resample::kUp) {
    p.resample_w = tree.at(prefix + ".up.w");
    p.resample_b = tree.at(prefix + ".up.b");
  }
  p.leaky_slope = leaky_slope;
  return p;
}

EsauLevelParams EsauNetParams::level(const std::string& name) const {
  for (const auto& l : layout(config.base_width))
    if (l.name == name) return level_view(tree, name, config.heads, l.resample, config.leaky_slope);
  fail(ErrorKind::kInvalidArgument, "unknown level " + name);
}

EsauNetParams init_esau(const EsauConfig& config, std::uint64_t seed) {
  require(config.base_width >= 1 && config.base_width % config.heads == 0, ErrorKind::kConfig,
          "base width must be a positive multiple of the head count");
  EsauNetParams p{config, {}};
  auto rng = derived_rng(seed, 0x65736175);
  const std::size_t w = config.base_width;
  p.tree.add("in.w", he_normal({w, 1, 1, 1}, 1, rng));
  p.tree.add("in.b", Array({w}, 0.0));
  for (const auto& l : layout(w)) add_level_params(p.tree, l.name, l.in, l.out, config.heads, l.resample, rng);
  // Zero output projection: with the global residual the untrained network is the identity.
  p.tree.add("out.w", Array({1, w, 1, 1}, 0.0));
  p.tree.add("out.b", Array({1}, 0.0));
  return p;
}

ad::Var channel_attention(const ad::Var& features, const AttentionParams& p, ad::AttentionTrace* trace) {
  const auto& s = features.shape();
  require(s.size() == 4, ErrorKind::kShape, "channel_attention expects (N, C, H, W)");
  require(p.qkv_pointwise.shape() == Shape{3 * s[1], s[1], 1, 1}, ErrorKind::kShape,
          "channel_attention: parameters expect " + std::to_string(p.qkv_pointwise.shape()[1]) + " channels, got " +
              std::to_string(s[1]));
  const auto qkv = ad::depthwise_conv2d(ad::conv2d(features, p.qkv_pointwise, nullptr, 1, 0), p.qkv_depthwise);
  const auto mixed = ad::channel_attention_core(qkv, p.alpha, p.heads, trace, /*normalize_qk=*/true);
  return ad::add(ad::conv2d(mixed, p.output, nullptr, 1, 0), features);
}

ad::Var level_body(const ad::Var& features, const EsauLevelParams& p, ad::AttentionTrace* trace) {
  const auto attended = channel_attention(features, p.attention, trace);
  auto conv = ad::conv2d(attended, p.conv1_w, &p.conv1_b, 1, 1);
  conv = ad::conv2d(ad::leaky_relu(conv, p.leaky_slope), p.conv2_w, &p.conv2_b, 1, 1);
  return ad::add(conv, ad::conv2d(features, p.iden_w, &p.iden_b, 1, 0));
}

ad::Var apply_resample(const ad::Var& features, const EsauLevelParams& p) {
  switch (p.resample) {
    case Resample::kDown: return ad::conv2d(features, p.resample_w, &p.resample_b, 2, 0);
    case Resample::kUp: return ad::conv2d(ad::upsample_nearest2(features), p.resample_w, &p.resample_b, 1, 0);
    case Resample::kNone: break;
  }
  return features;
}

ad::Var esau_level(const ad::Var& features, const EsauLevelParams& p, ad::AttentionTrace* trace) {
  return apply_resample(level_body(features, p, trace), p);
}

EsauOutput esau_forward(const ad::Var& input, const EsauNetParams& p, ad::AttentionTrace* trace) {
  const auto& s = input.shape();
  require(s.size() == 4 && s[1] == 1, ErrorKind::kShape, "esau_forward expects (N, 1, H, W)");
  require(s[2] % kSpatialMultiple == 0 && s[3] % kSpatialMultiple == 0 && s[2] > 0 && s[3] > 0, ErrorKind::kShape,
          "esau_forward: spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
              " is not divisible by 16");

  auto f = ad::conv2d(input, p.tree.at("in.w"), &p.tree.at("in.b"), 1, 0);
  std::vector<ad::Var> skips;
  for (std::size_t i = 0; i < kDownsamplings; ++i) {
    const auto lv = p.level("enc" + std::to_string(i));
    skips.push_back(level_body(f, lv, trace));
    f = apply_resample(skips.back(), lv);
  }
  f = esau_level(f, p.level("mid"), trace);
  for (std::size_t j = kDownsamplings; j-- > 0;) {
    const auto lv = p.level("dec" + std::to_string(j));
    f = esau_level(ad::concat_channels(f, skips[j]), lv, trace);
  }
  auto out = ad::conv2d(f, p.tree.at("out.w"), &p.tree.at("out.b"), 1, 0);
  if (p.config.global_residual) out = ad::add(out, input);
  return {out, f};
}

ad::Var image_to_var(const imaging::Image& img) {
  return ad::constant(Array({1, 1, img.height, img.width}, img.values));
}

imaging::Image var_to_image(const ad::Var& v, std::size_t index) {
  const auto& s = v.shape();
  require(s.size() == 4 && s[1] == 1 && index < s[0], ErrorKind::kShape, "var_to_image expects (N, 1, H, W)");
  imaging::Image img(s[2], s[3]);
  std::copy_n(v.value().data() + index * s[2] * s[3], s[2] * s[3], img.values.begin());
  return img;
}

imaging::Image esau_forward(const imaging::Image& input, const EsauNetParams& p) {
  return var_to_image(esau_forward(image_to_var(input), p).denoised);
}

}  // namespace ldct::esau
