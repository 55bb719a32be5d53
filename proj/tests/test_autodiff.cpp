#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ldct/error.hpp"
#include "ldct/ops.hpp"
#include "ldct/params.hpp"
#include "test_util.hpp"

using namespace ldct;
using namespace ldct::ad;

namespace {

// Projects an op's output onto fixed random weights so every output element
// contributes to the scalar being differentiated.
Var project(const Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, constant(test::random_array(out.shape(), rng))));
}

// Builds the loss, back-propagates, then finite-differences every leaf.
void expect_gradients(std::vector<Var> leaves, const std::function<Var()>& build, double tol = 1e-5) {
  for (auto& l : leaves) l.zero_grad();
  build().backward();
  for (auto& l : leaves) {
    const double err = test::gradient_error(l, [&] { return build().item(); });
    EXPECT_LE(err, tol) << "leaf of shape " << shape_string(l.shape());
  }
}

Var leaf(const Shape& s, std::mt19937_64& rng, double scale = 1.0) { return Var(test::random_array(s, rng, scale), true); }

}  // namespace

TEST(Autodiff, ElementwiseOps) {
  std::mt19937_64 rng(1);
  auto a = leaf({2, 3}, rng), b = leaf({2, 3}, rng);
  for (auto& v : b.mutable_value().values()) v = 1.5 + std::abs(v);  // keep div away from 0
  expect_gradients({a, b}, [&] { return project(add(a, b), 1); });
  expect_gradients({a, b}, [&] { return project(sub(a, b), 2); });
  expect_gradients({a, b}, [&] { return project(mul(a, b), 3); });
  expect_gradients({a, b}, [&] { return project(div(a, b), 4); });
  expect_gradients({a}, [&] { return project(scale(a, -2.5), 5); });
  expect_gradients({a}, [&] { return project(add_scalar(a, 0.7), 6); });
  expect_gradients({a}, [&] { return project(leaky_relu(a, 0.2), 7); });
  expect_gradients({a}, [&] { return mean(mul(a, a)); });
  expect_gradients({a, b}, [&] { return mse(a, b); });
}

TEST(Autodiff, RejectsShapeMismatch) {
  EXPECT_THROW(add(constant(Array({2, 3})), constant(Array({3, 2}))), Error);
  EXPECT_THROW(constant(Array({2})).backward(), Error);
}

TEST(Autodiff, SharedSubexpressionsAccumulate) {
  Var x(Array({1}, 3.0), true);
  const auto y = add(mul(x, x), scale(x, 2.0));  // x² + 2x
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  y.backward();  // leaf gradients accumulate across sweeps
  EXPECT_DOUBLE_EQ(x.grad()[0], 16.0);
}

TEST(Autodiff, FrozenInputsRecordNoGraph) {
  Var w(Array({2}, 1.0), false);
  Var x(Array({2}, 2.0), false);
  const auto y = mul(w, x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->inputs.empty());
  EXPECT_FALSE(static_cast<bool>(y.node()->backward));
  w.set_requires_grad(true);
  const auto z = sum(mul(w, detach(mul(w, x))));
  z.backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);  // detached factor contributes no gradient
  EXPECT_FALSE(x.has_grad());
}

TEST(Autodiff, Conv2dVariants) {
  std::mt19937_64 rng(2);
  auto x = leaf({2, 3, 6, 6}, rng);
  auto w3 = leaf({4, 3, 3, 3}, rng), b = leaf({4}, rng);
  auto w2 = leaf({5, 3, 2, 2}, rng), w1 = leaf({2, 3, 1, 1}, rng);
  expect_gradients({x, w3, b}, [&] { return project(conv2d(x, w3, &b, 1, 1), 10); });
  expect_gradients({x, w3}, [&] { return project(conv2d(x, w3, nullptr, 1, 0), 11); });
  auto b5 = leaf({5}, rng);
  expect_gradients({x, w2, b5}, [&] { return project(conv2d(x, w2, &b5, 2, 0), 12); });
  expect_gradients({x, w1}, [&] { return project(conv2d(x, w1, nullptr, 1, 0), 13); });
}

TEST(Autodiff, Conv2dMatchesDirectSum) {
  std::mt19937_64 rng(3);
  const auto x = test::random_array({1, 2, 5, 5}, rng);
  const auto w = test::random_array({3, 2, 3, 3}, rng);
  const auto b = test::random_array({3}, rng);
  Var bias(b);
  const auto y = conv2d(constant(x), constant(w), &bias, 1, 1).value();
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double acc = b[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long yy = static_cast<long>(i + ky) - 1, xx = static_cast<long>(j + kx) - 1;
              if (yy < 0 || xx < 0 || yy >= 5 || xx >= 5) continue;
              acc += w[((o * 2 + c) * 3 + ky) * 3 + kx] * x[(c * 5 + yy) * 5 + xx];
            }
        EXPECT_NEAR(y[(o * 5 + i) * 5 + j], acc, 1e-12);
      }
}

TEST(Autodiff, DepthwiseUpsampleConcat) {
  std::mt19937_64 rng(4);
  auto x = leaf({2, 3, 5, 4}, rng), w = leaf({3, 1, 3, 3}, rng), y = leaf({2, 2, 5, 4}, rng);
  expect_gradients({x, w}, [&] { return project(depthwise_conv2d(x, w), 20); });
  expect_gradients({x}, [&] { return project(upsample_nearest2(x), 21); });
  expect_gradients({x, y}, [&] { return project(concat_channels(x, y), 22); });
  const auto up = upsample_nearest2(constant(x.value())).value();
  EXPECT_EQ(up.shape(), (Shape{2, 3, 10, 8}));
  EXPECT_EQ(up.at(1, 2, 7, 5), x.value().at(1, 2, 3, 2));
}

TEST(Autodiff, SeparableFilterValid) {
  std::mt19937_64 rng(5);
  auto x = leaf({1, 2, 9, 7}, rng);
  const std::vector<double> k{0.25, 0.5, 0.25};
  expect_gradients({x}, [&] { return project(separable_filter_valid(x, k), 30); });
  const auto y = separable_filter_valid(constant(x.value()), k).value();
  ASSERT_EQ(y.shape(), (Shape{1, 2, 7, 5}));
  double direct = 0.0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) direct += k[a] * k[b] * x.value().at(0, 1, 2 + a, 3 + b);
  EXPECT_NEAR(y.at(0, 1, 2, 3), direct, 1e-14);
}

TEST(Autodiff, AttentionCore) {
  std::mt19937_64 rng(6);
  auto qkv = leaf({2, 12, 3, 3}, rng, 0.5);
  auto alpha = Var(Array({2}, std::vector<double>{0.8, 1.3}), true);
  expect_gradients({qkv, alpha}, [&] { return project(channel_attention_core(qkv, alpha, 2), 40); }, 1e-5);
  AttentionTrace trace;
  channel_attention_core(qkv, alpha, 2, &trace);
  ASSERT_EQ(trace.maps.size(), 4u);
  for (const auto& m : trace.maps) {
    EXPECT_EQ(m.rows, 2u);
    EXPECT_EQ(m.cols, 2u);
    EXPECT_LE(m.max_row_sum_error, 1e-12);
  }
  EXPECT_THROW(channel_attention_core(qkv, alpha, 3), Error);
}

TEST(Autodiff, AttentionCoreMatchesExplicitFormula) {
  std::mt19937_64 rng(7);
  const auto qkv = test::random_array({1, 6, 2, 2}, rng);  // one head, c = 2, 4 pixels
  const double a = 0.9;
  const auto out = channel_attention_core(constant(qkv), constant(Array({1}, a)), 1).value();
  auto at = [&](std::size_t ch, std::size_t p) { return qkv[ch * 4 + p]; };
  double attn[2][2];
  for (std::size_t i = 0; i < 2; ++i) {
    double s[2], z = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      s[j] = 0.0;
      for (std::size_t p = 0; p < 4; ++p) s[j] += at(2 + i, p) * at(j, p);  // K_i · Q_j
      s[j] = std::exp(s[j] / a);
      z += s[j];
    }
    for (std::size_t j = 0; j < 2; ++j) attn[i][j] = s[j] / z;
  }
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t p = 0; p < 4; ++p) {
      const double expect = attn[0][j] * at(4, p) + attn[1][j] * at(5, p);  // (Aᵀ V)_jp
      EXPECT_NEAR(out[j * 4 + p], expect, 1e-12);
    }
}

TEST(Autodiff, NormalizedAttentionCore) {
  std::mt19937_64 rng(16);
  auto qkv = leaf({2, 12, 3, 3}, rng, 0.5);
  auto alpha = Var(Array({2}, std::vector<double>{0.3, 0.7}), true);
  expect_gradients({qkv, alpha}, [&] { return project(channel_attention_core(qkv, alpha, 2, nullptr, true), 41); },
                   1e-5);

  // Rescaling any Q or K row leaves the output unchanged; V rows are untouched.
  const auto ref = channel_attention_core(constant(qkv.value()), constant(alpha.value()), 2, nullptr, true).value();
  auto scaled = qkv.value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ch = 0; ch < 8; ++ch)
      for (std::size_t p = 0; p < 9; ++p) scaled[(n * 12 + ch) * 9 + p] *= 0.5 + static_cast<double>(ch + n);
  const auto got = channel_attention_core(constant(scaled), constant(alpha.value()), 2, nullptr, true).value();
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);

  // Logits stay within ±1/alpha at any resolution, so a large map is far from one-hot.
  const auto big = test::random_array({1, 3 * 4, 512, 512}, rng, 1.0);
  auto shifted = big;
  for (std::size_t i = 0; i < 8 * 512 * 512; ++i) shifted[i] += 3.0;
  const auto flat = channel_attention_core(constant(shifted), constant(Array({1}, 1.0)), 1, nullptr, true).value();
  // Shifted rows are nearly parallel (cosine ≈ 0.9), so logits spread by ~0.1 and each
  // weight lies within 0.03 of 1/4: the output is close to the mean of the V rows.
  for (std::size_t p = 0; p < 64; ++p) {
    double mean_v = 0.0, abs_v = 0.0;
    for (std::size_t ch = 0; ch < 4; ++ch) {
      mean_v += shifted[(8 + ch) * 512 * 512 + p] / 4.0;
      abs_v += std::abs(shifted[(8 + ch) * 512 * 512 + p]);
    }
    EXPECT_NEAR(flat[p], mean_v, 0.03 * abs_v);
  }

  auto zero = qkv.value();
  for (std::size_t p = 0; p < 9; ++p) zero[p] = 0.0;  // an all-zero Q row stays finite
  EXPECT_TRUE(channel_attention_core(constant(zero), constant(alpha.value()), 2, nullptr, true).value().all_finite());
}

TEST(Autodiff, RowOps) {
  std::mt19937_64 rng(8);
  auto x = leaf({2, 4, 3, 3}, rng);
  const std::vector<std::vector<PixelRef>> groups{{{0, 0, 0}, {0, 1, 2}}, {{1, 2, 2}}, {{0, 1, 1}, {1, 1, 1}, {0, 0, 0}}};
  expect_gradients({x}, [&] { return project(gather_mean(x, groups), 50); });
  const auto g = gather_mean(constant(x.value()), groups).value();
  EXPECT_NEAR(g[1], 0.5 * (x.value().at(0, 1, 0, 0) + x.value().at(0, 1, 1, 2)), 1e-15);

  auto rows = leaf({5, 4}, rng), w = leaf({3, 4}, rng), b = leaf({3}, rng);
  expect_gradients({rows, w, b}, [&] { return project(linear(rows, w, b), 51); });
  expect_gradients({rows}, [&] { return project(l2_normalize_rows(rows), 52); });
  const auto n = l2_normalize_rows(constant(rows.value())).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += n[r * 4 + c] * n[r * 4 + c];
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  EXPECT_THROW(l2_normalize_rows(constant(Array({1, 3}, 0.0))), Error);
}

TEST(Autodiff, LossOps) {
  std::mt19937_64 rng(9);
  auto p = leaf({4, 6}, rng), t = leaf({4, 6}, rng);
  expect_gradients({p, t}, [&] { return cosine_alignment_loss(p, t); });
  auto q = leaf({3, 5}, rng), pos = leaf({3, 5}, rng), neg = leaf({7, 5}, rng);
  const std::vector<std::size_t> offsets{0, 2, 2, 7};  // second query has no negatives
  expect_gradients({q, pos, neg}, [&] { return info_nce(q, pos, neg, offsets, 0.5); });
  EXPECT_THROW(info_nce(q, pos, neg, offsets, 0.0), Error);
  EXPECT_THROW(info_nce(q, pos, neg, {0, 1, 2}, 0.5), Error);
}

TEST(Params, TreeBookkeeping) {
  ParamTree t;
  t.add("a", Array({2}, 1.0));
  t.add("b", Array({3}, 2.0));
  EXPECT_THROW(t.add("a", Array({1})), Error);
  EXPECT_EQ(t.element_count(), 5u);
  auto c = t.clone();
  EXPECT_TRUE(c.identical_values(t));
  c.at("b").mutable_value()[1] = 2.5;
  EXPECT_FALSE(c.identical_values(t));
  EXPECT_EQ(t.at("b").value()[1], 2.0);  // clone does not share storage
  t.set_requires_grad(false);
  EXPECT_FALSE(t.at("a").requires_grad());
  EXPECT_TRUE(c.at("a").requires_grad());
}

TEST(Params, DerivedStreamsAreReproducibleAndDistinct) {
  auto a = derived_rng(1, 2, 3), b = derived_rng(1, 2, 3), c = derived_rng(1, 2, 4), d = derived_rng(1, 3, 3);
  const auto va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
  EXPECT_NE(va, d());
}

TEST(Params, HeNormalIsFloatRepresentable) {
  auto rng = derived_rng(0, 0);
  const auto w = he_normal({64, 8}, 8, rng);
  double sq = 0.0;
  for (double v : w.values()) {
    EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
    sq += v * v;
  }
  EXPECT_NEAR(std::sqrt(sq / w.size()), std::sqrt(2.0 / 8.0), 0.05);
}
