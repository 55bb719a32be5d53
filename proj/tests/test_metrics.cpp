#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ldct/error.hpp"
#include "ldct/evaluate.hpp"
#include "ldct/metrics.hpp"
#include "ldct/trainer.hpp"
#include "test_util.hpp"

using namespace ldct;
using namespace ldct::metrics;
using imaging::Image;

namespace {

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Image img(h, w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : img.values) v = u(rng);
  return img;
}

Image constant(std::size_t h, std::size_t w, double v) { return Image(h, w, v); }

// Direct 2-D window sum over every fully contained 11×11 window.
double brute_ssim(const Image& a, const Image& b) {
  const int k = 11;
  double g[k][k], total = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  double sum = 0.0;
  std::size_t windows = 0;
  for (std::size_t y = 0; y + k <= a.height; ++y)
    for (std::size_t x = 0; x + k <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double w = g[i][j] / total, va = a.at(y + i, x + j), vb = b.at(y + i, x + j);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      const double c1 = 1e-4, c2 = 9e-4;
      sum += (2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2) /
             ((ma * ma + mb * mb + c1) * (saa - ma * ma + sbb - mb * mb + c2));
      ++windows;
    }
  return sum / static_cast<double>(windows);
}

}  // namespace

TEST(Psnr, ClosedForms) {
  const auto a = constant(8, 8, 0.3);
  EXPECT_EQ(psnr(a, a), kPsnrCapDb);
  EXPECT_NEAR(psnr(constant(8, 8, 0.4), a), 20.0, 1e-9);   // MSE 0.01
  EXPECT_NEAR(psnr(constant(8, 8, 0.31), a), 40.0, 1e-9);  // MSE 1e-4
  EXPECT_THROW(psnr(a, constant(8, 7, 0.3)), Error);
}

TEST(Rmse, ClosedFormsAndBruteForce) {
  const auto a = constant(5, 6, 0.2);
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(constant(5, 6, 0.25), a), 0.05, 1e-15);
  std::mt19937_64 rng(1);
  const auto x = random_image(13, 9, rng), y = random_image(13, 9, rng);
  double sq = 0.0;
  for (std::size_t i = 0; i < x.values.size(); ++i) sq += (x.values[i] - y.values[i]) * (x.values[i] - y.values[i]);
  EXPECT_NEAR(rmse(x, y), std::sqrt(sq / static_cast<double>(x.values.size())), 1e-10);
  EXPECT_THROW(rmse(x, constant(9, 13, 0.0)), Error);
}

TEST(Ssim, ClosedFormsAndBruteForce) {
  std::mt19937_64 rng(2);
  const auto x = random_image(20, 17, rng), y = random_image(20, 17, rng);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
  const double c1 = kSsimC1;
  EXPECT_NEAR(ssim(constant(16, 16, 0.5), constant(16, 16, 0.7)), (2 * 0.5 * 0.7 + c1) / (0.25 + 0.49 + c1), 1e-12);
  EXPECT_NEAR(ssim(x, y), brute_ssim(x, y), 1e-10);
  EXPECT_EQ(ssim(x, y), ssim(y, x));
  EXPECT_THROW(ssim(constant(10, 20, 0.1), constant(10, 20, 0.1)), Error);
}

TEST(Ssim, BoundedAndOneOnlyWhenIdentical) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_image(16, 16, rng);
    auto b = a;
    b.at(5 + t % 6, 5 + (7 * t) % 6) += 0.05;  // inside every window
    const double s = ssim(a, b);
    EXPECT_LT(s, 1.0 - 1e-9);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(ssim(a, random_image(16, 16, rng)), 1.0);
  }
}

TEST(MetricProperties, SymmetryTriangleAndConsistency) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_image(12, 12, rng), b = random_image(12, 12, rng), c = random_image(12, 12, rng);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_LE(rmse(a, c), rmse(a, b) + rmse(b, c) + 1e-15);
    EXPECT_NEAR(psnr(a, b), -20.0 * std::log10(rmse(a, b)), 1e-9);
  }
}

TEST(Cnr, Examples) {
  // Lesion block of ones; background alternates -0.5 / +0.5 (mean 0, std 0.5).
  Image img(4, 8, 0.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) img.at(y, x) = 1.0;
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 4; x < 8; ++x) img.at(y, x) = ((y + x) % 2) ? 0.5 : -0.5;
  const Roi lesion{0, 0, 4, 4}, background{0, 4, 4, 4};
  EXPECT_NEAR(cnr(img, lesion, background), 2.0, 1e-12);

  Image twin(4, 8);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 8; ++x) twin.at(y, x) = ((y + x) % 2) ? 0.3 : 0.1;
  EXPECT_NEAR(cnr(twin, lesion, background), 0.0, 1e-12);

  auto scaled = img;
  for (auto& v : scaled.values) v *= 3.7;
  EXPECT_NEAR(cnr(scaled, lesion, background), cnr(img, lesion, background), 1e-12);

  EXPECT_EQ(test::kind_of([&] { cnr(constant(4, 8, 0.2), lesion, background); }), ErrorKind::kNumerical);
  EXPECT_THROW(cnr(img, lesion, Roi{2, 2, 2, 4}), Error);
}

TEST(Report, AggregationMatchesRecomputation) {
  std::mt19937_64 rng(5);
  std::vector<Image> outs, refs;
  for (int i = 0; i < 7; ++i) {
    refs.push_back(random_image(16, 16, rng));
    outs.push_back(random_image(16, 16, rng));
  }
  const auto r = compare(outs, refs);
  ASSERT_EQ(r.size(), 7u);
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(r.psnr_db[i], psnr(outs[i], refs[i]));
    mean += r.rmse[i] / 7.0;
  }
  for (double v : r.rmse) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(r.rmse_summary.mean, mean, 1e-14);
  EXPECT_NEAR(r.rmse_summary.std, std::sqrt(sq / 7.0), 1e-14);
  const auto s = summarize({1.0, 3.0});
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_EQ(s.std, 1.0);
}

TEST(Report, CsvAndJsonLayout) {
  MetricReport r;
  r.add("a", 44.0, 0.006, 0.97);
  r.add("b", 46.0, 0.008, 0.99);
  r.finalize();
  EXPECT_EQ(r.to_csv(), "PSNR [dB],RMSE [x1e-2],SSIM [%]\n45.00±1.00,0.70±0.10,98.00±1.00\n");
  const auto j = r.to_json();
  for (const char* key : {"\"count\": 2", "\"psnr_db\"", "\"images\"", "\"name\": \"b\""})
    EXPECT_NE(j.find(key), std::string::npos) << key;
}

TEST(Evaluate, IdentityModelOnCleanInputs) {
  auto pairs = data::synthesize(3, 32, 6);
  for (auto& p : pairs) p.noisy = p.clean;
  const auto d = data::make_dataset(pairs);
  train::TrainConfig c;
  const auto state = train::init_state(c);
  const auto r = evaluate(state.esau, d);
  ASSERT_EQ(r.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.psnr_db[i], kPsnrCapDb);
    EXPECT_EQ(r.rmse[i], 0.0);
    EXPECT_NEAR(r.ssim[i], 1.0, 1e-12);
  }

  test::TempDir dir;
  train::to_container(state, c).save(dir.path() / "m.ckpt");
  EXPECT_EQ(evaluate(dir.path() / "m.ckpt", d).to_json(), r.to_json());

  const auto single = data::make_dataset(data::synthesize(1, 32, 7));
  const auto one = evaluate(state.esau, single);
  EXPECT_EQ(one.psnr_summary.std, 0.0);
  EXPECT_EQ(one.rmse_summary.std, 0.0);
  EXPECT_EQ(one.ssim_summary.std, 0.0);
  EXPECT_EQ(one.psnr_db, evaluate_inputs(single).psnr_db);  // identity model: output equals the input
}

TEST(Evaluate, RejectsMismatchedCheckpoint) {
  train::TrainConfig small, large;
  small.esau_width = 4;
  auto box = train::to_container(train::init_state(small), small);
  checkpoint::Container tampered;
  for (const auto& [k, v] : box.meta_entries()) tampered.set_meta(k, k == "config" ? train::config_to_json(large) : v);
  for (const auto& t : box.tensors()) tampered.add(t.name, t.value);
  test::TempDir dir;
  tampered.save(dir.path() / "bad.ckpt");
  const auto d = data::make_dataset(data::synthesize(1, 32, 8));
  EXPECT_EQ(test::kind_of([&] { evaluate(dir.path() / "bad.ckpt", d); }), ErrorKind::kShape);
}
