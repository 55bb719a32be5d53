#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "ldct/contrastive.hpp"
#include "ldct/dataset.hpp"
#include "ldct/error.hpp"
#include "ldct/imaging.hpp"
#include "test_util.hpp"

using namespace ldct;
using namespace ldct::imaging;

namespace {

Slice constant_slice(std::size_t n, float hu) { return Slice(n, n, std::vector<float>(n * n, hu)); }

Slice random_slice(std::size_t h, std::size_t w, std::uint64_t seed, double lo = -1200.0, double hi = 2200.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(h * w);
  for (auto& x : v) x = static_cast<float>(u(rng));
  return Slice(h, w, std::move(v));
}

PhantomSpec single_region(double std_hu) {
  PhantomSpec spec;
  spec.seed = 3;
  spec.size = 64;
  spec.regions.push_back({TissueRegion::Kind::kRectangle, 31.5, 31.5, 32.0, 32.0, tissue::kLiverHu, std_hu});
  return spec;
}

}  // namespace

TEST(HuWindow, MapsWindowEndsAndMidpoint) {
  Slice s(16, 16, std::vector<float>(256, 0.0f));
  std::vector<float> v(256, 0.0f);
  v[0] = -1000.0f;
  v[1] = 2000.0f;
  v[2] = 500.0f;
  v[3] = -3000.0f;
  v[4] = 5000.0f;
  const auto img = hu_window_normalize(Slice(16, 16, v));
  EXPECT_EQ(img.values[0], 0.0);
  EXPECT_EQ(img.values[1], 1.0);
  EXPECT_NEAR(img.values[2], 0.5, 1e-15);
  EXPECT_EQ(img.values[3], 0.0);  // clamped
  EXPECT_EQ(img.values[4], 1.0);
}

TEST(HuWindow, RejectsNonFiniteWithCoordinate) {
  std::vector<float> v(256, 0.0f);
  v[3 * 16 + 5] = std::numeric_limits<float>::quiet_NaN();
  try {
    hu_window_normalize(Slice(16, 16, v));
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumerical);
    EXPECT_NE(std::string(e.what()).find("(3, 5)"), std::string::npos);
  }
  v[3 * 16 + 5] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(hu_window_normalize(Slice(16, 16, v)), Error);
}

TEST(HuWindow, RejectsEmptyWindow) {
  EXPECT_THROW(hu_window_normalize(constant_slice(16, 0.0f), {10.0, 10.0}), Error);
}

TEST(HuWindow, MonotoneAndInvertibleOnInterior) {
  const auto s = random_slice(32, 32, 1);
  const auto img = hu_window_normalize(s);
  for (std::size_t i = 0; i < s.pixel_count(); ++i)
    for (std::size_t j = 0; j < s.pixel_count(); j += 37)
      if (s.hu()[i] <= s.hu()[j]) ASSERT_LE(img.values[i], img.values[j]);
  const auto back = hu_window_denormalize(img);
  for (std::size_t i = 0; i < s.pixel_count(); ++i) {
    const double hu = s.hu()[i];
    if (hu <= -1000.0 || hu >= 2000.0) continue;
    EXPECT_LE(std::abs(back[i] - hu), 1e-6 * std::max(1.0, std::abs(hu)));
  }
}

TEST(ForegroundMask, ThresholdExamples) {
  std::vector<float> v(256, -1000.0f);
  v[1] = 50.0f;
  v[2] = -500.0f;  // not strictly above
  const auto m = foreground_mask(Slice(16, 16, v));
  EXPECT_FALSE(m.at(0, 0));
  EXPECT_TRUE(m.at(0, 1));
  EXPECT_FALSE(m.at(0, 2));
}

TEST(ForegroundMask, MatchesBruteForceScan) {
  const auto s = random_slice(48, 32, 9);
  for (double t : {-900.0, -500.0, 0.0, 1500.0}) {
    const auto m = foreground_mask(s, t);
    ASSERT_EQ(m.height, 48u);
    ASSERT_EQ(m.width, 32u);
    for (std::size_t y = 0; y < 48; ++y)
      for (std::size_t x = 0; x < 32; ++x) ASSERT_EQ(m.at(y, x), s.at(y, x) > t);
  }
}

TEST(ForegroundMask, AllAirMaskIsEmptyAndSamplerRejectsIt) {
  const auto m = foreground_mask(constant_slice(32, -1000.0f));
  EXPECT_EQ(m.count(), 0u);
  std::mt19937_64 rng(1);
  try {
    contrastive::sample_queries(m, 4, rng);
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyForeground);
  }
}

TEST(PoolMask, HalfOrMoreIsForeground) {
  Mask m{32, 32, std::vector<std::uint8_t>(32 * 32, 0)};
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) m.bits[y * 32 + x] = (y < 8);  // exactly half of patch (0,0)
  for (std::size_t y = 0; y < 16; ++y) m.bits[y * 32 + 16] = 1;          // 16 of 256 pixels of patch (0,1)
  const auto p = pool_mask(m, 16);
  EXPECT_TRUE(p.at(0, 0));
  EXPECT_FALSE(p.at(0, 1));
  EXPECT_FALSE(p.at(1, 0));
  EXPECT_THROW(pool_mask(m, 5), Error);
}

TEST(Slice, EnforcesDimensionInvariant) {
  EXPECT_THROW(Slice(20, 16, std::vector<float>(320)), Error);
  EXPECT_THROW(Slice(0, 16, {}), Error);
  EXPECT_THROW(Slice(16, 16, std::vector<float>(255)), Error);
  EXPECT_NO_THROW(Slice(16, 48, std::vector<float>(768)));
}

TEST(Phantom, DeterministicGivenSpec) {
  const auto spec = random_body_phantom(42, 64);
  const auto a = generate_phantom(spec);
  const auto b = generate_phantom(spec);
  EXPECT_EQ(a.clean, b.clean);
  EXPECT_EQ(a.noisy, b.noisy);
  const auto c = generate_phantom(random_body_phantom(43, 64));
  EXPECT_NE(a.noisy, c.noisy);
}

TEST(Phantom, ZeroNoiseGivesIdenticalPair) {
  auto spec = random_body_phantom(5, 64);
  for (auto& r : spec.regions) r.noise_std_hu = 0.0;
  const auto p = generate_phantom(spec);
  EXPECT_EQ(p.clean, p.noisy);
}

TEST(Phantom, EmpiricalNoiseStdMatchesConfiguredLiverStd) {
  const auto p = generate_phantom(single_region(tissue::kLiverStdHu));
  double sum = 0.0, sq = 0.0;
  const std::size_t n = p.clean.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    ASSERT_EQ(p.clean.hu()[i], static_cast<float>(tissue::kLiverHu));
    const double d = p.noisy.hu()[i] - p.clean.hu()[i];
    sum += d;
    sq += d * d;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 63.23, 0.1 * 63.23);
  EXPECT_NEAR(mean, 0.0, 5.0);
}

TEST(Phantom, RegionsOwnTheirNoiseLevel) {
  PhantomSpec spec;
  spec.seed = 8;
  spec.size = 64;
  spec.regions.push_back({TissueRegion::Kind::kRectangle, 15.5, 31.5, 16.0, 32.0, tissue::kMuscleHu, 10.0});
  spec.regions.push_back({TissueRegion::Kind::kRectangle, 47.5, 31.5, 16.0, 32.0, tissue::kBoneHu, 100.0});
  const auto p = generate_phantom(spec);
  auto region_sd = [&](std::size_t y0) {
    double sq = 0.0;
    for (std::size_t y = y0; y < y0 + 32; ++y)
      for (std::size_t x = 0; x < 64; ++x) {
        const double d = p.noisy.at(y, x) - p.clean.at(y, x);
        sq += d * d;
      }
    return std::sqrt(sq / (32.0 * 64.0));
  };
  EXPECT_NEAR(region_sd(0), 10.0, 1.0);
  EXPECT_NEAR(region_sd(32), 100.0, 10.0);
}

TEST(Phantom, RejectsInvalidRegions) {
  auto spec = single_region(10.0);
  spec.regions[0].radius_x = 0.0;
  EXPECT_THROW(generate_phantom(spec), Error);
  spec = single_region(-1.0);
  EXPECT_THROW(generate_phantom(spec), Error);
  spec = single_region(10.0);
  spec.regions[0].center_x = 60.0;
  EXPECT_THROW(generate_phantom(spec), Error);
  spec = single_region(10.0);
  spec.size = 40;
  EXPECT_THROW(generate_phantom(spec), Error);
}

TEST(Phantom, BodyPhantomHasForegroundAndTissuePalette) {
  const auto p = generate_phantom(random_body_phantom(11, 64));
  const auto m = foreground_mask(p.clean);
  EXPECT_GT(m.count(), 64u * 64u / 4);
  EXPECT_LT(m.count(), 64u * 64u);
  for (float v : p.clean.hu())
    EXPECT_TRUE(v == -1000.0f || v == 40.0f || v == 60.0f || v == 100.0f || v == 400.0f) << v;
}

TEST(SliceFile, RoundTripIsBitExact) {
  test::TempDir dir;
  const auto s = random_slice(32, 48, 4, -5000.0, 5000.0);
  save_slice(s, dir.path() / "a.slc");
  EXPECT_EQ(load_slice(dir.path() / "a.slc"), s);
  const auto bytes = encode_slice(s);
  ASSERT_EQ(bytes.size(), 12u + 4u * 32 * 48);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ASC1");
  EXPECT_EQ(bytes[4], 32);  // little-endian height
  EXPECT_EQ(bytes[8], 48);
}

TEST(SliceFile, DistinctErrorKinds) {
  const auto good = encode_slice(random_slice(64, 64, 2));
  auto expect_kind = [](const std::vector<std::uint8_t>& bytes, ErrorKind kind) {
    try {
      decode_slice(bytes);
      FAIL() << "expected rejection";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_kind(bad_magic, ErrorKind::kFormat);
  auto truncated = good;
  truncated.resize(12 + 4 * 63 * 64);  // header says 64×64, payload holds 63×64
  expect_kind(truncated, ErrorKind::kTruncated);
  auto trailing = good;
  trailing.push_back(0);
  expect_kind(trailing, ErrorKind::kDimension);
  auto bad_dims = good;
  bad_dims[4] = 20;  // height 20 is not a multiple of 16
  expect_kind(bad_dims, ErrorKind::kDimension);
  try {
    load_slice("/nonexistent/dir/x.slc");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Png16, RoundTripWithinQuantization) {
  test::TempDir dir;
  const auto img = hu_window_normalize(random_slice(32, 16, 6));
  write_png16(img, dir.path() / "a.png");
  const auto back = read_png16(dir.path() / "a.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_LE(std::abs(back.values[i] - img.values[i]), 0.5 / 65535.0 + 1e-12);
}

TEST(Dataset, SynthesizeIsDeterministicAndRoundTrips) {
  test::TempDir dir;
  const auto a = data::synthesize(3, 32, 7);
  const auto b = data::synthesize(3, 32, 7);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].noisy, b[i].noisy);
    EXPECT_EQ(a[i].clean, b[i].clean);
  }
  EXPECT_NE(a[0].noisy, a[1].noisy);
  data::write_pairs(dir.path(), a, 7);
  const auto back = data::read_pairs(dir.path());
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].name, a[i].name);
    EXPECT_EQ(back[i].noisy, a[i].noisy);
    EXPECT_EQ(back[i].clean, a[i].clean);
  }
}

TEST(Dataset, RejectsInconsistentShapes) {
  auto pairs = data::synthesize(2, 32, 1);
  pairs.push_back(data::synthesize(1, 48, 1).front());
  try {
    data::make_dataset(pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
  EXPECT_THROW(data::make_dataset({}), Error);
}
