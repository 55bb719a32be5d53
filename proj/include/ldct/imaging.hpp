#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ldct::imaging {

/// 2-D CT slice in Hounsfield units, row-major binary32 values.
/// Height and width are ≥ 16 and multiples of 16.
class Slice {
 public:
  Slice() = default;
  Slice(std::size_t height, std::size_t width, std::vector<float> hu);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return hu_.size(); }
  float at(std::size_t y, std::size_t x) const { return hu_[y * width_ + x]; }
  const std::vector<float>& hu() const noexcept { return hu_; }

  friend bool operator==(const Slice&, const Slice&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> hu_;
};

/// Single-channel image in network units (windowed HU mapped to [0, 1]).
/// Network outputs use the same type and may leave [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  bool same_shape(const Image& o) const noexcept { return height == o.height && width == o.width; }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  std::size_t count() const;
};

struct HuWindow {
  double lo = -1000.0;
  double hi = 2000.0;
};

inline constexpr double kDefaultForegroundThresholdHu = -500.0;

/// clamp((v − lo)/(hi − lo), 0, 1) per pixel. Rejects non-finite pixels,
/// reporting their coordinate.
Image hu_window_normalize(const Slice& s, HuWindow window = {});
/// Inverse map of the unclamped interior: lo + v·(hi − lo).
std::vector<double> hu_window_denormalize(const Image& img, HuWindow window = {});

/// True where HU > threshold.
Mask foreground_mask(const Slice& s, double threshold_hu = kDefaultForegroundThresholdHu);
/// Same rule in normalized units.
Mask foreground_mask(const Image& img, double threshold);

/// Patch-grid mask: a factor×factor block is foreground when at least
/// half of its pixels are.
Mask pool_mask(const Mask& m, std::size_t factor);

struct TissueRegion {
  enum class Kind { kEllipse, kRectangle };
  Kind kind = Kind::kEllipse;
  double center_y = 0.0;
  double center_x = 0.0;
  double radius_y = 0.0;  // semi-axis (ellipse) or half-height (rectangle)
  double radius_x = 0.0;
  double mean_hu = 0.0;
  double noise_std_hu = 0.0;
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  std::size_t size = 64;
  double background_hu = -1000.0;
  double background_noise_std_hu = 0.0;
  std::vector<TissueRegion> regions;  // painted in order; later regions win
};

struct PhantomPair {
  Slice clean;
  Slice noisy;
};

namespace tissue {
inline constexpr double kAirHu = -1000.0;
inline constexpr double kMuscleHu = 40.0;
inline constexpr double kMuscleStdHu = 44.73;
inline constexpr double kLiverHu = 60.0;
inline constexpr double kLiverStdHu = 63.23;
inline constexpr double kBoneHu = 400.0;
inline constexpr double kBoneStdHu = 30.0;
}  // namespace tissue

/// Piecewise-constant phantom plus additive zero-mean Gaussian noise whose
/// standard deviation is that of the region owning each pixel.
PhantomPair generate_phantom(const PhantomSpec& spec);

/// Randomised abdomen-like layout (body, liver, bones, lesion) drawn from `seed`.
PhantomSpec random_body_phantom(std::uint64_t seed, std::size_t size);

// "ASC1" container: magic, u32 LE height, u32 LE width, H·W binary32 LE values.
void save_slice(const Slice& s, const std::filesystem::path& path);
Slice load_slice(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_slice(const Slice& s);
Slice decode_slice(const std::vector<std::uint8_t>& bytes);

/// 16-bit grayscale PNG of a [0, 1] image (values clamped, scaled by 65535).
void write_png16(const Image& img, const std::filesystem::path& path);
Image read_png16(const std::filesystem::path& path);

}  // namespace ldct::imaging
