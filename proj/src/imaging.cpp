#include "ldct/imaging.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "ldct/error.hpp"
#include "ldct/params.hpp"
#include "png_io.hpp"

namespace ldct::imaging {
namespace {

constexpr char kSliceMagic[4] = {'A', 'S', 'C', '1'};
constexpr std::size_t kSliceHeader = 12;

void check_slice_dims(std::size_t h, std::size_t w) {
  require(h >= 16 && w >= 16 && h % 16 == 0 && w % 16 == 0, ErrorKind::kDimension,
          "slice dimensions " + std::to_string(h) + "x" + std::to_string(w) +
              " must be at least 16 and divisible by 16");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

bool region_contains(const TissueRegion& r, double y, double x) {
  const double dy = (y - r.center_y) / r.radius_y;
  const double dx = (x - r.center_x) / r.radius_x;
  if (r.kind == TissueRegion::Kind::kEllipse) return dy * dy + dx * dx <= 1.0;
  return std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
}

}  // namespace

Slice::Slice(std::size_t height, std::size_t width, std::vector<float> hu)
    : height_(height), width_(width), hu_(std::move(hu)) {
  check_slice_dims(height, width);
  require(hu_.size() == height * width, ErrorKind::kDimension,
          "slice holds " + std::to_string(hu_.size()) + " values for a " + std::to_string(height) + "x" +
              std::to_string(width) + " grid");
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

Image hu_window_normalize(const Slice& s, HuWindow window) {
  require(window.lo < window.hi, ErrorKind::kInvalidArgument, "HU window requires lo < hi");
  Image out(s.height(), s.width());
  const double span = window.hi - window.lo;
  for (std::size_t y = 0; y < s.height(); ++y)
    for (std::size_t x = 0; x < s.width(); ++x) {
      const double v = s.at(y, x);
      require(std::isfinite(v), ErrorKind::kNumerical,
              "non-finite HU value at (" + std::to_string(y) + ", " + std::to_string(x) + ")");
      out.at(y, x) = std::clamp((v - window.lo) / span, 0.0, 1.0);
    }
  return out;
}

std::vector<double> hu_window_denormalize(const Image& img, HuWindow window) {
  std::vector<double> hu(img.values.size());
  for (std::size_t i = 0; i < hu.size(); ++i) hu[i] = window.lo + img.values[i] * (window.hi - window.lo);
  return hu;
}

Mask foreground_mask(const Slice& s, double threshold_hu) {
  Mask m{s.height(), s.width(), std::vector<std::uint8_t>(s.pixel_count())};
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = s.hu()[i] > threshold_hu;
  return m;
}

Mask foreground_mask(const Image& img, double threshold) {
  Mask m{img.height, img.width, std::vector<std::uint8_t>(img.values.size())};
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = img.values[i] > threshold;
  return m;
}

Mask pool_mask(const Mask& m, std::size_t factor) {
  require(factor >= 1 && m.height % factor == 0 && m.width % factor == 0, ErrorKind::kShape,
          "pool_mask: factor must divide the mask dimensions");
  Mask out{m.height / factor, m.width / factor, {}};
  out.bits.resize(out.height * out.width);
  for (std::size_t py = 0; py < out.height; ++py)
    for (std::size_t px = 0; px < out.width; ++px) {
      std::size_t on = 0;
      for (std::size_t y = 0; y < factor; ++y)
        for (std::size_t x = 0; x < factor; ++x) on += m.at(py * factor + y, px * factor + x);
      out.bits[py * out.width + px] = 2 * on >= factor * factor;
    }
  return out;
}

PhantomPair generate_phantom(const PhantomSpec& spec) {
  check_slice_dims(spec.size, spec.size);
  require(spec.background_noise_std_hu >= 0.0, ErrorKind::kInvalidArgument, "background noise std must be >= 0");
  const auto n = static_cast<double>(spec.size);
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    const auto& reg = spec.regions[r];
    const std::string id = "region " + std::to_string(r);
    require(reg.noise_std_hu >= 0.0, ErrorKind::kInvalidArgument, id + ": noise std must be >= 0");
    require(reg.radius_y > 0.0 && reg.radius_x > 0.0, ErrorKind::kInvalidArgument, id + ": zero area");
    require(reg.center_y - reg.radius_y >= -0.5 && reg.center_x - reg.radius_x >= -0.5 &&
                reg.center_y + reg.radius_y <= n - 0.5 && reg.center_x + reg.radius_x <= n - 0.5,
            ErrorKind::kInvalidArgument, id + ": extends outside the image");
  }

  std::vector<float> clean(spec.size * spec.size, static_cast<float>(spec.background_hu));
  std::vector<double> stddev(clean.size(), spec.background_noise_std_hu);
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    const auto& reg = spec.regions[r];
    std::size_t covered = 0;
    for (std::size_t y = 0; y < spec.size; ++y)
      for (std::size_t x = 0; x < spec.size; ++x)
        if (region_contains(reg, static_cast<double>(y), static_cast<double>(x))) {
          clean[y * spec.size + x] = static_cast<float>(reg.mean_hu);
          stddev[y * spec.size + x] = reg.noise_std_hu;
          ++covered;
        }
    require(covered > 0, ErrorKind::kInvalidArgument, "region " + std::to_string(r) + ": covers no pixel");
  }

  auto rng = derived_rng(spec.seed, 0x70686e74);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<float> noisy(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double z = unit(rng);  // drawn for every pixel so the stream layout is fixed
    noisy[i] = static_cast<float>(static_cast<double>(clean[i]) + stddev[i] * z);
  }
  return {Slice(spec.size, spec.size, std::move(clean)), Slice(spec.size, spec.size, std::move(noisy))};
}

PhantomSpec random_body_phantom(std::uint64_t seed, std::size_t size) {
  auto rng = derived_rng(seed, 0x626f6479);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double n = static_cast<double>(size);
  const double c = (n - 1.0) / 2.0;
  auto jitter = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  PhantomSpec spec;
  spec.seed = seed;
  spec.size = size;
  using Kind = TissueRegion::Kind;

  TissueRegion body{Kind::kEllipse, c + jitter(-0.03, 0.03) * n, c + jitter(-0.03, 0.03) * n,
                    jitter(0.34, 0.42) * n,  jitter(0.38, 0.45) * n, tissue::kMuscleHu, tissue::kMuscleStdHu};
  spec.regions.push_back(body);

  TissueRegion liver{Kind::kEllipse,         body.center_y + jitter(-0.08, 0.02) * n,
                     body.center_x - jitter(0.06, 0.14) * n, jitter(0.14, 0.2) * n,
                     jitter(0.16, 0.22) * n, tissue::kLiverHu,
                     tissue::kLiverStdHu};
  spec.regions.push_back(liver);

  TissueRegion lesion{Kind::kEllipse, liver.center_y + jitter(-0.3, 0.3) * liver.radius_y,
                      liver.center_x + jitter(-0.3, 0.3) * liver.radius_x, jitter(0.03, 0.06) * n,
                      jitter(0.03, 0.06) * n, tissue::kLiverHu + 40.0, tissue::kLiverStdHu};
  spec.regions.push_back(lesion);

  const int bones = 1 + static_cast<int>(u(rng) * 3.0);
  for (int b = 0; b < bones; ++b) {
    const double angle = jitter(0.0, 2.0 * 3.141592653589793);
    const double dist = jitter(0.15, 0.28) * n;
    TissueRegion bone{b % 2 ? Kind::kRectangle : Kind::kEllipse,
                      body.center_y + dist * std::sin(angle),
                      body.center_x + dist * std::cos(angle),
                      jitter(0.03, 0.06) * n,
                      jitter(0.03, 0.06) * n,
                      tissue::kBoneHu,
                      tissue::kBoneStdHu};
    spec.regions.push_back(bone);
  }
  return spec;
}

std::vector<std::uint8_t> encode_slice(const Slice& s) {
  std::vector<std::uint8_t> out(std::begin(kSliceMagic), std::end(kSliceMagic));
  out.reserve(kSliceHeader + 4 * s.pixel_count());
  put_u32(out, static_cast<std::uint32_t>(s.height()));
  put_u32(out, static_cast<std::uint32_t>(s.width()));
  for (float v : s.hu()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Slice decode_slice(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kSliceMagic, 4) == 0, ErrorKind::kFormat,
          "slice: bad magic bytes (expected ASC1)");
  require(bytes.size() >= kSliceHeader, ErrorKind::kTruncated, "slice: truncated header");
  const std::size_t h = get_u32(bytes.data() + 4), w = get_u32(bytes.data() + 8);
  check_slice_dims(h, w);
  const std::size_t want = kSliceHeader + 4 * h * w;
  require(bytes.size() >= want, ErrorKind::kTruncated,
          "slice: header declares " + std::to_string(h) + "x" + std::to_string(w) + " but payload holds " +
              std::to_string((bytes.size() - kSliceHeader) / 4) + " values");
  require(bytes.size() == want, ErrorKind::kDimension,
          "slice: " + std::to_string(bytes.size() - want) + " trailing bytes after declared payload");
  std::vector<float> hu(h * w);
  for (std::size_t i = 0; i < hu.size(); ++i) {
    hu[i] = std::bit_cast<float>(get_u32(bytes.data() + kSliceHeader + 4 * i));
    require(std::isfinite(hu[i]), ErrorKind::kNumerical,
            "slice: non-finite value at (" + std::to_string(i / w) + ", " + std::to_string(i % w) + ")");
  }
  return Slice(h, w, std::move(hu));
}

void save_slice(const Slice& s, const std::filesystem::path& path) {
  const auto bytes = encode_slice(s);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed for " + path.string());
}

Slice load_slice(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_slice(bytes);
}

void write_png16(const Image& img, const std::filesystem::path& path) {
  std::vector<std::uint16_t> px(img.values.size());
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<std::uint16_t>(std::lround(std::clamp(img.values[i], 0.0, 1.0) * 65535.0));
  png::write_gray16(path, img.height, img.width, px);
}

Image read_png16(const std::filesystem::path& path) {
  auto raw = png::read_gray16(path);
  Image img(raw.height, raw.width);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = raw.pixels[i] / 65535.0;
  return img;
}

}  // namespace ldct::imaging
