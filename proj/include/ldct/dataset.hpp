#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ldct/imaging.hpp"

// Paired LDCT/NDCT slices on disk:
//   DIR/manifest.json   {"count", "size", "seed", "slices": [names]}
//   DIR/ldct/<name>.slc noisy input
//   DIR/ndct/<name>.slc clean target
namespace ldct::data {

struct SlicePair {
  std::string name;
  imaging::Slice noisy;
  imaging::Slice clean;
};

/// Network-ready view of a set of pairs.
struct Dataset {
  std::vector<std::string> names;
  std::vector<imaging::Image> noisy;
  std::vector<imaging::Image> clean;
  std::vector<imaging::Mask> masks;  // foreground of the clean slice

  std::size_t size() const noexcept { return names.size(); }
  std::size_t height() const { return clean.front().height; }
  std::size_t width() const { return clean.front().width; }
};

/// `count` random body phantoms; pair i is fully determined by (seed, i).
std::vector<SlicePair> synthesize(std::size_t count, std::size_t size, std::uint64_t seed);

void write_pairs(const std::filesystem::path& dir, const std::vector<SlicePair>& pairs, std::uint64_t seed);
std::vector<SlicePair> read_pairs(const std::filesystem::path& dir);

/// Windows every slice and builds masks. Rejects empty input and pairs
/// whose shapes disagree with each other or with the first pair.
Dataset make_dataset(const std::vector<SlicePair>& pairs, imaging::HuWindow window = {},
                     double foreground_threshold_hu = imaging::kDefaultForegroundThresholdHu);

}  // namespace ldct::data
