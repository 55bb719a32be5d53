#include "ldct/dataset.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "ldct/error.hpp"
#include "ldct/params.hpp"

namespace ldct::data {
namespace {

std::string pair_name(std::size_t i) {
  const auto digits = std::to_string(i);
  return std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

}  // namespace

std::vector<SlicePair> synthesize(std::size_t count, std::size_t size, std::uint64_t seed) {
  require(count >= 1, ErrorKind::kInvalidArgument, "synthesize: count must be >= 1");
  std::vector<SlicePair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t phantom_seed = derived_rng(seed, 0x73796e74, i)();
    auto [clean, noisy] = imaging::generate_phantom(imaging::random_body_phantom(phantom_seed, size));
    pairs.push_back({pair_name(i), std::move(noisy), std::move(clean)});
  }
  return pairs;
}

void write_pairs(const std::filesystem::path& dir, const std::vector<SlicePair>& pairs, std::uint64_t seed) {
  require(!pairs.empty(), ErrorKind::kInvalidArgument, "write_pairs: nothing to write");
  std::error_code ec;
  std::filesystem::create_directories(dir / "ldct", ec);
  std::filesystem::create_directories(dir / "ndct", ec);
  require(!ec, ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  nlohmann::ordered_json manifest{{"count", pairs.size()}, {"size", pairs.front().clean.height()}, {"seed", seed}};
  manifest["slices"] = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    imaging::save_slice(p.noisy, dir / "ldct" / (p.name + ".slc"));
    imaging::save_slice(p.clean, dir / "ndct" / (p.name + ".slc"));
    manifest["slices"].push_back(p.name);
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::vector<SlicePair> read_pairs(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, manifest_path.string() + ": " + e.what());
  }
  require(manifest.contains("slices") && manifest["slices"].is_array(), ErrorKind::kFormat,
          manifest_path.string() + ": missing 'slices' array");
  std::vector<SlicePair> pairs;
  for (const auto& name : manifest["slices"]) {
    require(name.is_string(), ErrorKind::kFormat, manifest_path.string() + ": slice names must be strings");
    const std::string n = name.get<std::string>();
    pairs.push_back({n, imaging::load_slice(dir / "ldct" / (n + ".slc")), imaging::load_slice(dir / "ndct" / (n + ".slc"))});
  }
  return pairs;
}

Dataset make_dataset(const std::vector<SlicePair>& pairs, imaging::HuWindow window, double threshold_hu) {
  require(!pairs.empty(), ErrorKind::kInvalidArgument, "dataset is empty");
  const std::size_t h = pairs.front().clean.height(), w = pairs.front().clean.width();
  Dataset d;
  for (const auto& p : pairs) {
    require(p.clean.height() == h && p.clean.width() == w && p.noisy.height() == h && p.noisy.width() == w,
            ErrorKind::kShape,
            "slice " + p.name + " is " + std::to_string(p.noisy.height()) + "x" + std::to_string(p.noisy.width()) +
                " / " + std::to_string(p.clean.height()) + "x" + std::to_string(p.clean.width()) + ", expected " +
                std::to_string(h) + "x" + std::to_string(w));
    d.names.push_back(p.name);
    d.noisy.push_back(imaging::hu_window_normalize(p.noisy, window));
    d.clean.push_back(imaging::hu_window_normalize(p.clean, window));
    d.masks.push_back(imaging::foreground_mask(p.clean, threshold_hu));
  }
  return d;
}

}  // namespace ldct::data
