#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

// Thin libpng wrappers; internal to the library.
namespace ldct::png {

struct Gray16 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> pixels;
};

struct Indexed {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> indices;
  std::vector<std::array<std::uint8_t, 3>> palette;
};

void write_gray16(const std::filesystem::path& path, std::size_t height, std::size_t width,
                  const std::vector<std::uint16_t>& pixels);
Gray16 read_gray16(const std::filesystem::path& path);

void write_indexed(const std::filesystem::path& path, const Indexed& image);
Indexed read_indexed(const std::filesystem::path& path);

}  // namespace ldct::png
