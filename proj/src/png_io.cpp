#include "png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "ldct/error.hpp"

namespace ldct::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  require(f != nullptr, ErrorKind::kIo, "cannot open " + path.string());
  return f;
}

[[noreturn]] void on_png_error(png_structp, png_const_charp msg) { throw Error(ErrorKind::kFormat, msg); }
void on_png_warning(png_structp, png_const_charp) {}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : file_(open_file(path, "wb")) {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
    info_ = png_create_info_struct(png_);
    png_init_io(png_, file_.get());
    png_set_compression_level(png_, 6);
  }
  ~Writer() { png_destroy_write_struct(&png_, &info_); }
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  File file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : file_(open_file(path, "rb")) {
    png_byte sig[8];
    require(std::fread(sig, 1, 8, file_.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, ErrorKind::kFormat,
            path.string() + " is not a PNG file");
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
    info_ = png_create_info_struct(png_);
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
  }
  ~Reader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  File file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

void write_gray16(const std::filesystem::path& path, std::size_t height, std::size_t width,
                  const std::vector<std::uint16_t>& pixels) {
  Writer w(path);
  png_set_IHDR(w.png(), w.info(), static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png(), w.info());
  std::vector<png_byte> row(2 * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const auto v = pixels[y * width + x];
      row[2 * x] = static_cast<png_byte>(v >> 8);  // PNG samples are big-endian
      row[2 * x + 1] = static_cast<png_byte>(v & 0xff);
    }
    png_write_row(w.png(), row.data());
  }
  png_write_end(w.png(), nullptr);
}

Gray16 read_gray16(const std::filesystem::path& path) {
  Reader r(path);
  require(png_get_color_type(r.png(), r.info()) == PNG_COLOR_TYPE_GRAY &&
              png_get_bit_depth(r.png(), r.info()) == 16,
          ErrorKind::kFormat, path.string() + " is not a 16-bit grayscale PNG");
  Gray16 out;
  out.width = png_get_image_width(r.png(), r.info());
  out.height = png_get_image_height(r.png(), r.info());
  out.pixels.resize(out.width * out.height);
  std::vector<png_byte> row(2 * out.width);
  for (std::size_t y = 0; y < out.height; ++y) {
    png_read_row(r.png(), row.data(), nullptr);
    for (std::size_t x = 0; x < out.width; ++x)
      out.pixels[y * out.width + x] = static_cast<std::uint16_t>(row[2 * x] << 8 | row[2 * x + 1]);
  }
  return out;
}

void write_indexed(const std::filesystem::path& path, const Indexed& image) {
  Writer w(path);
  png_set_IHDR(w.png(), w.info(), static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_color> palette;
  for (const auto& c : image.palette) palette.push_back({c[0], c[1], c[2]});
  png_set_PLTE(w.png(), w.info(), palette.data(), static_cast<int>(palette.size()));
  png_write_info(w.png(), w.info());
  for (std::size_t y = 0; y < image.height; ++y)
    png_write_row(w.png(), image.indices.data() + y * image.width);
  png_write_end(w.png(), nullptr);
}

Indexed read_indexed(const std::filesystem::path& path) {
  Reader r(path);
  require(png_get_color_type(r.png(), r.info()) == PNG_COLOR_TYPE_PALETTE &&
              png_get_bit_depth(r.png(), r.info()) == 8,
          ErrorKind::kFormat, path.string() + " is not an 8-bit indexed PNG");
  Indexed out;
  out.width = png_get_image_width(r.png(), r.info());
  out.height = png_get_image_height(r.png(), r.info());
  png_colorp palette = nullptr;
  int count = 0;
  png_get_PLTE(r.png(), r.info(), &palette, &count);
  for (int i = 0; i < count; ++i) out.palette.push_back({palette[i].red, palette[i].green, palette[i].blue});
  out.indices.resize(out.width * out.height);
  for (std::size_t y = 0; y < out.height; ++y) png_read_row(r.png(), out.indices.data() + y * out.width, nullptr);
  return out;
}

}  // namespace ldct::png
