#include "ldct/array.hpp"

#include <cmath>
#include <sstream>

#include "ldct/error.hpp"

namespace ldct {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kEmptyForeground: return "empty_foreground";
  }
  return "unknown";
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  require(data_.size() == element_count(shape_), ErrorKind::kShape,
          "array data size " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
}

void Array::fill(double value) {
  for (auto& v : data_) v = value;
}

Array Array::reshaped(Shape shape) const {
  require(element_count(shape) == data_.size(), ErrorKind::kShape,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Array(std::move(shape), data_);
}

bool Array::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void round_to_float(std::span<double> values) noexcept {
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace ldct
