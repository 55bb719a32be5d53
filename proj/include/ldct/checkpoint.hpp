#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ldct/array.hpp"
#include "ldct/params.hpp"

// Single-file container for named arrays:
//   "LDCK" | u32 LE version | u64 LE manifest bytes | manifest text | payload
// The manifest holds "meta <key> <value>" lines followed by
// "tensor <name> <d0>x<d1>... <byte offset>" lines; the payload is the
// concatenation of every tensor as binary32 little-endian.
namespace ldct::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct Tensor {
  std::string name;
  Array value;
};

class Container {
 public:
  void set_meta(const std::string& key, const std::string& value);
  bool has_meta(const std::string& key) const;
  const std::string& meta(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& meta_entries() const { return meta_; }

  void add(const std::string& name, const Array& value);
  bool contains(const std::string& name) const;
  const Array& tensor(const std::string& name) const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

  /// Stores every entry of `tree` as "<prefix><name>".
  void add_tree(const std::string& prefix, const ParamTree& tree);
  /// Copies "<prefix><name>" into each entry of `tree`; names and shapes
  /// must match exactly.
  void load_tree(const std::string& prefix, ParamTree& tree) const;

  std::vector<std::uint8_t> encode() const;
  static Container decode(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<Tensor> tensors_;
};

}  // namespace ldct::checkpoint
