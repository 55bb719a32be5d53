#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ldct/autodiff.hpp"

namespace ldct {

/// Ordered collection of named trainable leaves. Iteration order is
/// insertion order, which fixes the checkpoint layout and optimizer order.
class ParamTree {
 public:
  struct Entry {
    std::string name;
    ad::Var var;
  };

  ad::Var& add(const std::string& name, Array init);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const ad::Var& at(const std::string& name) const;
  ad::Var& at(const std::string& name);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t element_count() const;
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  void set_requires_grad(bool on);
  void zero_grad();
  /// Independent copy: same names and values, fresh leaves.
  ParamTree clone() const;
  bool same_layout(const ParamTree& other) const;
  /// Bitwise equality of every value.
  bool identical_values(const ParamTree& other) const;
  void round_to_float();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic stream derived from (seed, stream id, counter); used so that
/// every step's randomness can be recreated without carrying RNG state.
std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0);

/// He-normal initialiser for a weight with the given fan-in.
Array he_normal(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng, double gain = 1.0);

}  // namespace ldct
