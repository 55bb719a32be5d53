#include "ldct/params.hpp"

#include <cmath>
#include <cstring>

#include "ldct/error.hpp"

namespace ldct {

ad::Var& ParamTree::add(const std::string& name, Array init) {
  require(!contains(name), ErrorKind::kInvalidArgument, "duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, ad::Var(std::move(init), true)});
  return entries_.back().var;
}

const ad::Var& ParamTree::at(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::kInvalidArgument, "unknown parameter " + name);
  return entries_[it->second].var;
}

ad::Var& ParamTree::at(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::kInvalidArgument, "unknown parameter " + name);
  return entries_[it->second].var;
}

std::size_t ParamTree::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParamTree::set_requires_grad(bool on) {
  for (auto& e : entries_) e.var.set_requires_grad(on);
}

void ParamTree::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

ParamTree ParamTree::clone() const {
  ParamTree copy;
  for (const auto& e : entries_) {
    auto& v = copy.add(e.name, e.var.value());
    v.set_requires_grad(e.var.requires_grad());
  }
  return copy;
}

bool ParamTree::same_layout(const ParamTree& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name != other.entries_[i].name || entries_[i].var.shape() != other.entries_[i].var.shape())
      return false;
  return true;
}

bool ParamTree::identical_values(const ParamTree& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i].var.value();
    const auto& b = other.entries_[i].var.value();
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void ParamTree::round_to_float() {
  for (auto& e : entries_) ldct::round_to_float(e.var.mutable_value().values());
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32)};
  return std::mt19937_64(seq);
}

Array he_normal(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng, double gain) {
  Array a(shape);
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : a.values()) v = static_cast<double>(static_cast<float>(dist(rng)));
  return a;
}

}  // namespace ldct
