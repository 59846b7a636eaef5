#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "handfield/math/geometry.hpp"

namespace handfield {

// Named dense parameter arrays with a parallel gradient accumulator.
// Shapes are immutable once added; all storage is one contiguous block.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    std::vector<uint64_t> shape;
    size_t offset = 0;
    size_t size = 0;
  };

  size_t add(const std::string& name, std::vector<uint64_t> shape) {
    if (has(name)) throw std::invalid_argument("ParameterStore: duplicate entry " + name);
    size_t n = 1;
    for (uint64_t d : shape) n *= size_t(d);
    Entry e{name, std::move(shape), data_.size(), n};
    data_.resize(data_.size() + n, Real(0));
    grad_.resize(data_.size(), Real(0));
    entries_.push_back(std::move(e));
    return entries_.back().offset;
  }

  bool has(const std::string& name) const {
    for (const Entry& e : entries_)
      if (e.name == name) return true;
    return false;
  }
  const Entry& entry(const std::string& name) const {
    for (const Entry& e : entries_)
      if (e.name == name) return e;
    throw std::out_of_range("ParameterStore: no entry " + name);
  }
  const std::vector<Entry>& entries() const { return entries_; }

  std::span<Real> values(const std::string& name) {
    const Entry& e = entry(name);
    return {data_.data() + e.offset, e.size};
  }
  std::span<const Real> values(const std::string& name) const {
    const Entry& e = entry(name);
    return {data_.data() + e.offset, e.size};
  }
  std::span<Real> grads(const std::string& name) {
    const Entry& e = entry(name);
    return {grad_.data() + e.offset, e.size};
  }

  size_t size() const { return data_.size(); }
  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  Real* grad() { return grad_.data(); }
  const Real* grad() const { return grad_.data(); }

  void zero_grad() { std::fill(grad_.begin(), grad_.end(), Real(0)); }

  void accumulate_grad(std::span<const Real> g) {
    if (g.size() != grad_.size()) throw std::invalid_argument("gradient size mismatch");
    for (size_t i = 0; i < grad_.size(); ++i) grad_[i] += g[i];
  }

  bool values_finite() const {
    for (Real v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::vector<Real> data_;
  std::vector<Real> grad_;
};

}  // namespace handfield
