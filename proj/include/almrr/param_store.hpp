#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "almrr/tensor.hpp"

namespace almrr {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable (or frozen) parameters plus Adam moment state.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    bool frozen = false;
    std::vector<T> m;  // first moment
    std::vector<T> v;  // second moment
  };

  /// Registers a parameter. Frozen entries never require gradients.
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> init, bool frozen = false) {
    if (entries_.count(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
    auto t = Tensor<T>::from(std::move(shape), std::move(init), !frozen);
    Entry e{t, frozen, {}, {}};
    if (!frozen) {
      e.m.assign(t.numel(), T(0));
      e.v.assign(t.numel(), T(0));
    }
    entries_.emplace(name, std::move(e));
    return t;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor<T>& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second.value;
  }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second;
  }

  /// Entries in lexicographic name order.
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t s) { step_count_ = s; }

  void zero_grad() {
    for (auto& [_, e] : entries_) e.value.clear_grad();
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_)
      if (!e.frozen) n += e.value.numel();
    return n;
  }

  /// FNV-1a over the raw bytes of the selected entries.
  std::uint64_t checksum(bool frozen_only = false) const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, e] : entries_) {
      if (frozen_only && !e.frozen) continue;
      for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
      const auto* bytes = reinterpret_cast<const unsigned char*>(e.value.data().data());
      for (std::size_t i = 0; i < e.value.numel() * sizeof(T); ++i) h = (h ^ bytes[i]) * 1099511628211ull;
    }
    return h;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t step_count_ = 0;
};

/// Bias-corrected Adam update over every unfrozen entry; clears gradients.
/// Throws if an unfrozen entry has no gradient.
template <typename T>
void adam_step(ParamStore<T>& store, const AdamOptions& opt);

}  // namespace almrr
