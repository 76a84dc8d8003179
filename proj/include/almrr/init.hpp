#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "almrr/param_store.hpp"
#include "almrr/rng.hpp"

// Parameter registration shared by the network modules. A parameter that
// already exists in the store (e.g. loaded from a checkpoint) is reused after
// a shape check; otherwise it is created from a per-name seeded initializer so
// that initial values do not depend on construction order.
namespace almrr::init {

inline std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return h;
}

using Filler = std::function<double(Rng&, std::size_t index)>;

inline Filler zeros() {
  return [](Rng&, std::size_t) { return 0.0; };
}
inline Filler constant(double v) {
  return [v](Rng&, std::size_t) { return v; };
}
inline Filler normal(double sigma) {
  return [sigma](Rng& r, std::size_t) { return normal01(r) * sigma; };
}
inline Filler trunc_normal(double sigma) {
  return [sigma](Rng& r, std::size_t) { return truncated_normal(r, sigma); };
}
inline Filler uniform_range(double bound) {
  return [bound](Rng& r, std::size_t) { return uniform(r, -bound, bound); };
}
/// Kaiming-normal for ReLU networks.
inline Filler kaiming(double fan_in) { return normal(std::sqrt(2.0 / fan_in)); }

template <typename T>
Tensor<T> param(ParamStore<T>& store, const std::string& name, Shape shape, const Filler& fill,
                std::uint64_t seed, bool frozen = false) {
  if (store.contains(name)) {
    const auto& t = store.get(name);
    if (t.shape() != shape)
      throw ShapeError("parameter '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                       shape_str(shape));
    return t;
  }
  Rng rng(derive_seed(seed, {name_hash(name)}));
  std::vector<T> v(numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(fill(rng, i));
  return store.add(name, std::move(shape), std::move(v), frozen);
}

}  // namespace almrr::init
