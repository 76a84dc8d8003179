#include "almrr/param_store.hpp"

#include <cmath>

namespace almrr {

template <typename T>
void adam_step(ParamStore<T>& store, const AdamOptions& opt) {
  for (const auto& [name, e] : store.entries())
    if (!e.frozen && !e.value.has_grad()) throw ArgumentError("adam_step: no gradient for parameter '" + name + "'");

  const std::uint64_t t = store.step_count() + 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (auto& [name, e] : store.entries()) {
    if (e.frozen) continue;
    auto p = e.value.mutable_data();
    auto g = e.value.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      e.m[i] = b1 * e.m[i] + (T(1) - b1) * g[i];
      e.v[i] = b2 * e.v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = e.m[i] / static_cast<T>(bc1);
      const T v_hat = e.v[i] / static_cast<T>(bc2);
      p[i] -= static_cast<T>(opt.lr) * m_hat / (std::sqrt(v_hat) + static_cast<T>(opt.eps));
    }
    e.value.clear_grad();
  }
  store.set_step_count(t);
}

template void adam_step(ParamStore<float>&, const AdamOptions&);
template void adam_step(ParamStore<double>&, const AdamOptions&);

}  // namespace almrr
