#include "uhal/core/adam.hpp"

#include <cmath>

#include "uhal/core/error.hpp"
#include "uhal/simd/kernels.hpp"

namespace uhal::core {

template <typename T>
AdamState<T>::AdamState(T learning_rate, T beta1, T beta2, T epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate >= T(0))) throw std::invalid_argument("adam: learning rate must be non-negative");
}

template <typename T>
void AdamState<T>::step(std::span<Parameter<T>* const> params) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter list changed size between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    if (p->grad.empty()) throw ShapeError("adam: parameter '" + p->name + "' has no gradient");
    if (p->grad.shape() != p->value.shape() || m_[i].shape() != p->value.shape()) {
      throw ShapeError("adam: gradient shape " + shape_str(p->grad.shape()) + " does not match parameter '" +
                       p->name + "' " + shape_str(p->value.shape()));
    }
  }
  ++steps_;
  const T t = static_cast<T>(steps_);
  const simd::AdamCoeffs<T> c{lr_, beta1_, beta2_, eps_, T(1) - std::pow(beta1_, t), T(1) - std::pow(beta2_, t)};
  const auto& k = simd::kernels<T>();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    k.adam(p->value.size(), p->value.ptr(), p->grad.ptr(), m_[i].ptr(), v_[i].ptr(), c);
  }
}

template class AdamState<float>;
template class AdamState<double>;

}  // namespace uhal::core
