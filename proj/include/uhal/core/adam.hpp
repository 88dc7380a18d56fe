#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uhal/core/graph.hpp"

namespace uhal::core {

// Adam with bias correction. Moment buffers are created lazily on the first
// step and keyed by position in the parameter list, so the same list must be
// passed on every step.
template <typename T>
class AdamState {
 public:
  explicit AdamState(T learning_rate = T(1e-3), T beta1 = T(0.9), T beta2 = T(0.999), T epsilon = T(1e-8));

  // Applies one update using each parameter's grad. Throws if a grad is
  // missing or misshapen.
  void step(std::span<Parameter<T>* const> params);

  T learning_rate() const { return lr_; }
  void set_learning_rate(T lr) { lr_ = lr; }
  T beta1() const { return beta1_; }
  T beta2() const { return beta2_; }
  T epsilon() const { return eps_; }
  std::uint64_t step_count() const { return steps_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  T lr_, beta1_, beta2_, eps_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

extern template class AdamState<float>;
extern template class AdamState<double>;

}  // namespace uhal::core
