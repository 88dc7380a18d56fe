#include "uhal/train/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "uhal/core/error.hpp"

namespace uhal::train {

template <typename T>
double mse(const core::Tensor<T>& a, const core::Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shapes differ, " + core::shape_str(a.shape()) + " vs " + core::shape_str(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

template <typename T>
double psnr(const core::Tensor<T>& a, const core::Tensor<T>& b, double peak) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / m);
}

template <typename T>
core::Tensor<T> clamp01(core::Tensor<T> t) {
  for (auto& v : t.storage()) v = std::clamp(v, T(0), T(1));
  return t;
}

template double mse<float>(const core::Tensor<float>&, const core::Tensor<float>&);
template double mse<double>(const core::Tensor<double>&, const core::Tensor<double>&);
template double psnr<float>(const core::Tensor<float>&, const core::Tensor<float>&, double);
template double psnr<double>(const core::Tensor<double>&, const core::Tensor<double>&, double);
template core::Tensor<float> clamp01<float>(core::Tensor<float>);
template core::Tensor<double> clamp01<double>(core::Tensor<double>);

}  // namespace uhal::train
