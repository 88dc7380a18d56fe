#pragma once

#include <string>
#include <vector>

#include "uhal/core/graph.hpp"
#include "uhal/core/rng.hpp"

namespace uhal::models {

enum class Activation { Relu, Sine };

// Fully connected stack applied row-wise: in -> hidden x layers -> out, the
// last layer linear. With Sine, hidden layers compute sin(omega0 (W x + b)).
template <typename T>
class Mlp {
 public:
  Mlp(std::size_t in, std::size_t hidden, std::size_t layers, std::size_t out, Activation act, double omega0,
      core::RngStream& rng, const std::string& prefix = "mlp");

  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t layer_count() const { return dims_.size() - 1; }
  Activation activation() const { return act_; }

  // x: N x in. Parameters enter as trainable leaves when train is set.
  core::NodeId forward(core::Graph<T>& g, core::NodeId x, bool train);
  core::NodeId forward(core::Graph<T>& g, core::NodeId x) const;

  // weight0, bias0, weight1, bias1, ...
  std::vector<core::Parameter<T>*> parameters();
  std::vector<const core::Parameter<T>*> parameters() const;
  void zero_output_layer();

 private:
  core::NodeId run(core::Graph<T>& g, core::NodeId x, bool train) const;

  std::vector<std::size_t> dims_;
  Activation act_;
  double omega0_;
  std::vector<core::Parameter<T>> params_;
};

extern template class Mlp<float>;
extern template class Mlp<double>;

}  // namespace uhal::models
