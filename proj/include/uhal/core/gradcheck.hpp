#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uhal/core/graph.hpp"

namespace uhal::core {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = true;
  double worst() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Entries per tensor to perturb; 0 checks all of them.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // Scales the analytic gradient before comparing; only for negative controls.
  double corrupt_analytic = 1.0;
};

// Compares backward() against central differences. build_loss must rebuild
// the whole forward pass on the graph it is given and return a scalar node.
GradCheckReport finite_diff_check(const std::function<NodeId(Graph<double>&)>& build_loss,
                                  const std::vector<Parameter<double>*>& params, const GradCheckOptions& options = {});

}  // namespace uhal::core
