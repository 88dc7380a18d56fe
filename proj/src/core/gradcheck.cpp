#include "uhal/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uhal/core/rng.hpp"

namespace uhal::core {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

namespace {
double evaluate(const std::function<NodeId(Graph<double>&)>& build_loss) {
  Graph<double> g;
  const NodeId loss = build_loss(g);
  return g.value(loss)[0];
}
}  // namespace

GradCheckReport finite_diff_check(const std::function<NodeId(Graph<double>&)>& build_loss,
                                  const std::vector<Parameter<double>*>& params, const GradCheckOptions& options) {
  for (auto* p : params) p->zero_grad();
  {
    Graph<double> g;
    const NodeId loss = build_loss(g);
    g.backward(loss);
  }
  GradCheckReport report;
  report.tolerance = options.tolerance;
  RngStream rng(CounterRng(options.seed).split(0x6772616463686bull));
  for (auto* p : params) {
    GradCheckEntry entry{p->name, 0.0, 0};
    const std::size_t n = p->value.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_entries_per_tensor != 0 && options.max_entries_per_tensor < n) {
      for (std::size_t i = 0; i < options.max_entries_per_tensor; ++i) {
        std::swap(idx[i], idx[i + rng.below(n - i)]);
      }
      idx.resize(options.max_entries_per_tensor);
    }
    for (std::size_t i : idx) {
      const double analytic = (p->grad.empty() ? 0.0 : p->grad[i]) * options.corrupt_analytic;
      const double saved = p->value[i];
      p->value[i] = saved + options.step;
      const double fp = evaluate(build_loss);
      p->value[i] = saved - options.step;
      const double fm = evaluate(build_loss);
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic - numeric) / denom);
      ++entry.checked;
    }
    if (entry.max_rel_error >= options.tolerance) report.passed = false;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace uhal::core
