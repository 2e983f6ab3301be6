#include "cinpp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cinpp {

GradCheckReport finite_difference_check(const std::function<Tensor()>& loss, std::span<Parameter* const> params,
                                        const GradCheckOptions& options) {
  for (Parameter* p : params) p->tensor.zero_grad();
  const Tensor l0 = loss();
  l0.backward();
  const double f0 = l0.item();

  std::vector<std::vector<double>> analytic;
  for (Parameter* p : params) {
    const auto g = p->tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  Rng sampler = Rng(options.seed).split("gradcheck");
  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    ParamCheck check;
    check.name = p.name;

    std::vector<std::size_t> entries(p.tensor.numel());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.max_entries_per_param > 0 && entries.size() > options.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), sampler);
      entries.resize(options.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }

    auto values = p.tensor.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : entries) {
      const double x0 = values[i];
      const double xp = x0 + options.step;
      const double xm = x0 - options.step;
      values[i] = xp;
      const double fp = loss().item();
      values[i] = xm;
      const double fm = loss().item();
      values[i] = x0;

      const double numeric = (fp - fm) / (xp - xm);
      const double forward = (fp - f0) / options.step;
      const double backward = (f0 - fm) / options.step;
      if (std::fabs(forward - backward) > options.kink_tol * std::max(1.0, std::fabs(numeric))) {
        ++check.skipped;
        continue;
      }
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), options.abs_floor});
      const double rel = std::fabs(a - numeric) / denom;
      ++check.checked;
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      if (rel >= check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = i;
        check.worst_analytic = a;
        check.worst_numeric = numeric;
      }
    }
    if (check.checked > 0) {
      check.norm_rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), options.abs_floor});
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.max_norm_rel_error = std::max(report.max_norm_rel_error, check.norm_rel_error);
    report.checked += check.checked;
    report.skipped += check.skipped;
    report.params.push_back(std::move(check));
  }
  report.passed = report.max_norm_rel_error < options.tol;
  return report;
}

}  // namespace cinpp
