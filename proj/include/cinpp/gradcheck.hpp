#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cinpp/nn.hpp"

namespace cinpp {

struct GradCheckOptions {
  double step = 1e-6;
  double tol = 1e-6;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  // Central differences carry roughly eps * |f| / step of rounding noise, so
  // gradients far below that level cannot be compared relatively.
  double abs_floor = 1e-3;
  // One-sided slopes differing by more than this (relative to max(1, |n|))
  // mark a kink; the entry is skipped instead of compared.
  double kink_tol = 1e-4;
  std::size_t max_entries_per_param = 0;  // 0 = every entry
  std::uint64_t seed = 0;                 // entry sampling
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // |a - n| / max(|a|, |n|, floor) over the whole tensor, 2-norms.
  double norm_rel_error = 0.0;
};

// Pass/fail uses the per-parameter (tensor-wise) error; the entry-wise maximum
// is reported alongside. Entry-wise error on gradients near the floor is
// bounded below by about ulp(f) / (2 * step).
struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  double max_norm_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

// `loss` must be deterministic: no dropout, batch norm in evaluation mode or
// on a fixed batch.
GradCheckReport finite_difference_check(const std::function<Tensor()>& loss, std::span<Parameter* const> params,
                                        const GradCheckOptions& options = {});

}  // namespace cinpp
