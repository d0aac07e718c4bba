#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "segsr/params.hpp"

namespace segsr {

struct FiniteDiffOptions {
  double eps = 1e-5;
  // Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Builds the scalar loss from the bound parameters. Called once for the
// analytic pass and twice per checked coordinate.
using LossBuilder = std::function<Var<double>(ForwardContext<double>&)>;

// Compares reverse-mode gradients against central differences:
//   max |analytic - central| / max(|analytic|, |central|, 1e-8).
// Parameters are restored to their original values on return.
FiniteDiffReport finite_diff_check(const LossBuilder& build, std::span<Parameter<double>* const> params,
                                   const FiniteDiffOptions& opts = {});

}  // namespace segsr
