#include "segsr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace segsr {

namespace {

double evaluate(const LossBuilder& build) {
  Graph<double> g;
  ForwardContext<double> ctx(g, false);
  Var<double> loss = build(ctx);
  if (loss.value().size() != 1) throw ShapeError("finite_diff_check: loss must be scalar");
  return loss.value()[0];
}

}  // namespace

FiniteDiffReport finite_diff_check(const LossBuilder& build, std::span<Parameter<double>* const> params,
                                   const FiniteDiffOptions& opts) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    ForwardContext<double> ctx(g);
    Var<double> loss = build(ctx);
    g.backward(loss);
    for (Parameter<double>* p : params) {
      Tensor<double> grad(p->value.shape());
      for (const auto& b : ctx.bindings())
        if (b.param == p) grad = g.grad(b.node);
      analytic.push_back(std::move(grad));
    }
  }

  FiniteDiffReport report;
  Rng rng(opts.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<double>& p = *params[k];
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_param != 0 && coords.size() > opts.max_coords_per_param) {
      for (std::size_t i = 0; i < opts.max_coords_per_param; ++i) {
        std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
      }
      coords.resize(opts.max_coords_per_param);
    }
    for (std::size_t idx : coords) {
      const double orig = p.value[idx];
      p.value[idx] = orig + opts.eps;
      const double up = evaluate(build);
      p.value[idx] = orig - opts.eps;
      const double down = evaluate(build);
      p.value[idx] = orig;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double a = analytic[k][idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = std::max(err, report.max_rel_error);
        if (err >= report.max_rel_error) {
          report.worst_param = p.name;
          report.worst_index = idx;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace segsr
