#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "lbsf/nn/graph.hpp"

namespace lbsf::nn {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
    std::string worst_parameter;
    std::size_t worst_offset = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Builds a scalar loss on the given graph from the store's parameters.
using LossBuilder = std::function<Var(Graph<double>&)>;

// Central differences (f(p+eps) - f(p-eps)) / (2 eps) against reverse-mode
// gradients, on a seeded subsample of at least `min_coordinates` trainable
// coordinates spread over every parameter tensor (all of them when fewer
// exist). Relative error uses max(|analytic|, |numeric|, floor) as the
// denominator; the floor sits above central-difference round-off (about
// 1e-16 |f| / eps) so structurally zero gradients do not read as failures.
// Parameters are restored before returning. Throws NumericError when f is
// not finite.
GradCheckResult finite_diff_check(ParameterStore<double>& params, const LossBuilder& loss, double eps = 1e-4,
                                  std::size_t min_coordinates = 200, std::uint64_t seed = 0, double floor = 1e-6);

} // namespace lbsf::nn
