#include "lbsf/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lbsf/error.hpp"

namespace lbsf::nn {

namespace {

double evaluate(ParameterStore<double>& params, const LossBuilder& loss) {
    Graph<double> g(&params);
    const Var out = loss(g);
    const auto& v = g.value(out);
    if (v.size() != 1 || !std::isfinite(v[0])) {
        throw NumericError("finite_diff_check: loss is not a finite scalar");
    }
    return v[0];
}

} // namespace

GradCheckResult finite_diff_check(ParameterStore<double>& params, const LossBuilder& loss, double eps,
                                  std::size_t min_coordinates, std::uint64_t seed, double floor) {
    GradientBuffer<double> grads(params);
    {
        Graph<double> g(&params, &grads);
        const Var out = loss(g);
        if (!std::isfinite(g.value(out)[0])) {
            throw NumericError("finite_diff_check: loss is not finite");
        }
        g.backward(out);
    }

    std::size_t total = 0;
    for (const auto& p : params) {
        if (p.trainable) {
            total += p.value.size();
        }
    }

    // Per-tensor quota proportional to size, at least a few per tensor.
    std::mt19937_64 rng(seed);
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (!params[pi].trainable) {
            continue;
        }
        const std::size_t n = params[pi].value.size();
        std::size_t quota = total <= min_coordinates
                                ? n
                                : std::max<std::size_t>(4, (min_coordinates * n + total - 1) / total);
        quota = std::min(quota, n);
        std::vector<std::size_t> offsets(n);
        std::iota(offsets.begin(), offsets.end(), std::size_t{0});
        std::shuffle(offsets.begin(), offsets.end(), rng);
        for (std::size_t k = 0; k < quota; ++k) {
            coords.emplace_back(pi, offsets[k]);
        }
    }

    GradCheckResult result;
    for (auto [pi, off] : coords) {
        double& slot = params[pi].value[off];
        const double saved = slot;
        slot = saved + eps;
        const double plus = evaluate(params, loss);
        slot = saved - eps;
        const double minus = evaluate(params, loss);
        slot = saved;

        const double numeric = (plus - minus) / (2.0 * eps);
        const double analytic = grads[pi][off];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++result.coordinates_checked;
        if (rel > result.max_relative_error || result.worst_parameter.empty()) {
            result.max_relative_error = std::max(result.max_relative_error, rel);
            result.worst_parameter = params[pi].name;
            result.worst_offset = off;
            result.worst_analytic = analytic;
            result.worst_numeric = numeric;
        }
    }
    return result;
}

} // namespace lbsf::nn
