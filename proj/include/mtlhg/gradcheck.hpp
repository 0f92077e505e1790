#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mtlhg/common.hpp"

namespace mtlhg {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
    bool pass = false;
};

/// Compares an analytic gradient against central finite differences over the
/// parameters named by `indices`. `f` must be a pure deterministic scalar map
/// of the parameter vector; it is re-evaluated with each parameter nudged by
/// +-step and the relative error uses denominator max(|a|,|n|,1e-8).
template <typename F>
GradCheckReport grad_check_subset(F&& f, std::span<double> params,
                                  std::span<const double> analytic,
                                  std::span<const std::int64_t> indices, double tolerance,
                                  double step = 1e-5) {
    if (analytic.size() != params.size()) {
        throw DimensionError("grad_check: analytic gradient length does not match parameter count");
    }
    GradCheckReport rep;
    for (std::int64_t i : indices) {
        const double saved = params[static_cast<std::size_t>(i)];
        params[static_cast<std::size_t>(i)] = saved + step;
        const double f_plus = f(std::span<const double>(params.data(), params.size()));
        params[static_cast<std::size_t>(i)] = saved - step;
        const double f_minus = f(std::span<const double>(params.data(), params.size()));
        params[static_cast<std::size_t>(i)] = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw EvalError("grad_check: objective returned a non-finite value");
        }
        const double numeric = (f_plus - f_minus) / (2.0 * step);
        const double a = analytic[static_cast<std::size_t>(i)];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > rep.max_rel_err) rep.max_rel_err = rel;
        ++rep.checked;
    }
    rep.pass = rep.max_rel_err <= tolerance;
    return rep;
}

/// Full-parameter variant.
template <typename F>
GradCheckReport grad_check(F&& f, std::span<double> params, std::span<const double> analytic,
                           double tolerance, double step = 1e-5) {
    std::vector<std::int64_t> all(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) all[i] = static_cast<std::int64_t>(i);
    return grad_check_subset(std::forward<F>(f), params, analytic, all, tolerance, step);
}

}  // namespace mtlhg
