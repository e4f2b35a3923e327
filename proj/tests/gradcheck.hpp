#pragma once

// Central finite-difference gradient checker shared by the unit and
// acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gradcheck {

/// |a - n| / max(|a|, |n|, floor). The floor keeps the ratio meaningful for
/// entries whose true gradient is at the level of finite-difference
/// round-off (about eps * |loss| / step).
inline double relative_error(double analytic, double numeric, double floor = 1e-4)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct Report {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::string worst;
};

/// For every selected entry of `params`, perturbs by +-step, re-evaluates
/// `loss` (which must read the current parameter values) and compares the
/// central difference with `analytic`. `after_change` runs after every
/// perturbation (e.g. to refresh derived kernels). `include(b, j)` selects
/// which entries count as parameters.
inline Report check(std::vector<std::span<double>> params, const std::vector<std::span<double>>& analytic,
                    const std::function<double()>& loss, const std::function<void()>& after_change,
                    const std::function<bool(std::size_t, std::size_t)>& include, double step = 1e-6,
                    double floor = 1e-4)
{
    Report rep;
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t j = 0; j < params[b].size(); ++j) {
            if (!include(b, j)) continue;
            const double orig = params[b][j];
            params[b][j] = orig + step;
            after_change();
            const double lp = loss();
            params[b][j] = orig - step;
            after_change();
            const double lm = loss();
            params[b][j] = orig;
            after_change();
            const double numeric = (lp - lm) / (2.0 * step);
            const double err = relative_error(analytic[b][j], numeric, floor);
            ++rep.checked;
            if (err > rep.max_relative_error) {
                rep.max_relative_error = err;
                rep.worst = "block " + std::to_string(b) + " entry " + std::to_string(j) +
                            ": analytic=" + std::to_string(analytic[b][j]) + " numeric=" + std::to_string(numeric);
            }
        }
    }
    return rep;
}

}  // namespace gradcheck
