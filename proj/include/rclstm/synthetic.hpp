#pragma once

// Built-in synthetic series so experiments run without external data. All
// generators are deterministic given their seed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "rclstm/error.hpp"
#include "rclstm/linalg.hpp"
#include "rclstm/random.hpp"

namespace rclstm::synthetic {

/// offset + amplitude * sin(2 pi k / period) + N(0, noise_sd).
inline Vector sine(std::size_t n, double period, double noise_sd = 0.0, std::uint64_t seed = 1, double amplitude = 0.4,
                   double offset = 0.5)
{
    if (!(period > 0.0)) throw DomainError("synthetic::sine: period must be > 0");
    Rng rng(derive_seed(seed, 0x51));
    Vector s(n);
    for (std::size_t k = 0; k < n; ++k) {
        s[k] = offset + amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period);
        if (noise_sd > 0.0) s[k] += noise_sd * rng.normal();
    }
    return s;
}

/// Level series whose first differences follow
/// w_t = intercept + sum_j phi_j w_{t-j} + N(0, noise_sd). A burn-in of
/// `burn_in` differences is discarded.
inline Vector ar_on_differences(std::size_t n, const Vector& phi, double intercept = 0.0, double noise_sd = 1.0,
                                std::uint64_t seed = 1, std::size_t burn_in = 500)
{
    Rng rng(derive_seed(seed, 0xa5));
    const std::size_t p = phi.size();
    Vector w(p, 0.0);
    Vector level;
    level.reserve(n);
    double x = 0.0;
    for (std::size_t t = 0; t < burn_in + n; ++t) {
        double next = intercept + noise_sd * rng.normal();
        for (std::size_t j = 1; j <= p; ++j) next += phi[j - 1] * w[w.size() - j];
        if (!std::isfinite(next) || std::abs(next) > 1e150)
            throw DomainError("synthetic::ar_on_differences: process is explosive");
        w.push_back(next);
        if (t >= burn_in) {
            x += next;
            level.push_back(x);
        }
    }
    return level;
}

/// Long-memory regime task. A hidden level jumps between `regimes`
/// equally spaced values in [0.2, 0.8] with probability `switch_prob` per
/// step and is observed through heavy Gaussian noise. The best one-step
/// forecast pools evidence over many past steps, so short-memory
/// predictors (last value, low-order AR) do poorly.
inline Vector regime_switching(std::size_t n, std::uint64_t seed = 1, double switch_prob = 0.02,
                               double noise_sd = 0.15, std::size_t regimes = 3)
{
    if (regimes < 2) throw DomainError("synthetic::regime_switching: need at least two regimes");
    Rng rng(derive_seed(seed, 0x12));
    std::size_t state = rng.index(regimes);
    Vector s(n);
    const double step = 0.6 / static_cast<double>(regimes - 1);
    for (std::size_t k = 0; k < n; ++k) {
        if (rng.uniform() < switch_prob) state = (state + 1 + rng.index(regimes - 1)) % regimes;
        s[k] = 0.2 + step * static_cast<double>(state) + noise_sd * rng.normal();
    }
    return s;
}

/// Long-range forecasting task: a slow two-level regime (switch
/// probability 0.01, levels 0.2 and 0.8) plus a damped AR(2) oscillation
/// x_t = 1.5 x_{t-1} - 0.8 x_{t-2} + N(0, 0.05^2), observed through
/// N(0, noise_sd^2). Forecasting well needs both a long pooled estimate of
/// the level and a precise model of the last few oscillation steps.
struct LongRangeParams {
    double switch_prob = 0.01;
    double phi1 = 1.5;
    double phi2 = -0.8;
    double innovation_sd = 0.05;
    double noise_sd = 0.25;
};

inline Vector long_range(std::size_t n, std::uint64_t seed = 1, const LongRangeParams& p = {})
{
    const auto level = regime_switching(n, seed, p.switch_prob, 0.0, 2);
    Rng rng(derive_seed(seed, 0x1a));
    Vector s(n);
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = p.phi1 * a + p.phi2 * b + p.innovation_sd * rng.normal();
        b = a;
        a = x;
        s[k] = level[k] + x + p.noise_sd * rng.normal();
    }
    return s;
}

/// Maps a series onto strictly positive values via 10^(1 + s) so that the
/// log10 + min-max pipeline recovers a min-max scaled copy of `s`.
inline Vector as_positive_levels(const Vector& s)
{
    Vector out(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) out[k] = std::pow(10.0, 1.0 + s[k]);
    return out;
}

enum class Kind { sine, ar5, regime, long_range };

inline Kind parse_kind(const std::string& s)
{
    if (s == "sine") return Kind::sine;
    if (s == "ar5") return Kind::ar5;
    if (s == "regime") return Kind::regime;
    if (s == "long_range") return Kind::long_range;
    throw DomainError("unknown synthetic series '" + s + "' (expected sine, ar5, regime or long_range)");
}

/// Ground-truth coefficients used by the built-in AR(5) generator.
inline const Vector& default_ar5_coefficients()
{
    static const Vector phi{0.4, -0.2, 0.15, 0.1, -0.1};
    return phi;
}

inline Vector generate(Kind kind, std::size_t n, std::uint64_t seed)
{
    switch (kind) {
    case Kind::sine: return sine(n, 50.0, 0.0, seed);
    case Kind::ar5: return ar_on_differences(n, default_ar5_coefficients(), 0.0, 1.0, seed);
    case Kind::regime: return regime_switching(n, seed);
    case Kind::long_range: return long_range(n, seed);
    }
    throw DomainError("synthetic::generate: bad kind");
}

}  // namespace rclstm::synthetic
