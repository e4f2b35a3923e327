#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rclstm/error.hpp"

namespace rclstm {

namespace detail {
inline void require_paired(std::size_t a, std::size_t b, const char* what)
{
    if (a != b) throw ShapeError(std::string(what) + ": length mismatch");
    if (a == 0) throw DomainError(std::string(what) + ": empty input");
}
}  // namespace detail

/// sqrt(mean((actual - predicted)^2))
inline double rmse(std::span<const double> actual, std::span<const double> predicted)
{
    detail::require_paired(actual.size(), predicted.size(), "rmse");
    double s = 0.0;
    for (std::size_t k = 0; k < actual.size(); ++k) {
        const double r = actual[k] - predicted[k];
        s += r * r;
    }
    return std::sqrt(s / static_cast<double>(actual.size()));
}

/// Fraction of positions where the classes agree.
template <class T>
double accuracy(std::span<const T> actual, std::span<const T> predicted)
{
    detail::require_paired(actual.size(), predicted.size(), "accuracy");
    std::size_t hits = 0;
    for (std::size_t k = 0; k < actual.size(); ++k) hits += actual[k] == predicted[k] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(actual.size());
}

template <class T>
double accuracy(const std::vector<T>& actual, const std::vector<T>& predicted)
{
    return accuracy(std::span<const T>(actual), std::span<const T>(predicted));
}

}  // namespace rclstm
