#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rclstm {

/// Operand dimensions do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value outside its documented domain (densities, fractions, orders...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss or state.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t epoch = 0) : std::runtime_error(what), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Input data could not be ingested or transformed.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A serialized container is truncated, corrupt or of the wrong version.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A cache built from a different model revision was handed to backward.
class StaleCacheError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace rclstm
