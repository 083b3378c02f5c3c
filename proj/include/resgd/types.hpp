#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace resgd {

using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Operand sizes do not agree.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A value that must be finite is not (overflow, divergence, bad input).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed or unreadable serialized data.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Height and width of a single-channel image, row-major flattening.
struct ImageShape {
    std::size_t h = 0;
    std::size_t w = 0;

    [[nodiscard]] std::size_t size() const { return h * w; }
    bool operator==(const ImageShape&) const = default;
};

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

inline void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw NumericError(std::string(what) + ": non-finite entries");
}

}  // namespace resgd
