#pragma once

#include <cstddef>
#include <vector>

#include "resgd/filter_bank.hpp"
#include "resgd/types.hpp"

namespace resgd {

/// g(x) (or a dual variable of the same shape) as m locations of d channels,
/// stored channel-major: entry (i, j) lives at values[j*m + i].
struct FeatureField {
    std::size_t m = 0;
    std::size_t d = 0;
    Vector values;

    FeatureField() = default;
    FeatureField(std::size_t m_, std::size_t d_, Vector v);

    /// Builds a field from per-location blocks, all of equal length.
    [[nodiscard]] static FeatureField from_blocks(const std::vector<std::vector<double>>& blocks);

    [[nodiscard]] double at(std::size_t i, std::size_t j) const {
        return values[static_cast<Eigen::Index>(j * m + i)];
    }
    [[nodiscard]] double block_norm(std::size_t i) const;
    [[nodiscard]] Vector block_norms() const;
};

/// Smoothing parameter eta > 0.
class SmoothingLevel {
public:
    explicit SmoothingLevel(double eta);
    [[nodiscard]] double value() const { return eta_; }

private:
    double eta_;
};

/// Bounds for the transform and the smoothed regularizer:
/// M >= sup ||grad g||, L_g = Lipschitz constant of grad g, and
/// L_reta = m L_g + M^2 / eta.
struct RegularizerBounds {
    double M = 0.0;
    double L_g = 0.0;
    double L_reta = 0.0;
    std::size_t m = 0;
    double eta = 0.0;
};

[[nodiscard]] FeatureField g_apply(const FilterBank& fb, const Vector& x);

/// grad g(x)^T w = A^T diag(sigma'(A x)) B^T w, with (A~, B~) in place of
/// (A^T, B^T) when `learned` is set.
[[nodiscard]] Vector g_jacobian_transpose_apply(const FilterBank& fb, const Vector& x,
                                                const FeatureField& w, bool learned);

/// ||g||_{2,1}.
[[nodiscard]] double r_value(const FeatureField& field);

/// Blockwise closed-form maximizer of <g, y> - eta/2 ||y||^2 over ||y_i|| <= 1.
[[nodiscard]] FeatureField dual_maximizer(const FeatureField& field, SmoothingLevel eta);

/// Huber-type smoothed (2,1)-norm.
[[nodiscard]] double r_eta_value(const FeatureField& field, SmoothingLevel eta);

[[nodiscard]] Vector r_eta_gradient(const FilterBank& fb, const Vector& x, SmoothingLevel eta,
                                    bool learned);

/// Value and gradient of r_eta at x sharing a single forward pass.
struct SmoothedEval {
    double value = 0.0;
    Vector gradient;
};
[[nodiscard]] SmoothedEval r_eta_value_and_gradient(const FilterBank& fb, const Vector& x,
                                                    SmoothingLevel eta, bool learned);

/// Conservative bounds from operator norms (power iteration, 100 steps).
[[nodiscard]] RegularizerBounds estimate_bounds(const FilterBank& fb, SmoothingLevel eta);

}  // namespace resgd
