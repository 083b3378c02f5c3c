#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>

#include "resgd/conv.hpp"
#include "resgd/linops.hpp"
#include "resgd/types.hpp"

namespace resgd {

/// C^1 piecewise activation: 0 below -delta, the quadratic
/// x^2/(4 delta) + x/2 + delta/4 on (-delta, delta), identity above delta.
struct SmoothActivation {
    double delta = 0.1;

    explicit SmoothActivation(double delta_ = 0.1);

    [[nodiscard]] double eval(double x) const {
        if (x <= -delta) return 0.0;
        if (x >= delta) return x;
        return x * x / (4.0 * delta) + 0.5 * x + 0.25 * delta;
    }
    [[nodiscard]] double deriv(double x) const {
        if (x <= -delta) return 0.0;
        if (x >= delta) return 1.0;
        return x / (2.0 * delta) + 0.5;
    }
};

/// Weights of a two-stage analysis cascade A = A2 * A1, a mixing
/// convolution B and their learned approximate transposes.
///
/// The tilde kernels are applied as transposed convolutions, so a tilde
/// kernel equal to its forward kernel reproduces the exact adjoint.
struct FilterBankWeights {
    ConvKernel a1;  // d x 1 x k x k
    ConvKernel a2;  // d x d x k x k
    ConvKernel b;   // d x d x k x k
    ConvKernel a1_tilde;
    ConvKernel a2_tilde;
    ConvKernel b_tilde;
};

/// The nonlinear sparsifying transform g(x) = B sigma(A x) on an h x w image,
/// producing m = h*w locations with d channels each. Immutable.
class FilterBank {
public:
    FilterBank(ImageShape shape, FilterBankWeights weights, SmoothActivation act);

    /// d = 1, ksize = 1-tap-centered kernels: A = B = identity.
    [[nodiscard]] static FilterBank identity(ImageShape shape, double delta = 0.1,
                                             std::size_t ksize = 3);

    /// Seeded Gaussian kernels, each (out, in) slice shifted to zero mean and
    /// scaled by `scale / sqrt(in*k*k)`. Tilde kernels equal the forward ones.
    [[nodiscard]] static FilterBank seeded_random(ImageShape shape, std::size_t d, std::size_t ksize,
                                                  double delta, std::uint64_t seed,
                                                  double scale = 1.0);

    /// Copy with the tilde kernels replaced.
    [[nodiscard]] FilterBank with_learned_inverses(ConvKernel a1_tilde, ConvKernel a2_tilde,
                                                   ConvKernel b_tilde) const;

    [[nodiscard]] ImageShape shape() const { return shape_; }
    [[nodiscard]] std::size_t n() const { return shape_.size(); }
    [[nodiscard]] std::size_t m() const { return shape_.size(); }
    [[nodiscard]] std::size_t d() const { return d_; }
    [[nodiscard]] std::size_t ksize() const { return w_.a1.ksize; }
    [[nodiscard]] std::size_t feature_size() const { return m() * d_; }
    [[nodiscard]] const SmoothActivation& activation() const { return act_; }
    [[nodiscard]] const FilterBankWeights& weights() const { return w_; }
    /// True when every tilde kernel equals its forward kernel bit for bit.
    [[nodiscard]] bool exact_adjoint() const;

    [[nodiscard]] Vector apply_A(const Vector& x) const;
    [[nodiscard]] Vector apply_A_transpose(const Vector& v, bool learned) const;
    [[nodiscard]] Vector apply_B(const Vector& v) const;
    [[nodiscard]] Vector apply_B_transpose(const Vector& v, bool learned) const;

    /// A and B as LinearMaps (for spectral norm estimation).
    [[nodiscard]] LinearMapPtr analysis_map() const;
    [[nodiscard]] LinearMapPtr mixing_map() const;

private:
    ImageShape shape_;
    std::size_t d_;
    FilterBankWeights w_;
    SmoothActivation act_;
};

}  // namespace resgd
