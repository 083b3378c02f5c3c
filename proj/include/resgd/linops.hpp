#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "resgd/types.hpp"

namespace resgd {

/// A real linear map R^n_in -> R^n_out with its adjoint.
///
/// Implementations are immutable once constructed; apply and adjoint may be
/// called concurrently.
class LinearMap {
public:
    virtual ~LinearMap() = default;

    [[nodiscard]] virtual std::size_t n_in() const = 0;
    [[nodiscard]] virtual std::size_t n_out() const = 0;

    /// y = Phi x. Throws DimensionError / NumericError.
    [[nodiscard]] Vector apply(const Vector& x) const;
    /// x = Phi^T w. Throws DimensionError.
    [[nodiscard]] Vector adjoint_apply(const Vector& w) const;

protected:
    virtual Vector do_apply(const Vector& x) const = 0;
    virtual Vector do_adjoint(const Vector& w) const = 0;
};

using LinearMapPtr = std::shared_ptr<const LinearMap>;

/// Row-major dense n' x n sensing matrix.
class DenseSensingMatrix final : public LinearMap {
public:
    explicit DenseSensingMatrix(RowMajorMatrix m);

    std::size_t n_in() const override { return static_cast<std::size_t>(m_.cols()); }
    std::size_t n_out() const override { return static_cast<std::size_t>(m_.rows()); }
    const RowMajorMatrix& matrix() const { return m_; }

protected:
    Vector do_apply(const Vector& x) const override;
    Vector do_adjoint(const Vector& w) const override;

private:
    RowMajorMatrix m_;
};

/// Partial 2-D Fourier sampling of a real h x w image, expressed in real
/// arithmetic.
///
/// The sampled set is closed under k -> -k (mod h, w); a real image's
/// spectrum is Hermitian, so sampling k determines -k. Each self-conjugate
/// frequency contributes one output (Re X_k) and each conjugate pair {k, -k}
/// contributes two (sqrt2 Re X_k, sqrt2 Im X_k) where X = F x with the
/// unitary DFT. The rows of the resulting operator are orthonormal, so
/// Phi Phi^T = I and, for a full mask, Phi^T Phi = I. n_out equals the
/// number of sampled frequency indices.
class MaskedFourierOperator final : public LinearMap {
public:
    /// `sampled` holds flat indices r*w + c; they are closed under
    /// conjugation and deduplicated on construction.
    MaskedFourierOperator(ImageShape shape, const std::vector<std::uint32_t>& sampled);

    std::size_t n_in() const override { return shape_.size(); }
    std::size_t n_out() const override { return n_out_; }
    ImageShape shape() const { return shape_; }
    /// Sorted, conjugate-closed sampled flat indices.
    const std::vector<std::uint32_t>& sampled() const { return sampled_; }

    /// Flat index of the conjugate frequency -k.
    [[nodiscard]] static std::uint32_t conjugate_index(ImageShape shape, std::uint32_t k);

protected:
    Vector do_apply(const Vector& x) const override;
    Vector do_adjoint(const Vector& w) const override;

private:
    struct Slot {
        std::uint32_t k;
        bool paired;  // true: two outputs (re, im); false: one output (re)
    };

    ImageShape shape_;
    std::vector<std::uint32_t> sampled_;
    std::vector<Slot> slots_;
    std::size_t n_out_ = 0;
};

/// Data-fidelity problem f(x) = 1/2 ||Phi x - z||^2.
struct FidelityProblem {
    LinearMapPtr op;
    Vector z;

    FidelityProblem(LinearMapPtr op_, Vector z_);
    [[nodiscard]] std::size_t n() const { return op->n_in(); }
};

[[nodiscard]] double fidelity_value(const FidelityProblem& p, const Vector& x);
[[nodiscard]] Vector fidelity_gradient(const FidelityProblem& p, const Vector& x);

/// Power iteration on Phi^T Phi from a seeded Gaussian start; returns the
/// estimate of ||Phi||_2 (a lower bound that increases with iters).
[[nodiscard]] double estimate_spectral_norm(const LinearMap& op, std::size_t iters = 100,
                                            std::uint64_t seed = 0);

}  // namespace resgd
