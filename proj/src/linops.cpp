#include "resgd/linops.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include <unsupported/Eigen/FFT>

namespace resgd {

namespace {

using Complex = std::complex<double>;
using ComplexVector = std::vector<Complex>;

// Unnormalized 2-D DFT of a row-major h x w buffer, in place.
void fft2(ComplexVector& data, ImageShape shape, bool inverse) {
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    const std::size_t h = shape.h, w = shape.w;

    ComplexVector in(std::max(h, w)), out(std::max(h, w));
    for (std::size_t r = 0; r < h; ++r) {
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(r * w), w, in.begin());
        if (inverse) {
            fft.inv(out.data(), in.data(), static_cast<int>(w));
        } else {
            fft.fwd(out.data(), in.data(), static_cast<int>(w));
        }
        std::copy_n(out.begin(), w, data.begin() + static_cast<std::ptrdiff_t>(r * w));
    }
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) in[r] = data[r * w + c];
        if (inverse) {
            fft.inv(out.data(), in.data(), static_cast<int>(h));
        } else {
            fft.fwd(out.data(), in.data(), static_cast<int>(h));
        }
        for (std::size_t r = 0; r < h; ++r) data[r * w + c] = out[r];
    }
}

}  // namespace

Vector LinearMap::apply(const Vector& x) const {
    require_dim(static_cast<std::size_t>(x.size()), n_in(), "LinearMap::apply");
    require_finite(x, "LinearMap::apply");
    return do_apply(x);
}

Vector LinearMap::adjoint_apply(const Vector& w) const {
    require_dim(static_cast<std::size_t>(w.size()), n_out(), "LinearMap::adjoint_apply");
    return do_adjoint(w);
}

DenseSensingMatrix::DenseSensingMatrix(RowMajorMatrix m) : m_(std::move(m)) {
    if (!m_.allFinite()) throw NumericError("DenseSensingMatrix: non-finite entries");
}

Vector DenseSensingMatrix::do_apply(const Vector& x) const { return m_ * x; }

Vector DenseSensingMatrix::do_adjoint(const Vector& w) const { return m_.transpose() * w; }

std::uint32_t MaskedFourierOperator::conjugate_index(ImageShape shape, std::uint32_t k) {
    const auto h = static_cast<std::uint32_t>(shape.h);
    const auto w = static_cast<std::uint32_t>(shape.w);
    const std::uint32_t r = k / w, c = k % w;
    return ((h - r) % h) * w + (w - c) % w;
}

MaskedFourierOperator::MaskedFourierOperator(ImageShape shape,
                                             const std::vector<std::uint32_t>& sampled)
    : shape_(shape) {
    if (shape.h == 0 || shape.w == 0) throw ConfigError("MaskedFourierOperator: empty image shape");
    const auto n = static_cast<std::uint32_t>(shape.size());
    std::vector<bool> in_mask(n, false);
    for (auto k : sampled) {
        if (k >= n) throw DimensionError("MaskedFourierOperator: sampled index out of range");
        in_mask[k] = true;
        in_mask[conjugate_index(shape, k)] = true;
    }
    for (std::uint32_t k = 0; k < n; ++k) {
        if (!in_mask[k]) continue;
        sampled_.push_back(k);
        const auto kc = conjugate_index(shape, k);
        if (kc == k) {
            slots_.push_back({k, false});
            n_out_ += 1;
        } else if (k < kc) {
            slots_.push_back({k, true});
            n_out_ += 2;
        }
    }
}

Vector MaskedFourierOperator::do_apply(const Vector& x) const {
    const std::size_t n = shape_.size();
    ComplexVector spec(n);
    for (std::size_t i = 0; i < n; ++i) spec[i] = Complex(x[static_cast<Eigen::Index>(i)], 0.0);
    fft2(spec, shape_, false);

    const double unit = 1.0 / std::sqrt(static_cast<double>(n));
    const double pair = std::sqrt(2.0) * unit;
    Vector y(static_cast<Eigen::Index>(n_out_));
    Eigen::Index o = 0;
    for (const auto& s : slots_) {
        const Complex v = spec[s.k];
        if (s.paired) {
            y[o++] = pair * v.real();
            y[o++] = pair * v.imag();
        } else {
            y[o++] = unit * v.real();
        }
    }
    return y;
}

Vector MaskedFourierOperator::do_adjoint(const Vector& w) const {
    const std::size_t n = shape_.size();
    ComplexVector spec(n, Complex(0.0, 0.0));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    Eigen::Index o = 0;
    for (const auto& s : slots_) {
        if (s.paired) {
            const Complex u(w[o] * inv_sqrt2, w[o + 1] * inv_sqrt2);
            o += 2;
            spec[s.k] = u;
            spec[conjugate_index(shape_, s.k)] = std::conj(u);
        } else {
            spec[s.k] = Complex(w[o++], 0.0);
        }
    }
    fft2(spec, shape_, true);

    const double unit = 1.0 / std::sqrt(static_cast<double>(n));
    Vector x(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) x[static_cast<Eigen::Index>(i)] = unit * spec[i].real();
    return x;
}

FidelityProblem::FidelityProblem(LinearMapPtr op_, Vector z_) : op(std::move(op_)), z(std::move(z_)) {
    if (!op) throw ConfigError("FidelityProblem: null operator");
    require_dim(static_cast<std::size_t>(z.size()), op->n_out(), "FidelityProblem measurement");
    require_finite(z, "FidelityProblem measurement");
}

double fidelity_value(const FidelityProblem& p, const Vector& x) {
    const double v = 0.5 * (p.op->apply(x) - p.z).squaredNorm();
    if (!std::isfinite(v)) throw NumericError("fidelity_value: overflow");
    return v;
}

Vector fidelity_gradient(const FidelityProblem& p, const Vector& x) {
    return p.op->adjoint_apply(p.op->apply(x) - p.z);
}

double estimate_spectral_norm(const LinearMap& op, std::size_t iters, std::uint64_t seed) {
    if (iters == 0) throw ConfigError("estimate_spectral_norm: iters must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(static_cast<Eigen::Index>(op.n_in()));
    for (auto& e : v) e = normal(rng);
    const double n0 = v.norm();
    if (n0 == 0.0) return 0.0;
    v /= n0;

    // ||Phi v|| with unit v is a Rayleigh-type lower bound on ||Phi||; under
    // power iteration it is nondecreasing.
    double estimate = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const Vector y = op.apply(v);
        estimate = std::max(estimate, y.norm());
        Vector next = op.adjoint_apply(y);
        const double nn = next.norm();
        if (nn == 0.0) return estimate;
        v = next / nn;
    }
    return std::max(estimate, op.apply(v).norm());
}

}  // namespace resgd
