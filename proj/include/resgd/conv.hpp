#pragma once

#include <cstddef>
#include <vector>

#include "resgd/types.hpp"

namespace resgd {

/// Multi-channel 2-D convolution kernel bank, weights laid out
/// [out_ch][in_ch][ky][kx]. Feature maps are channel-major: channel c of an
/// h x w image occupies entries [c*h*w, (c+1)*h*w).
///
/// Convolution is cross-correlation with zero padding and "same" output
/// size; ksize must be odd.
struct ConvKernel {
    std::size_t out_ch = 0;
    std::size_t in_ch = 0;
    std::size_t ksize = 0;
    std::vector<double> weights;

    ConvKernel() = default;
    ConvKernel(std::size_t out, std::size_t in, std::size_t k);

    [[nodiscard]] double& at(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
        return weights[((o * in_ch + i) * ksize + ky) * ksize + kx];
    }
    [[nodiscard]] double at(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
        return weights[((o * in_ch + i) * ksize + ky) * ksize + kx];
    }

    /// out_ch x (in_ch*ksize*ksize) row-major view of the weights.
    [[nodiscard]] RowMajorMatrix as_matrix() const;
    [[nodiscard]] static ConvKernel from_matrix(const RowMajorMatrix& m, std::size_t in_ch,
                                                std::size_t ksize);

    bool operator==(const ConvKernel&) const = default;
};

/// out[o] = sum_i W[o][i] (*) in[i].
[[nodiscard]] Vector conv_forward(const ConvKernel& k, ImageShape shape, const Vector& in);

/// Exact adjoint of conv_forward for the same kernel (a transposed
/// convolution): maps out_ch channels back to in_ch channels.
[[nodiscard]] Vector conv_transpose(const ConvKernel& k, ImageShape shape, const Vector& in);

}  // namespace resgd
