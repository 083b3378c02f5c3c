#include "resgd/conv.hpp"

#include <algorithm>

namespace resgd {

namespace {

struct Span1d {
    std::size_t dst_begin;
    std::size_t dst_end;
    std::ptrdiff_t shift;  // src = dst + shift
};

// Output positions [begin, end) whose source position (p + off) lies in [0, len).
Span1d valid_range(std::size_t len, std::ptrdiff_t off) {
    const auto n = static_cast<std::ptrdiff_t>(len);
    const std::ptrdiff_t b = std::max<std::ptrdiff_t>(0, -off);
    const std::ptrdiff_t e = std::min<std::ptrdiff_t>(n, n - off);
    if (e <= b) return {0, 0, off};
    return {static_cast<std::size_t>(b), static_cast<std::size_t>(e), off};
}

void check_kernel(const ConvKernel& k) {
    if (k.ksize == 0 || k.ksize % 2 == 0) throw ConfigError("ConvKernel: ksize must be odd");
    if (k.weights.size() != k.out_ch * k.in_ch * k.ksize * k.ksize) {
        throw DimensionError("ConvKernel: weight count does not match shape");
    }
}

// dst[:, dst region] += wgt * src[:, dst region + (dy, dx)]
void shifted_axpy(double wgt, const double* src, double* dst, ImageShape shape, std::ptrdiff_t dy,
                  std::ptrdiff_t dx) {
    const auto rows = valid_range(shape.h, dy);
    const auto cols = valid_range(shape.w, dx);
    const auto w = static_cast<std::ptrdiff_t>(shape.w);
    for (std::size_t r = rows.dst_begin; r < rows.dst_end; ++r) {
        const auto rr = static_cast<std::ptrdiff_t>(r);
        double* d = dst + rr * w;
        const double* s = src + (rr + dy) * w + dx;
        for (std::size_t c = cols.dst_begin; c < cols.dst_end; ++c) d[c] += wgt * s[c];
    }
}

}  // namespace

ConvKernel::ConvKernel(std::size_t out, std::size_t in, std::size_t k)
    : out_ch(out), in_ch(in), ksize(k), weights(out * in * k * k, 0.0) {
    check_kernel(*this);
}

RowMajorMatrix ConvKernel::as_matrix() const {
    RowMajorMatrix m(out_ch, in_ch * ksize * ksize);
    std::copy(weights.begin(), weights.end(), m.data());
    return m;
}

ConvKernel ConvKernel::from_matrix(const RowMajorMatrix& m, std::size_t in_ch, std::size_t ksize) {
    if (static_cast<std::size_t>(m.cols()) != in_ch * ksize * ksize) {
        throw DimensionError("ConvKernel::from_matrix: column count does not match in_ch*k*k");
    }
    ConvKernel k(static_cast<std::size_t>(m.rows()), in_ch, ksize);
    std::copy(m.data(), m.data() + m.size(), k.weights.begin());
    return k;
}

Vector conv_forward(const ConvKernel& k, ImageShape shape, const Vector& in) {
    check_kernel(k);
    const std::size_t m = shape.size();
    require_dim(static_cast<std::size_t>(in.size()), k.in_ch * m, "conv_forward");
    Vector out = Vector::Zero(static_cast<Eigen::Index>(k.out_ch * m));
    const auto r = static_cast<std::ptrdiff_t>(k.ksize / 2);
    for (std::size_t o = 0; o < k.out_ch; ++o) {
        double* dst = out.data() + o * m;
        for (std::size_t i = 0; i < k.in_ch; ++i) {
            const double* src = in.data() + i * m;
            for (std::size_t ky = 0; ky < k.ksize; ++ky) {
                for (std::size_t kx = 0; kx < k.ksize; ++kx) {
                    const double wgt = k.at(o, i, ky, kx);
                    if (wgt == 0.0) continue;
                    shifted_axpy(wgt, src, dst, shape, static_cast<std::ptrdiff_t>(ky) - r,
                                 static_cast<std::ptrdiff_t>(kx) - r);
                }
            }
        }
    }
    return out;
}

Vector conv_transpose(const ConvKernel& k, ImageShape shape, const Vector& in) {
    check_kernel(k);
    const std::size_t m = shape.size();
    require_dim(static_cast<std::size_t>(in.size()), k.out_ch * m, "conv_transpose");
    Vector out = Vector::Zero(static_cast<Eigen::Index>(k.in_ch * m));
    const auto r = static_cast<std::ptrdiff_t>(k.ksize / 2);
    for (std::size_t i = 0; i < k.in_ch; ++i) {
        double* dst = out.data() + i * m;
        for (std::size_t o = 0; o < k.out_ch; ++o) {
            const double* src = in.data() + o * m;
            for (std::size_t ky = 0; ky < k.ksize; ++ky) {
                for (std::size_t kx = 0; kx < k.ksize; ++kx) {
                    const double wgt = k.at(o, i, ky, kx);
                    if (wgt == 0.0) continue;
                    shifted_axpy(wgt, src, dst, shape, r - static_cast<std::ptrdiff_t>(ky),
                                 r - static_cast<std::ptrdiff_t>(kx));
                }
            }
        }
    }
    return out;
}

}  // namespace resgd
