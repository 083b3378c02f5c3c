#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "resgd/conv.hpp"
#include "resgd/problems.hpp"
#include "support/oracles.hpp"

using namespace resgd;

namespace {

bool bit_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// Pixels whose right or lower neighbour differs.
double gradient_fraction(const Vector& x, std::size_t h, std::size_t w) {
    std::size_t nz = 0;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const double v = x[static_cast<Eigen::Index>(r * w + c)];
            const bool dx = c + 1 < w && x[static_cast<Eigen::Index>(r * w + c + 1)] != v;
            const bool dy = r + 1 < h && x[static_cast<Eigen::Index>((r + 1) * w + c)] != v;
            nz += (dx || dy) ? 1 : 0;
        }
    return static_cast<double>(nz) / static_cast<double>(h * w);
}

}  // namespace

TEST(Gaussian, OrthonormalRows) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        const auto phi = orthonormal_gaussian_matrix(16, 1.0, seed);
        ASSERT_EQ(phi.rows(), 16);
        EXPECT_LE((phi * phi.transpose() - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-10);
    }
    const auto inst = make_gaussian_cs(8, 8, 0.4, 3);
    const auto& phi = dynamic_cast<const DenseSensingMatrix&>(*inst.problem.op).matrix();
    EXPECT_EQ(phi.rows(), 26);
    EXPECT_LE((phi * phi.transpose() - Eigen::MatrixXd::Identity(26, 26)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gaussian, RowCount) {
    EXPECT_EQ(measurement_count(1089, 0.5), 545u);
    EXPECT_EQ(measurement_count(1089, 0.1), 109u);
    EXPECT_EQ(measurement_count(100, 0.3), 30u);  // 0.3 * 100 is 30.000000000000004
    EXPECT_EQ(measurement_count(10, 1.0), 10u);
    EXPECT_EQ(measurement_count(10, 0.01), 1u);
    EXPECT_THROW((void)measurement_count(10, 0.0), ConfigError);
    EXPECT_THROW((void)measurement_count(10, 1.5), ConfigError);
    EXPECT_THROW((void)measurement_count(10, std::nan("")), ConfigError);
    EXPECT_EQ(make_gaussian_cs(33, 33, 0.5, 1).problem.op->n_out(), 545u);
}

TEST(Gaussian, DeterministicAndConsistent) {
    const auto a = make_gaussian_cs(8, 10, 0.3, 42);
    const auto b = make_gaussian_cs(8, 10, 0.3, 42);
    const auto& pa = dynamic_cast<const DenseSensingMatrix&>(*a.problem.op).matrix();
    const auto& pb = dynamic_cast<const DenseSensingMatrix&>(*b.problem.op).matrix();
    EXPECT_EQ(std::memcmp(pa.data(), pb.data(), sizeof(double) * static_cast<std::size_t>(pa.size())), 0);
    EXPECT_TRUE(bit_equal(a.problem.z, b.problem.z));
    ASSERT_TRUE(a.x_true.has_value());
    EXPECT_LE((pa * *a.x_true - a.problem.z).norm(), 1e-12);
    EXPECT_FALSE(bit_equal(a.problem.z, make_gaussian_cs(8, 10, 0.3, 43).problem.z));
    EXPECT_EQ(a.meta.kind, "gaussian");
    EXPECT_EQ(a.meta.shape.h, 8u);
    EXPECT_EQ(a.meta.shape.w, 10u);
}

TEST(Gaussian, NonExpansive) {
    std::mt19937_64 rng(9);
    const auto inst = make_gaussian_cs(8, 8, 0.5, 5);
    for (int t = 0; t < 100; ++t) {
        const Vector x = oracle::random_vector(64, rng, -3.0, 3.0);
        EXPECT_LE(inst.problem.op->apply(x).norm(), x.norm() * (1 + 1e-12));
    }
}

TEST(Fourier, FullSamplingIsOrthogonal) {
    for (MaskKind k : {MaskKind::radial, MaskKind::uniform_random}) {
        const auto inst = make_fourier_cs(8, 9, 1.0, k, 1);
        const Eigen::MatrixXd P = oracle::materialize(*inst.problem.op);
        EXPECT_LE((P.transpose() * P - Eigen::MatrixXd::Identity(72, 72)).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((inst.problem.op->adjoint_apply(inst.problem.z) - *inst.x_true).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Fourier, MaskCountsAndSymmetry) {
    for (ImageShape shape : {ImageShape{33, 33}, ImageShape{16, 16}, ImageShape{8, 12}}) {
        for (double ratio : {0.1, 0.2, 0.3, 0.5}) {
            for (MaskKind k : {MaskKind::radial, MaskKind::uniform_random}) {
                const auto mask = make_mask(shape, ratio, k, 3);
                const std::set<std::uint32_t> s(mask.begin(), mask.end());
                EXPECT_EQ(s.size(), mask.size());
                EXPECT_TRUE(s.count(0));
                for (auto i : mask) EXPECT_TRUE(s.count(MaskedFourierOperator::conjugate_index(shape, i)));
                const auto target = measurement_count(shape.size(), ratio);
                EXPECT_GE(mask.size(), target);
                EXPECT_LE(mask.size(), target + 1);
            }
        }
    }
    // Odd sides: only DC is self-conjugate, so odd targets are hit exactly.
    EXPECT_EQ(make_mask({33, 33}, 0.1, MaskKind::radial, 0).size(), 109u);
    EXPECT_EQ(make_mask({33, 33}, 0.2, MaskKind::radial, 0).size(), 219u);
    EXPECT_EQ(make_mask({33, 33}, 0.3, MaskKind::radial, 0).size(), 327u);
    EXPECT_THROW((void)make_mask({8, 8}, 0.0, MaskKind::radial, 0), ConfigError);
}

TEST(Fourier, RadialMaskFavoursLowFrequencies) {
    const ImageShape shape{32, 32};
    const auto radial = make_mask(shape, 0.2, MaskKind::radial, 0);
    const auto random = make_mask(shape, 0.2, MaskKind::uniform_random, 0);
    auto mean_radius = [&](const std::vector<std::uint32_t>& m) {
        double acc = 0;
        for (auto i : m) {
            auto fr = static_cast<double>(i / shape.w), fc = static_cast<double>(i % shape.w);
            if (fr > 16) fr -= 32;
            if (fc > 16) fc -= 32;
            acc += std::hypot(fr, fc);
        }
        return acc / static_cast<double>(m.size());
    };
    EXPECT_LT(mean_radius(radial), mean_radius(random));
    EXPECT_EQ(radial, make_mask(shape, 0.2, MaskKind::radial, 0));
    EXPECT_NE(random, make_mask(shape, 0.2, MaskKind::uniform_random, 1));
}

TEST(Fourier, MeasurementsMatchOperator) {
    const auto a = make_fourier_cs(12, 12, 0.3, MaskKind::uniform_random, 4);
    EXPECT_LE((a.problem.op->apply(*a.x_true) - a.problem.z).norm(), 1e-12);
    EXPECT_TRUE(bit_equal(a.problem.z, make_fourier_cs(12, 12, 0.3, MaskKind::uniform_random, 4).problem.z));
    EXPECT_EQ(a.meta.kind, "fourier");
    EXPECT_EQ(a.meta.mask, MaskKind::uniform_random);
}

TEST(Phantom, RangeAndDeterminism) {
    for (PhantomKind k : {PhantomKind::shepp_like, PhantomKind::blocks, PhantomKind::smooth_bumps}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Vector x = make_phantom(17, 23, k, seed);
            ASSERT_EQ(x.size(), 17 * 23);
            EXPECT_GE(x.minCoeff(), 0.0);
            EXPECT_LE(x.maxCoeff(), 1.0);
            EXPECT_GT(x.maxCoeff() - x.minCoeff(), 0.1);
            EXPECT_TRUE(bit_equal(x, make_phantom(17, 23, k, seed)));
        }
    }
    EXPECT_THROW((void)make_phantom(7, 8, PhantomKind::blocks, 0), ConfigError);
    EXPECT_THROW((void)make_phantom(8, 7, PhantomKind::shepp_like, 0), ConfigError);
}

TEST(Phantom, BlocksHaveSparseGradients) {
    for (std::uint64_t seed = 0; seed < 30; ++seed)
        for (std::size_t n : {8u, 16u, 33u, 64u}) EXPECT_LE(gradient_fraction(make_phantom(n, n, PhantomKind::blocks, seed), n, n), 0.2);
}

TEST(Phantom, ConstantRegionsVanishUnderZeroMeanKernels) {
    std::mt19937_64 rng(1);
    const ImageShape shape{12, 12};
    const Vector c = Vector::Constant(144, 0.7);
    ConvKernel k(2, 1, 3);
    for (auto& w : k.weights) w = std::uniform_real_distribution<double>(-1, 1)(rng);
    for (std::size_t o = 0; o < 2; ++o) {
        double mean = 0;
        for (std::size_t i = 0; i < 9; ++i) mean += k.weights[o * 9 + i] / 9;
        for (std::size_t i = 0; i < 9; ++i) k.weights[o * 9 + i] -= mean;
    }
    const Vector out = conv_forward(k, shape, c);
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t r = 1; r + 1 < 12; ++r)
            for (std::size_t col = 1; col + 1 < 12; ++col)
                EXPECT_NEAR(out[static_cast<Eigen::Index>(o * 144 + r * 12 + col)], 0.0, 1e-14);
}

TEST(Metrics, Examples) {
    const Vector x = Vector::LinSpaced(10, 0.0, 1.0);
    EXPECT_EQ(mse(x, x), 0.0);
    EXPECT_EQ(psnr(x, x), std::numeric_limits<double>::infinity());
    EXPECT_EQ(mse(x.array() + 1.0, x), 1.0);
    EXPECT_EQ(psnr(x.array() + 1.0, x), 0.0);
    Vector y = x;
    y.array() += 0.01;  // mse 1e-4
    EXPECT_NEAR(psnr(y, x), 40.0, 1e-9);
    EXPECT_NEAR(psnr(y, x, 255.0), 40.0 + 20 * std::log10(255.0), 1e-9);
    EXPECT_THROW((void)mse(x, Vector::Zero(3)), DimensionError);
    EXPECT_THROW((void)psnr(y, x, 0.0), ConfigError);
}

TEST(Instance, SaveLoadRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "resgd_test_instance";
    for (bool fourier : {false, true}) {
        std::filesystem::remove_all(dir);
        const auto inst = fourier ? make_fourier_cs(8, 8, 0.3, MaskKind::radial, 2) : make_gaussian_cs(8, 8, 0.3, 2);
        save_instance(dir, inst);
        const auto back = load_instance(dir);
        EXPECT_EQ(back.meta.kind, inst.meta.kind);
        EXPECT_EQ(back.meta.ratio, inst.meta.ratio);
        EXPECT_EQ(back.meta.seed, inst.meta.seed);
        EXPECT_EQ(back.meta.mask, inst.meta.mask);
        EXPECT_TRUE(bit_equal(back.problem.z, inst.problem.z));
        ASSERT_TRUE(back.x_true.has_value());
        EXPECT_TRUE(bit_equal(*back.x_true, *inst.x_true));
        EXPECT_TRUE(bit_equal(back.problem.op->apply(*inst.x_true), inst.problem.op->apply(*inst.x_true)));
    }
    std::filesystem::remove(dir / "z.bin");
    EXPECT_THROW((void)load_instance(dir), FormatError);
    std::filesystem::remove_all(dir);
    EXPECT_THROW((void)load_instance(dir), FormatError);
}
