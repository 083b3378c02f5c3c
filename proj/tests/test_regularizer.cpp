#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "resgd/filter_bank.hpp"
#include "resgd/regularizer.hpp"
#include "support/oracles.hpp"

using namespace resgd;

namespace {

ConvKernel center_tap(double v, std::size_t k = 3) {
    ConvKernel c(1, 1, k);
    c.at(0, 0, k / 2, k / 2) = v;
    return c;
}

// A = a * I, B = b * I on a single channel.
FilterBank scaled_identity(ImageShape s, double a, double b, double delta) {
    return FilterBank(s, {center_tap(a), center_tap(1.0), center_tap(b), center_tap(a), center_tap(1.0), center_tap(b)},
                      SmoothActivation(delta));
}

ConvKernel jitter(ConvKernel k, double sd, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, sd);
    for (auto& w : k.weights) w += nd(rng);
    return k;
}

}  // namespace

TEST(Conv, MatchesDenseOracle) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (ImageShape s : {ImageShape{5, 6}, ImageShape{4, 4}, ImageShape{2, 7}}) {
        for (std::size_t ks : {1u, 3u, 5u}) {
            ConvKernel k(3, 2, ks);
            for (auto& w : k.weights) w = nd(rng);
            const auto M = oracle::conv_matrix(k, s);
            const Vector x = oracle::random_vector(static_cast<long>(2 * s.size()), rng);
            const Vector y = oracle::random_vector(static_cast<long>(3 * s.size()), rng);
            EXPECT_LE((conv_forward(k, s, x) - M * x).norm(), 1e-12 * (1 + (M * x).norm()));
            EXPECT_LE((conv_transpose(k, s, y) - M.transpose() * y).norm(), 1e-12 * (1 + (M.transpose() * y).norm()));
        }
    }
}

TEST(Conv, KernelMatrixRoundTrip) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    ConvKernel k(4, 3, 3);
    for (auto& w : k.weights) w = nd(rng);
    const auto m = k.as_matrix();
    EXPECT_EQ(m.rows(), 4);
    EXPECT_EQ(m.cols(), 27);
    EXPECT_EQ(ConvKernel::from_matrix(m, 3, 3), k);
    EXPECT_THROW(ConvKernel(1, 1, 2), ConfigError);
}

TEST(Conv, ZeroMeanKernelKillsConstantInterior) {
    const auto fb = FilterBank::seeded_random({10, 10}, 4, 3, 0.1, 3);
    const Vector c = Vector::Constant(100, 0.7);
    const Vector out = conv_forward(fb.weights().a1, fb.shape(), c);
    for (std::size_t ch = 0; ch < 4; ++ch)
        for (std::size_t r = 1; r + 1 < 10; ++r)
            for (std::size_t col = 1; col + 1 < 10; ++col)
                EXPECT_NEAR(out[static_cast<Eigen::Index>(ch * 100 + r * 10 + col)], 0.0, 1e-14);
}

TEST(Activation, Values) {
    const SmoothActivation act(0.1);
    EXPECT_EQ(act.eval(0.5), 0.5);
    EXPECT_EQ(act.eval(-0.1), 0.0);
    EXPECT_DOUBLE_EQ(act.eval(0.1), 0.1);
    EXPECT_DOUBLE_EQ(act.eval(0.0), 0.025);
    EXPECT_EQ(act.deriv(-1.0), 0.0);
    EXPECT_EQ(act.deriv(1.0), 1.0);
    EXPECT_DOUBLE_EQ(act.deriv(0.0), 0.5);
    EXPECT_THROW(SmoothActivation(0.0), ConfigError);
    EXPECT_THROW(SmoothActivation(-1.0), ConfigError);
}

TEST(Activation, SmoothnessProperties) {
    std::mt19937_64 rng(3);
    for (double delta : {0.01, 0.1, 2.0}) {
        const SmoothActivation act(delta);
        std::uniform_real_distribution<double> u(-3 * delta, 3 * delta);
        for (int t = 0; t < 2000; ++t) {
            const double x = u(rng), y = u(rng);
            EXPECT_GE(act.deriv(x), 0.0);
            EXPECT_LE(act.deriv(x), 1.0);
            EXPECT_LE(std::abs(act.deriv(x) - act.deriv(y)), std::abs(x - y) / (2 * delta) * (1 + 1e-12) + 1e-15);
            const double h = 1e-6 * delta;
            EXPECT_NEAR((act.eval(x + h) - act.eval(x - h)) / (2 * h), act.deriv(x), 1e-6);
        }
    }
}

TEST(FilterBank, IdentityInLinearRegion) {
    const ImageShape s{3, 4};
    const auto fb = FilterBank::identity(s, 0.1);
    std::mt19937_64 rng(4);
    const Vector x = oracle::random_vector(12, rng, 0.1, 5.0);
    EXPECT_EQ(g_apply(fb, x).values, x);
    EXPECT_EQ(g_apply(fb, Vector::Constant(12, -50.0)).values.norm(), 0.0);

    const Vector w = oracle::random_vector(12, rng);
    EXPECT_EQ(g_jacobian_transpose_apply(fb, x, FeatureField(12, 1, w), false), w);
}

TEST(FilterBank, GMatchesDenseOracle) {
    std::mt19937_64 rng(5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto fb = FilterBank::seeded_random({5, 6}, 3, 3, 0.3, seed);
        const auto D = oracle::dense_bank(fb);
        const Vector x = oracle::random_vector(30, rng);
        const Vector ref = oracle::g(D, x);
        EXPECT_LE((g_apply(fb, x).values - ref).norm(), 1e-12 * (1 + ref.norm()));
    }
}

TEST(FilterBank, JacobianTransposeMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto fb = FilterBank::seeded_random({6, 6}, 4, 3, 0.5, seed);
        const Vector x = oracle::random_vector(36, rng);
        const Vector w = oracle::random_vector(static_cast<long>(fb.feature_size()), rng);
        const Vector fd = oracle::central_diff([&](const Vector& y) { return g_apply(fb, y).values.dot(w); }, x, 1e-6);
        const Vector jt = g_jacobian_transpose_apply(fb, x, FeatureField(fb.m(), fb.d(), w), false);
        EXPECT_LE(oracle::rel_err(jt, fd), 1e-5);
        const Vector dense_jt = oracle::jacobian(oracle::dense_bank(fb), x).transpose() * w;
        EXPECT_LE(oracle::rel_err(jt, dense_jt), 1e-12);
    }
}

TEST(FilterBank, LearnedModeIsBitIdenticalWhenExact) {
    std::mt19937_64 rng(7);
    const auto fb = FilterBank::seeded_random({7, 5}, 3, 3, 0.2, 8);
    ASSERT_TRUE(fb.exact_adjoint());
    const Vector x = oracle::random_vector(35, rng);
    const FeatureField w(fb.m(), fb.d(), oracle::random_vector(static_cast<long>(fb.feature_size()), rng));
    const Vector a = g_jacobian_transpose_apply(fb, x, w, true);
    const Vector b = g_jacobian_transpose_apply(fb, x, w, false);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())), 0);
}

TEST(FilterBank, LearnedModeUsesTildeOperators) {
    std::mt19937_64 rng(8);
    const auto base = FilterBank::seeded_random({5, 5}, 3, 3, 0.2, 9);
    const auto& wt = base.weights();
    const auto fb = base.with_learned_inverses(jitter(wt.a1, 0.1, rng), jitter(wt.a2, 0.1, rng), jitter(wt.b, 0.1, rng));
    EXPECT_FALSE(fb.exact_adjoint());
    const auto D = oracle::dense_bank(fb);
    const Vector x = oracle::random_vector(25, rng);
    const Vector w = oracle::random_vector(75, rng);
    const Vector a = D.A * x;
    Vector s(a.size());
    for (long i = 0; i < a.size(); ++i) s[i] = oracle::sigma_prime(a[i], D.delta);
    const Vector ref = D.At * s.asDiagonal() * (D.Bt * w);
    const Vector got = g_jacobian_transpose_apply(fb, x, FeatureField(25, 3, w), true);
    EXPECT_LE(oracle::rel_err(got, ref), 1e-12);
}

TEST(FilterBank, RejectsInconsistentWeights) {
    FilterBankWeights w{ConvKernel(2, 1, 3), ConvKernel(2, 2, 3), ConvKernel(3, 2, 3),
                        ConvKernel(2, 1, 3), ConvKernel(2, 2, 3), ConvKernel(2, 2, 3)};
    EXPECT_THROW(FilterBank({4, 4}, w, SmoothActivation(0.1)), DimensionError);
    w.b = ConvKernel(2, 2, 3);
    w.a1.weights[0] = NAN;
    EXPECT_THROW(FilterBank({4, 4}, w, SmoothActivation(0.1)), NumericError);
}

TEST(RValue, Examples) {
    EXPECT_DOUBLE_EQ(r_value(FeatureField::from_blocks({{3, 4}})), 5.0);
    EXPECT_EQ(r_value(FeatureField(3, 2, Vector::Zero(6))), 0.0);
    EXPECT_DOUBLE_EQ(r_value(FeatureField::from_blocks({{1, 0}, {0, 2}})), 3.0);
}

TEST(FeatureFieldLayout, ChannelMajor) {
    const auto f = FeatureField::from_blocks({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(f.m, 2u);
    EXPECT_EQ(f.d, 3u);
    EXPECT_EQ(f.at(1, 0), 4.0);
    EXPECT_EQ(f.values[1], 4.0);
    EXPECT_EQ(f.values[2], 2.0);
    EXPECT_THROW(FeatureField::from_blocks({{1, 2}, {3}}), DimensionError);
}

TEST(DualMaximizer, Examples) {
    const SmoothingLevel one(1.0);
    auto y = dual_maximizer(FeatureField::from_blocks({{3, 4}}), one);
    EXPECT_DOUBLE_EQ(y.at(0, 0), 0.6);
    EXPECT_DOUBLE_EQ(y.at(0, 1), 0.8);
    y = dual_maximizer(FeatureField::from_blocks({{0.3, 0.4}}), one);
    EXPECT_DOUBLE_EQ(y.at(0, 0), 0.3);
    EXPECT_DOUBLE_EQ(y.at(0, 1), 0.4);
    y = dual_maximizer(FeatureField::from_blocks({{0, 0}}), one);
    EXPECT_EQ(y.values.norm(), 0.0);
}

TEST(DualMaximizer, FeasibleAndStronglyDual) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> le(-3, 1);
    for (int t = 0; t < 100; ++t) {
        const double eta = std::pow(10.0, le(rng));
        const FeatureField g(20, 3, oracle::random_vector(60, rng, -2, 2));
        const auto y = dual_maximizer(g, SmoothingLevel(eta));
        for (std::size_t i = 0; i < 20; ++i) EXPECT_LE(y.block_norm(i), 1.0 + 1e-15);
        const double dual = g.values.dot(y.values) - eta / 2 * y.values.squaredNorm();
        EXPECT_NEAR(dual, r_eta_value(g, SmoothingLevel(eta)), 1e-12 * (1 + std::abs(dual)));
    }
}

TEST(REta, Examples) {
    const SmoothingLevel one(1.0);
    EXPECT_DOUBLE_EQ(r_eta_value(FeatureField::from_blocks({{0.5}}), one), 0.125);
    EXPECT_DOUBLE_EQ(r_eta_value(FeatureField::from_blocks({{2.0}}), one), 1.5);
    EXPECT_EQ(r_eta_value(FeatureField(4, 2, Vector::Zero(8)), one), 0.0);
    EXPECT_THROW(SmoothingLevel(0.0), ConfigError);
    EXPECT_THROW((void)SmoothingLevel(std::numeric_limits<double>::infinity()), ConfigError);
}

TEST(REta, SandwichAndMonotoneInEta) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 100; ++t) {
        const auto fb = FilterBank::seeded_random({4, 5}, 3, 3, 0.2, static_cast<std::uint64_t>(t));
        const auto g = g_apply(fb, oracle::random_vector(20, rng));
        double prev = INFINITY;
        for (double eta : {0.01, 0.1, 1.0}) {
            const double re = r_eta_value(g, SmoothingLevel(eta)), r = r_value(g);
            EXPECT_LE(re, r + 1e-12);
            EXPECT_LE(r, re + 20 * eta / 2 + 1e-12);
            EXPECT_LE(re, prev + 1e-12);
            prev = re;
        }
    }
}

TEST(REtaGradient, ScalarHuberExamples) {
    const auto fb = FilterBank::identity({1, 1}, 0.1);
    Vector x(1);
    x[0] = 0.5;
    EXPECT_DOUBLE_EQ(r_eta_gradient(fb, x, SmoothingLevel(1.0), false)[0], 0.5);
    x[0] = 2.0;
    EXPECT_DOUBLE_EQ(r_eta_gradient(fb, x, SmoothingLevel(1.0), false)[0], 1.0);
}

TEST(REtaGradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(12);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto fb = FilterBank::seeded_random({8, 8}, 4, 3, 0.3, seed);
        const Vector x = oracle::random_vector(64, rng);
        for (double eta : {0.05, 0.5}) {
            const SmoothingLevel e(eta);
            const auto D = oracle::dense_bank(fb);
            const auto f = [&](const Vector& y) { return oracle::r_eta(oracle::g(D, y), fb.m(), fb.d(), eta); };
            const Vector grad = r_eta_gradient(fb, x, e, false);
            EXPECT_LE(oracle::rel_err(grad, oracle::central_diff(f, x, 1e-6)), 1e-5);
            const auto both = r_eta_value_and_gradient(fb, x, e, false);
            EXPECT_EQ(both.gradient, grad);
            EXPECT_EQ(both.value, r_eta_value(g_apply(fb, x), e));
        }
    }
}

TEST(REtaGradient, LipschitzWitness) {
    std::mt19937_64 rng(13);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto fb = FilterBank::seeded_random({5, 5}, 3, 3, 0.2, seed);
        const SmoothingLevel eta(0.05);
        const auto bounds = estimate_bounds(fb, eta);
        for (int t = 0; t < 20; ++t) {
            const Vector a = oracle::random_vector(25, rng), b = a + 0.1 * oracle::random_vector(25, rng);
            const double lhs = (r_eta_gradient(fb, a, eta, false) - r_eta_gradient(fb, b, eta, false)).norm();
            EXPECT_LE(lhs, bounds.L_reta * (a - b).norm());
        }
    }
}

TEST(Bounds, IdentityClosedForm) {
    const auto fb = FilterBank::identity({3, 3}, 0.1);
    auto b = estimate_bounds(fb, SmoothingLevel(1.0));
    EXPECT_NEAR(b.M, 1.0, 1e-12);
    EXPECT_NEAR(b.L_g, 5.0, 1e-11);
    EXPECT_NEAR(b.L_reta, 9 * 5.0 + 1.0, 1e-10);
    EXPECT_EQ(b.m, 9u);
    const auto b2 = estimate_bounds(fb, SmoothingLevel(2.0));
    EXPECT_EQ(b2.L_g, b.L_g);
    EXPECT_NEAR(b2.L_reta - 9 * b2.L_g, (b.L_reta - 9 * b.L_g) / 2, 1e-12);
}

TEST(Bounds, SampledJacobianNormBelowM) {
    std::mt19937_64 rng(14);
    const auto fb = FilterBank::seeded_random({4, 4}, 2, 3, 0.3, 15);
    const auto D = oracle::dense_bank(fb);
    const double M = estimate_bounds(fb, SmoothingLevel(0.1)).M;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto J = oracle::jacobian(D, oracle::random_vector(16, rng, -2, 2));
        worst = std::max(worst, Eigen::JacobiSVD<oracle::Dense>(J).singularValues()[0]);
    }
    EXPECT_LE(worst, M);
}

TEST(Regularizer, ScaledIdentityGradient) {
    // g = 2 sigma(x): with every block above eta the gradient is 2 per entry.
    const auto fb = scaled_identity({1, 2}, 1.0, 2.0, 0.1);
    const Vector g = r_eta_gradient(fb, Vector::Ones(2), SmoothingLevel(0.5), false);
    EXPECT_DOUBLE_EQ(g[0], 2.0);
    EXPECT_DOUBLE_EQ(g[1], 2.0);
}
