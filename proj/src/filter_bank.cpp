#include "resgd/filter_bank.hpp"

#include <cmath>
#include <random>
#include <string>

namespace resgd {

namespace {

void check_finite(const ConvKernel& k, const char* name) {
    for (double v : k.weights) {
        if (!std::isfinite(v)) throw NumericError(std::string("FilterBank: non-finite weight in ") + name);
    }
}

void check_shape(const ConvKernel& k, std::size_t out, std::size_t in, std::size_t ksize,
                 const char* name) {
    if (k.out_ch != out || k.in_ch != in || k.ksize != ksize ||
        k.weights.size() != out * in * ksize * ksize) {
        throw DimensionError(std::string("FilterBank: inconsistent kernel shape for ") + name);
    }
}

ConvKernel centered_delta(std::size_t ksize) {
    ConvKernel k(1, 1, ksize);
    k.at(0, 0, ksize / 2, ksize / 2) = 1.0;
    return k;
}

ConvKernel random_kernel(std::size_t out, std::size_t in, std::size_t ksize, double scale,
                         std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    ConvKernel k(out, in, ksize);
    const std::size_t taps = ksize * ksize;
    const double s = scale / std::sqrt(static_cast<double>(in * taps));
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) {
            double* slice = k.weights.data() + (o * in + i) * taps;
            double mean = 0.0;
            for (std::size_t t = 0; t < taps; ++t) {
                slice[t] = normal(rng);
                mean += slice[t];
            }
            mean /= static_cast<double>(taps);
            for (std::size_t t = 0; t < taps; ++t) slice[t] = s * (slice[t] - mean);
        }
    }
    return k;
}

class CascadeMap final : public LinearMap {
public:
    CascadeMap(std::shared_ptr<const FilterBank> fb, bool mixing) : fb_(std::move(fb)), mixing_(mixing) {}

    std::size_t n_in() const override { return mixing_ ? fb_->feature_size() : fb_->n(); }
    std::size_t n_out() const override { return fb_->feature_size(); }

protected:
    Vector do_apply(const Vector& x) const override {
        return mixing_ ? fb_->apply_B(x) : fb_->apply_A(x);
    }
    Vector do_adjoint(const Vector& w) const override {
        return mixing_ ? fb_->apply_B_transpose(w, false) : fb_->apply_A_transpose(w, false);
    }

private:
    std::shared_ptr<const FilterBank> fb_;
    bool mixing_;
};

}  // namespace

SmoothActivation::SmoothActivation(double delta_) : delta(delta_) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("SmoothActivation: delta must be > 0");
}

FilterBank::FilterBank(ImageShape shape, FilterBankWeights weights, SmoothActivation act)
    : shape_(shape), d_(weights.a1.out_ch), w_(std::move(weights)), act_(act) {
    if (shape_.size() == 0) throw ConfigError("FilterBank: empty image shape");
    if (d_ == 0) throw ConfigError("FilterBank: d must be >= 1");
    const std::size_t k = w_.a1.ksize;
    check_shape(w_.a1, d_, 1, k, "A1");
    check_shape(w_.a2, d_, d_, k, "A2");
    check_shape(w_.b, d_, d_, k, "B");
    check_shape(w_.a1_tilde, d_, 1, k, "A1~");
    check_shape(w_.a2_tilde, d_, d_, k, "A2~");
    check_shape(w_.b_tilde, d_, d_, k, "B~");
    check_finite(w_.a1, "A1");
    check_finite(w_.a2, "A2");
    check_finite(w_.b, "B");
    check_finite(w_.a1_tilde, "A1~");
    check_finite(w_.a2_tilde, "A2~");
    check_finite(w_.b_tilde, "B~");
}

FilterBank FilterBank::identity(ImageShape shape, double delta, std::size_t ksize) {
    const auto k = centered_delta(ksize);
    return FilterBank(shape, FilterBankWeights{k, k, k, k, k, k}, SmoothActivation(delta));
}

FilterBank FilterBank::seeded_random(ImageShape shape, std::size_t d, std::size_t ksize, double delta,
                                     std::uint64_t seed, double scale) {
    if (d == 0) throw ConfigError("FilterBank: d must be >= 1");
    std::mt19937_64 rng(seed);
    FilterBankWeights w;
    w.a1 = random_kernel(d, 1, ksize, scale, rng);
    w.a2 = random_kernel(d, d, ksize, scale, rng);
    w.b = random_kernel(d, d, ksize, scale, rng);
    w.a1_tilde = w.a1;
    w.a2_tilde = w.a2;
    w.b_tilde = w.b;
    return FilterBank(shape, std::move(w), SmoothActivation(delta));
}

FilterBank FilterBank::with_learned_inverses(ConvKernel a1_tilde, ConvKernel a2_tilde,
                                             ConvKernel b_tilde) const {
    FilterBankWeights w = w_;
    w.a1_tilde = std::move(a1_tilde);
    w.a2_tilde = std::move(a2_tilde);
    w.b_tilde = std::move(b_tilde);
    return FilterBank(shape_, std::move(w), act_);
}

bool FilterBank::exact_adjoint() const {
    return w_.a1 == w_.a1_tilde && w_.a2 == w_.a2_tilde && w_.b == w_.b_tilde;
}

Vector FilterBank::apply_A(const Vector& x) const {
    require_dim(static_cast<std::size_t>(x.size()), n(), "FilterBank::apply_A");
    return conv_forward(w_.a2, shape_, conv_forward(w_.a1, shape_, x));
}

Vector FilterBank::apply_A_transpose(const Vector& v, bool learned) const {
    require_dim(static_cast<std::size_t>(v.size()), feature_size(), "FilterBank::apply_A_transpose");
    const auto& k1 = learned ? w_.a1_tilde : w_.a1;
    const auto& k2 = learned ? w_.a2_tilde : w_.a2;
    return conv_transpose(k1, shape_, conv_transpose(k2, shape_, v));
}

Vector FilterBank::apply_B(const Vector& v) const {
    require_dim(static_cast<std::size_t>(v.size()), feature_size(), "FilterBank::apply_B");
    return conv_forward(w_.b, shape_, v);
}

Vector FilterBank::apply_B_transpose(const Vector& v, bool learned) const {
    require_dim(static_cast<std::size_t>(v.size()), feature_size(), "FilterBank::apply_B_transpose");
    return conv_transpose(learned ? w_.b_tilde : w_.b, shape_, v);
}

LinearMapPtr FilterBank::analysis_map() const {
    return std::make_shared<CascadeMap>(std::make_shared<const FilterBank>(*this), false);
}

LinearMapPtr FilterBank::mixing_map() const {
    return std::make_shared<CascadeMap>(std::make_shared<const FilterBank>(*this), true);
}

}  // namespace resgd
