#include "resgd/regularizer.hpp"

#include <cmath>

#include "resgd/linops.hpp"

namespace resgd {

namespace {

// Per-block norms; index i runs over locations.
Vector norms_of(const Vector& values, std::size_t m, std::size_t d) {
    Vector sq = Vector::Zero(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < d; ++j) {
        sq += values.segment(static_cast<Eigen::Index>(j * m), static_cast<Eigen::Index>(m)).cwiseAbs2();
    }
    return sq.cwiseSqrt();
}

}  // namespace

FeatureField::FeatureField(std::size_t m_, std::size_t d_, Vector v) : m(m_), d(d_), values(std::move(v)) {
    require_dim(static_cast<std::size_t>(values.size()), m * d, "FeatureField");
}

FeatureField FeatureField::from_blocks(const std::vector<std::vector<double>>& blocks) {
    const std::size_t m = blocks.size();
    const std::size_t d = m == 0 ? 0 : blocks.front().size();
    Vector v(static_cast<Eigen::Index>(m * d));
    for (std::size_t i = 0; i < m; ++i) {
        require_dim(blocks[i].size(), d, "FeatureField::from_blocks");
        for (std::size_t j = 0; j < d; ++j) v[static_cast<Eigen::Index>(j * m + i)] = blocks[i][j];
    }
    return FeatureField(m, d, std::move(v));
}

double FeatureField::block_norm(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += at(i, j) * at(i, j);
    return std::sqrt(s);
}

Vector FeatureField::block_norms() const { return norms_of(values, m, d); }

SmoothingLevel::SmoothingLevel(double eta) : eta_(eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("SmoothingLevel: eta must be finite and > 0");
}

FeatureField g_apply(const FilterBank& fb, const Vector& x) {
    const Vector ax = fb.apply_A(x);
    const auto& act = fb.activation();
    const Vector s = ax.unaryExpr([&act](double t) { return act.eval(t); });
    return FeatureField(fb.m(), fb.d(), fb.apply_B(s));
}

Vector g_jacobian_transpose_apply(const FilterBank& fb, const Vector& x, const FeatureField& w,
                                  bool learned) {
    require_dim(static_cast<std::size_t>(w.values.size()), fb.feature_size(),
                "g_jacobian_transpose_apply");
    const Vector ax = fb.apply_A(x);
    const auto& act = fb.activation();
    const Vector slope = ax.unaryExpr([&act](double t) { return act.deriv(t); });
    const Vector t = fb.apply_B_transpose(w.values, learned).cwiseProduct(slope);
    return fb.apply_A_transpose(t, learned);
}

double r_value(const FeatureField& field) { return field.block_norms().sum(); }

FeatureField dual_maximizer(const FeatureField& field, SmoothingLevel eta) {
    const double e = eta.value();
    const Vector norms = field.block_norms();
    Vector scale(static_cast<Eigen::Index>(field.m));
    for (Eigen::Index i = 0; i < scale.size(); ++i) {
        // ties ||g_i|| == eta and zero blocks take the g_i / eta branch
        scale[i] = norms[i] <= e ? 1.0 / e : 1.0 / norms[i];
    }
    Vector y = field.values;
    for (std::size_t j = 0; j < field.d; ++j) {
        y.segment(static_cast<Eigen::Index>(j * field.m), static_cast<Eigen::Index>(field.m)).array() *=
            scale.array();
    }
    return FeatureField(field.m, field.d, std::move(y));
}

double r_eta_value(const FeatureField& field, SmoothingLevel eta) {
    const double e = eta.value();
    const Vector norms = field.block_norms();
    double total = 0.0;
    for (double nrm : norms) total += nrm <= e ? nrm * nrm / (2.0 * e) : nrm - 0.5 * e;
    return total;
}

Vector r_eta_gradient(const FilterBank& fb, const Vector& x, SmoothingLevel eta, bool learned) {
    return r_eta_value_and_gradient(fb, x, eta, learned).gradient;
}

SmoothedEval r_eta_value_and_gradient(const FilterBank& fb, const Vector& x, SmoothingLevel eta,
                                      bool learned) {
    const Vector ax = fb.apply_A(x);
    const auto& act = fb.activation();
    const Vector s = ax.unaryExpr([&act](double t) { return act.eval(t); });
    const FeatureField g(fb.m(), fb.d(), fb.apply_B(s));
    const FeatureField y = dual_maximizer(g, eta);

    const Vector slope = ax.unaryExpr([&act](double t) { return act.deriv(t); });
    const Vector t = fb.apply_B_transpose(y.values, learned).cwiseProduct(slope);
    return {r_eta_value(g, eta), fb.apply_A_transpose(t, learned)};
}

RegularizerBounds estimate_bounds(const FilterBank& fb, SmoothingLevel eta) {
    const double norm_a = estimate_spectral_norm(*fb.analysis_map());
    const double norm_b = estimate_spectral_norm(*fb.mixing_map());
    RegularizerBounds out;
    out.m = fb.m();
    out.eta = eta.value();
    out.M = norm_a * norm_b;
    // sigma' is 1/(2 delta)-Lipschitz, so grad g = B diag(sigma'(Ax)) A moves by
    // at most ||B|| ||A||^2 / (2 delta) per unit step in x.
    out.L_g = norm_a * norm_a * norm_b / (2.0 * fb.activation().delta);
    out.L_reta = static_cast<double>(out.m) * out.L_g + out.M * out.M / out.eta;
    return out;
}

}  // namespace resgd
