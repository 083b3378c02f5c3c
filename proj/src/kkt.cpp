#include "resgd/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace resgd {

namespace {

constexpr double kExactTol = 1e-12;

}  // namespace

Vector kkt_stationarity_vector(const FidelityProblem& problem, const FilterBank& fb, const Vector& x,
                               const std::vector<KKTBlock>& blocks) {
    require_dim(blocks.size(), fb.m(), "kkt_stationarity_vector: blocks");
    const FeatureField g = g_apply(fb, x);
    Vector w = g.values;
    for (std::size_t j = 0; j < g.d; ++j) {
        for (std::size_t i = 0; i < g.m; ++i) w[static_cast<Eigen::Index>(j * g.m + i)] *= 2.0 * blocks[i].mu;
    }
    return fidelity_gradient(problem, x) +
           g_jacobian_transpose_apply(fb, x, FeatureField(g.m, g.d, std::move(w)), false);
}

KKTCertificate construct_certificate(const FidelityProblem& problem, const FilterBank& fb, const Vector& x,
                                     SmoothingLevel eta, double eps) {
    if (!(eps >= 0.0)) throw ConfigError("construct_certificate: eps must be >= 0");
    const double e = eta.value();
    const Vector norms = g_apply(fb, x).block_norms();
    KKTCertificate cert;
    cert.eps = eps;
    cert.blocks.resize(fb.m());
    for (std::size_t i = 0; i < fb.m(); ++i) {
        const double nrm = norms[static_cast<Eigen::Index>(i)];
        auto& b = cert.blocks[i];
        b.y = std::max(e, nrm);
        b.mu = nrm > e ? 1.0 / (2.0 * nrm) : 1.0 / (2.0 * e);
        b.lambda = 0.0;
        cert.complementarity_max =
            std::max(cert.complementarity_max, std::abs(b.mu * (nrm * nrm - b.y * b.y)));
    }
    cert.stationarity_norm = kkt_stationarity_vector(problem, fb, x, cert.blocks).norm();
    return cert;
}

KKTCertificate construct_certificate(const FidelityProblem& problem, const FilterBank& fb, const Vector& x,
                                     SmoothingLevel eta) {
    return construct_certificate(problem, fb, x, eta, eta.value());
}

KKTReport verify_certificate(const FilterBank& fb, const Vector& x, const FidelityProblem& problem,
                             const KKTCertificate& cert) {
    require_dim(static_cast<std::size_t>(x.size()), fb.n(), "verify_certificate: x");
    require_dim(cert.blocks.size(), fb.m(), "verify_certificate: blocks");

    KKTReport rep;
    rep.eps = cert.eps;
    rep.con1_norm = kkt_stationarity_vector(problem, fb, x, cert.blocks).norm();

    const Vector norms = g_apply(fb, x).block_norms();
    rep.con4_min = std::numeric_limits<double>::infinity();
    rep.con5_min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cert.blocks.size(); ++i) {
        const auto& b = cert.blocks[i];
        const double nrm = norms[static_cast<Eigen::Index>(i)];
        rep.con15_max = std::max(rep.con15_max, std::abs(1.0 - 2.0 * b.mu * b.y - b.lambda));
        rep.con2_max = std::max(rep.con2_max, std::abs(b.mu * (nrm * nrm - b.y * b.y)));
        rep.con3_max = std::max(rep.con3_max, std::abs(b.lambda * b.y));
        rep.con4_min = std::min({rep.con4_min, b.mu, b.lambda});
        rep.con5_min_slack = std::min(rep.con5_min_slack, b.y - nrm);
    }
    if (cert.blocks.empty()) {
        rep.con4_min = 0.0;
        rep.con5_min_slack = 0.0;
    }

    rep.con1_ok = rep.con1_norm <= cert.eps;
    rep.con15_ok = rep.con15_max <= kExactTol;
    rep.con2_ok = rep.con2_max <= cert.eps;
    rep.con3_ok = rep.con3_max == 0.0;
    rep.con4_ok = rep.con4_min >= 0.0;
    rep.con5_ok = rep.con5_min_slack >= 0.0;
    rep.pass = rep.con1_ok && rep.con15_ok && rep.con2_ok && rep.con3_ok && rep.con4_ok && rep.con5_ok;
    return rep;
}

}  // namespace resgd
