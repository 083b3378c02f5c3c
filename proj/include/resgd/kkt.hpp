#pragma once

#include <cstddef>
#include <vector>

#include "resgd/filter_bank.hpp"
#include "resgd/linops.hpp"
#include "resgd/regularizer.hpp"

namespace resgd {

/// Multipliers for one location of the epigraph reformulation
/// min f(x) + sum y_i  s.t.  y_i^2 >= ||g_i(x)||^2, y_i >= 0.
struct KKTBlock {
    double y = 0.0;
    double mu = 0.0;
    double lambda = 0.0;
};

/// Candidate eps-KKT certificate for a point x.
struct KKTCertificate {
    double eps = 0.0;
    std::vector<KKTBlock> blocks;
    // residuals as computed at construction
    double stationarity_norm = 0.0;   // ||grad f + 2 sum mu_i grad g_i^T g_i||
    double complementarity_max = 0.0; // max |mu_i (||g_i||^2 - y_i^2)|
};

/// Pass/fail per approximate KKT condition, with the residuals behind them.
struct KKTReport {
    double eps = 0.0;
    double con1_norm = 0.0;   // stationarity in x
    double con15_max = 0.0;   // max |1 - 2 mu_i y_i - lambda_i|
    double con2_max = 0.0;    // complementarity of the cone constraint
    double con3_max = 0.0;    // max |lambda_i y_i|
    double con4_min = 0.0;    // min over mu_i, lambda_i
    double con5_min_slack = 0.0;  // min y_i - ||g_i||
    bool con1_ok = false;
    bool con15_ok = false;
    bool con2_ok = false;
    bool con3_ok = false;
    bool con4_ok = false;
    bool con5_ok = false;
    bool pass = false;
};

/// Stationarity vector grad f(x) + 2 sum_i mu_i grad g_i(x)^T g_i(x), using
/// the true transposes of the filter bank.
[[nodiscard]] Vector kkt_stationarity_vector(const FidelityProblem& problem, const FilterBank& fb,
                                             const Vector& x, const std::vector<KKTBlock>& blocks);

/// Multipliers y_i = max(eta, ||g_i||), mu_i = 1/(2 max(eta, ||g_i||)) (the
/// second branch for ||g_i|| <= eta), lambda_i = 0; certificate tolerance eps.
[[nodiscard]] KKTCertificate construct_certificate(const FidelityProblem& problem, const FilterBank& fb,
                                                   const Vector& x, SmoothingLevel eta, double eps);
/// As above with eps = eta.
[[nodiscard]] KKTCertificate construct_certificate(const FidelityProblem& problem, const FilterBank& fb,
                                                   const Vector& x, SmoothingLevel eta);

[[nodiscard]] KKTReport verify_certificate(const FilterBank& fb, const Vector& x,
                                           const FidelityProblem& problem, const KKTCertificate& cert);

}  // namespace resgd
