#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "resgd/filter_bank.hpp"
#include "resgd/linops.hpp"
#include "resgd/regularizer.hpp"

namespace resgd {

struct SolverConfig {
    double eta = 0.01;
    double eps = 1e-4;
    // Step bounds: alpha_k must lie in [1/(alpha_bar L), 1/(beta_bar L)].
    double alpha_bar = 2.0;
    double beta_bar = 1.5;
    std::size_t max_iters = 1000;
    // Empty: alpha_k = 1/(beta_bar L_eta). Otherwise alpha_k = schedule[min(k, size) - 1].
    std::vector<double> alpha_schedule;
    // Empty: beta_k = alpha_k. Same indexing as alpha_schedule.
    std::vector<double> beta_schedule;
    bool eta_equals_eps = false;
    // Disabling the u candidate turns the iteration into gradient descent on F_eta.
    bool enable_u_step = true;

    /// Throws ConfigError if the constants are inconsistent.
    void validate() const;
};

struct IterateRecord {
    std::size_t k = 0;
    double F_eta = 0.0;  // at x^k, the iterate produced by this iteration
    double f_val = 0.0;
    double r_eta_val = 0.0;
    bool chose_u = false;
    double grad_norm_proxy = 0.0;  // ||x^{k-1} - v^k|| / alpha_k = ||grad F_eta(x^{k-1})||
    double step_alpha = 0.0;
    double step_gamma = 0.0;
    double F_v = 0.0;     // F_eta(v^k)
    double v_dist = 0.0;  // ||v^k - x^{k-1}||
};

enum class StopReason { converged, max_iters, diverged };

[[nodiscard]] std::string_view to_string(StopReason r);

struct SolverResult {
    Vector x;
    std::vector<IterateRecord> trace;
    StopReason status = StopReason::max_iters;
    double F_initial = 0.0;
    double eta = 0.0;  // smoothing level actually used
    double L_f = 0.0;
    double L_eta = 0.0;
    RegularizerBounds bounds;
    std::size_t objective_evals = 0;
};

/// Lipschitz data for a (problem, filter bank, eta) triple.
struct SolverConstants {
    double L_f = 0.0;
    RegularizerBounds bounds;
};

[[nodiscard]] SolverConstants estimate_constants(const FidelityProblem& problem, const FilterBank& fb,
                                                 SmoothingLevel eta);

struct ObjectiveParts {
    double f = 0.0;
    double r_eta = 0.0;
    [[nodiscard]] double total() const { return f + r_eta; }
};

[[nodiscard]] ObjectiveParts objective_parts(const FidelityProblem& problem, const FilterBank& fb,
                                             const Vector& x, SmoothingLevel eta);
/// F_eta(x) = f(x) + r_eta(x). Throws NumericError when non-finite.
[[nodiscard]] double objective_F_eta(const FidelityProblem& problem, const FilterBank& fb,
                                     const Vector& x, SmoothingLevel eta);
/// grad f(x) + grad r_eta(x) with the true transposes.
[[nodiscard]] Vector objective_gradient(const FidelityProblem& problem, const FilterBank& fb,
                                        const Vector& x, SmoothingLevel eta);

/// b = x - alpha grad f(x).
[[nodiscard]] Vector b_step(const Vector& x, double alpha, const FidelityProblem& problem);
/// u = b - gamma grad r_eta(b).
[[nodiscard]] Vector u_step(const Vector& b, double gamma, const FilterBank& fb, SmoothingLevel eta,
                            bool learned = false);
/// v = b - alpha grad r_eta(x_k).
[[nodiscard]] Vector v_step(const Vector& b, double alpha, const Vector& x_k, const FilterBank& fb,
                            SmoothingLevel eta, bool learned = false);

struct Selection {
    Vector x_next;
    bool chose_u = false;
    double F_u = 0.0;
    double F_v = 0.0;
};
/// Picks u when F_eta(u) <= F_eta(v), else v. Non-finite values lose; both
/// non-finite throws NumericError.
[[nodiscard]] Selection select_step(const Vector& u, const Vector& v, const FidelityProblem& problem,
                                    const FilterBank& fb, SmoothingLevel eta);

/// gamma = alpha beta / (alpha + beta).
[[nodiscard]] double combined_step(double alpha, double beta);

/// L_f + m L_g + M^2 / eta.
[[nodiscard]] double compute_L_eta(double L_f, const RegularizerBounds& bounds);

/// floor(2 alpha_bar^2 L_eta (F0 - F*) / ((beta_bar - 1) eps^2)) + 1, saturating.
[[nodiscard]] std::uint64_t iteration_bound(double F0, double F_star, const SolverConfig& cfg,
                                            double L_eta);

/// Residual gradient descent: from x, form b, the candidates u and v, and
/// keep whichever has the smaller F_eta. Stops when
/// ||x - v|| / alpha <= eps (x is returned unchanged), after max_iters, or on
/// divergence.
[[nodiscard]] SolverResult run(const FidelityProblem& problem, const FilterBank& fb, const Vector& x0,
                               const SolverConfig& cfg);
/// As above with precomputed Lipschitz data (must match cfg's effective eta).
[[nodiscard]] SolverResult run(const FidelityProblem& problem, const FilterBank& fb, const Vector& x0,
                               const SolverConfig& cfg, const SolverConstants& constants);

/// CSV with header k,F_eta,f_val,r_eta_val,chose_u,grad_norm_proxy,step_alpha,step_gamma.
void write_trace_csv(std::ostream& out, const std::vector<IterateRecord>& trace);

}  // namespace resgd
