#include "resgd/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace resgd {

namespace {

// Everything about a point that the iteration reuses: the fidelity residual
// and the pre-activation A x.
struct PointEval {
    Vector residual;
    Vector ax;
    FeatureField g;
    double f = 0.0;
    double r = 0.0;
    bool has_fidelity = false;

    [[nodiscard]] double F() const { return f + r; }
};

PointEval evaluate_regularizer(const FilterBank& fb, const Vector& x, SmoothingLevel eta) {
    PointEval e;
    e.ax = fb.apply_A(x);
    const auto& act = fb.activation();
    const Vector s = e.ax.unaryExpr([&act](double t) { return act.eval(t); });
    e.g = FeatureField(fb.m(), fb.d(), fb.apply_B(s));
    e.r = r_eta_value(e.g, eta);
    return e;
}

PointEval evaluate(const FidelityProblem& problem, const FilterBank& fb, const Vector& x,
                   SmoothingLevel eta) {
    PointEval e = evaluate_regularizer(fb, x, eta);
    e.residual = problem.op->apply(x) - problem.z;
    e.f = 0.5 * e.residual.squaredNorm();
    e.has_fidelity = true;
    return e;
}

Vector regularizer_gradient(const FilterBank& fb, const PointEval& e, SmoothingLevel eta) {
    const FeatureField y = dual_maximizer(e.g, eta);
    const auto& act = fb.activation();
    const Vector slope = e.ax.unaryExpr([&act](double t) { return act.deriv(t); });
    const Vector t = fb.apply_B_transpose(y.values, false).cwiseProduct(slope);
    return fb.apply_A_transpose(t, false);
}

double schedule_at(const std::vector<double>& s, std::size_t k) {
    return s[std::min(k, s.size()) - 1];
}

bool finite_value(double v) { return std::isfinite(v); }

}  // namespace

std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::converged: return "converged";
        case StopReason::max_iters: return "max_iters";
        case StopReason::diverged: return "diverged";
    }
    return "unknown";
}

void SolverConfig::validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("solver: eps must be > 0");
    if (!eta_equals_eps && (!(eta > 0.0) || !std::isfinite(eta))) {
        throw ConfigError("solver: eta must be > 0");
    }
    if (!(beta_bar > 1.0) || !(alpha_bar > beta_bar) || !std::isfinite(alpha_bar)) {
        throw ConfigError("solver: need alpha_bar > beta_bar > 1");
    }
    for (double a : alpha_schedule) {
        if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("solver: alpha schedule entries must be > 0");
    }
    for (double b : beta_schedule) {
        if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("solver: beta schedule entries must be > 0");
    }
}

SolverConstants estimate_constants(const FidelityProblem& problem, const FilterBank& fb,
                                   SmoothingLevel eta) {
    const double norm_phi = estimate_spectral_norm(*problem.op);
    return {norm_phi * norm_phi, estimate_bounds(fb, eta)};
}

ObjectiveParts objective_parts(const FidelityProblem& problem, const FilterBank& fb, const Vector& x,
                               SmoothingLevel eta) {
    ObjectiveParts p{fidelity_value(problem, x), r_eta_value(g_apply(fb, x), eta)};
    if (!finite_value(p.total())) throw NumericError("objective_F_eta: non-finite value");
    return p;
}

double objective_F_eta(const FidelityProblem& problem, const FilterBank& fb, const Vector& x,
                       SmoothingLevel eta) {
    return objective_parts(problem, fb, x, eta).total();
}

Vector objective_gradient(const FidelityProblem& problem, const FilterBank& fb, const Vector& x,
                          SmoothingLevel eta) {
    return fidelity_gradient(problem, x) + r_eta_gradient(fb, x, eta, false);
}

Vector b_step(const Vector& x, double alpha, const FidelityProblem& problem) {
    return x - alpha * fidelity_gradient(problem, x);
}

Vector u_step(const Vector& b, double gamma, const FilterBank& fb, SmoothingLevel eta, bool learned) {
    return b - gamma * r_eta_gradient(fb, b, eta, learned);
}

Vector v_step(const Vector& b, double alpha, const Vector& x_k, const FilterBank& fb, SmoothingLevel eta,
              bool learned) {
    return b - alpha * r_eta_gradient(fb, x_k, eta, learned);
}

Selection select_step(const Vector& u, const Vector& v, const FidelityProblem& problem,
                      const FilterBank& fb, SmoothingLevel eta) {
    const auto safe_F = [&](const Vector& p) {
        try {
            return objective_F_eta(problem, fb, p, eta);
        } catch (const NumericError&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    const double fu = safe_F(u);
    const double fv = safe_F(v);
    if (!finite_value(fu) && !finite_value(fv)) throw NumericError("select_step: both candidates diverged");
    const bool take_u = finite_value(fu) && (!finite_value(fv) || fu <= fv);
    return {take_u ? u : v, take_u, fu, fv};
}

// beta / (alpha + beta) is exactly 0.5 for equal steps, so gamma = alpha / 2 bit for bit.
double combined_step(double alpha, double beta) { return alpha * (beta / (alpha + beta)); }

double compute_L_eta(double L_f, const RegularizerBounds& bounds) {
    if (!(bounds.eta > 0.0)) throw ConfigError("compute_L_eta: eta must be > 0");
    if (L_f < 0.0 || bounds.L_g < 0.0 || bounds.M < 0.0) {
        throw ConfigError("compute_L_eta: constants must be nonnegative");
    }
    return L_f + static_cast<double>(bounds.m) * bounds.L_g + bounds.M * bounds.M / bounds.eta;
}

std::uint64_t iteration_bound(double F0, double F_star, const SolverConfig& cfg, double L_eta) {
    if (!(cfg.eps > 0.0)) throw ConfigError("iteration_bound: eps must be > 0");
    if (!(cfg.beta_bar > 1.0)) throw ConfigError("iteration_bound: beta_bar must exceed 1");
    if (F0 < F_star) throw ConfigError("iteration_bound: F0 must be >= F*");
    const double q = 2.0 * cfg.alpha_bar * cfg.alpha_bar * L_eta * (F0 - F_star) /
                     ((cfg.beta_bar - 1.0) * cfg.eps * cfg.eps);
    // The bound is an upper bound, so round the quotient up by a few ulps
    // before flooring rather than risk losing an integer to rounding.
    const double padded = q * (1.0 + 1e-12);
    if (!(padded < 1.8e19)) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(std::floor(padded)) + 1;
}

SolverResult run(const FidelityProblem& problem, const FilterBank& fb, const Vector& x0,
                 const SolverConfig& cfg) {
    cfg.validate();
    const SmoothingLevel eta(cfg.eta_equals_eps ? cfg.eps : cfg.eta);
    return run(problem, fb, x0, cfg, estimate_constants(problem, fb, eta));
}

SolverResult run(const FidelityProblem& problem, const FilterBank& fb, const Vector& x0,
                 const SolverConfig& cfg, const SolverConstants& constants) {
    cfg.validate();
    require_dim(static_cast<std::size_t>(x0.size()), problem.n(), "run: x0");
    require_dim(fb.n(), problem.n(), "run: filter bank signal size");
    require_finite(x0, "run: x0");

    const SmoothingLevel eta(cfg.eta_equals_eps ? cfg.eps : cfg.eta);
    if (constants.bounds.eta != eta.value()) {
        throw ConfigError("run: constants were estimated for a different eta");
    }

    SolverResult out;
    out.eta = eta.value();
    out.L_f = constants.L_f;
    out.bounds = constants.bounds;
    out.L_eta = compute_L_eta(constants.L_f, constants.bounds);
    const double alpha_lo = 1.0 / (cfg.alpha_bar * out.L_eta);
    const double alpha_hi = 1.0 / (cfg.beta_bar * out.L_eta);

    Vector x = x0;
    PointEval cur = evaluate(problem, fb, x, eta);
    out.F_initial = cur.F();
    out.objective_evals = 1;
    if (!finite_value(out.F_initial)) {
        out.x = x;
        out.status = StopReason::diverged;
        return out;
    }

    out.status = StopReason::max_iters;
    for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
        const double alpha = cfg.alpha_schedule.empty() ? alpha_hi : schedule_at(cfg.alpha_schedule, k);
        if (alpha < alpha_lo * (1.0 - 1e-12) || alpha > alpha_hi * (1.0 + 1e-12)) {
            throw ConfigError(fmt::format("run: alpha_{} = {} outside [{}, {}]", k, alpha, alpha_lo, alpha_hi));
        }
        const double beta = cfg.beta_schedule.empty() ? alpha : schedule_at(cfg.beta_schedule, k);
        const double gamma = combined_step(alpha, beta);

        const Vector b = x - alpha * problem.op->adjoint_apply(cur.residual);
        Vector v = b - alpha * regularizer_gradient(fb, cur, eta);

        IterateRecord rec;
        rec.k = k;
        rec.step_alpha = alpha;
        rec.step_gamma = gamma;
        rec.v_dist = (x - v).norm();
        rec.grad_norm_proxy = rec.v_dist / alpha;

        PointEval ev;
        try {
            ev = evaluate(problem, fb, v, eta);
        } catch (const NumericError&) {
            ev.f = std::numeric_limits<double>::quiet_NaN();
        }
        ++out.objective_evals;
        rec.F_v = ev.F();

        if (rec.grad_norm_proxy <= cfg.eps) {
            rec.F_eta = cur.F();
            rec.f_val = cur.f;
            rec.r_eta_val = cur.r;
            out.trace.push_back(rec);
            out.status = StopReason::converged;
            break;
        }

        bool take_u = false;
        PointEval eu;
        Vector u;
        if (cfg.enable_u_step) {
            const PointEval eb = evaluate_regularizer(fb, b, eta);
            u = b - gamma * regularizer_gradient(fb, eb, eta);
            try {
                eu = evaluate(problem, fb, u, eta);
            } catch (const NumericError&) {
                eu.f = std::numeric_limits<double>::quiet_NaN();
            }
            ++out.objective_evals;
            const double fu = eu.F(), fv = ev.F();
            take_u = finite_value(fu) && (!finite_value(fv) || fu <= fv);
        }

        PointEval& next = take_u ? eu : ev;
        rec.chose_u = take_u;
        rec.F_eta = next.F();
        rec.f_val = next.f;
        rec.r_eta_val = next.r;
        out.trace.push_back(rec);

        const double F_prev = cur.F();
        if (!finite_value(next.F()) || next.F() > F_prev + 1e-9 * std::max(1.0, std::abs(F_prev))) {
            out.status = StopReason::diverged;
            break;
        }
        x = take_u ? std::move(u) : std::move(v);
        cur = std::move(next);
    }
    out.x = std::move(x);
    return out;
}

void write_trace_csv(std::ostream& out, const std::vector<IterateRecord>& trace) {
    out << "k,F_eta,f_val,r_eta_val,chose_u,grad_norm_proxy,step_alpha,step_gamma\n";
    for (const auto& r : trace) {
        fmt::print(out, "{},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g}\n", r.k, r.F_eta, r.f_val,
                   r.r_eta_val, r.chose_u ? 1 : 0, r.grad_norm_proxy, r.step_alpha, r.step_gamma);
    }
}

}  // namespace resgd
