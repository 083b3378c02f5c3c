#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "resgd/filter_bank.hpp"
#include "resgd/linops.hpp"
#include "resgd/regularizer.hpp"

namespace resgd {

/// Step sizes of one phase; both are free parameters of the network.
struct PhaseParams {
    double alpha = 0.0;
    double gamma = 0.0;
};

/// Inference-time parameters of a K-phase network. The filter bank (A, B and
/// their learned inverses) and eta are shared by all phases.
struct NetworkParams {
    FilterBank fb;
    double eta = 0.01;
    std::vector<PhaseParams> phases;
    double vartheta = 1e-3;

    [[nodiscard]] std::size_t K() const { return phases.size(); }
    /// Throws ConfigError unless K >= 1 and every scalar is finite and positive.
    void validate() const;
};

struct TrainingPair {
    Vector z;
    Vector x_true;
};

/// One phase: b = x - alpha grad f(x); u = b - gamma grad~ r_eta(b);
/// v = b - alpha grad~ r_eta(x), where grad~ uses (A~, B~); keep the
/// candidate with the smaller F_eta (evaluated with the true g). k is 1-based.
[[nodiscard]] Vector phase_forward(const NetworkParams& params, std::size_t k, const Vector& x_k,
                                   const FidelityProblem& problem);

/// x^0 = Phi^T z followed by K phases. Only the operator of
/// `problem_template` is used.
[[nodiscard]] Vector network_forward(const NetworkParams& params, const Vector& z,
                                     const FidelityProblem& problem_template);

/// ||A~ - A^T||_F^2 + ||B~ - B^T||_F^2 over the full operators.
[[nodiscard]] double loss_constraint(const NetworkParams& params);

/// Mean squared reconstruction error over the batch plus vartheta * loss_constraint.
[[nodiscard]] double loss_total(const NetworkParams& params, const std::vector<TrainingPair>& batch,
                                const FidelityProblem& problem_template);

/// Writes `manifest.json` and the six weight blobs into `dir`.
void save_network(const std::filesystem::path& dir, const NetworkParams& params);
/// Reads a manifest written by save_network; blob paths resolve relative to
/// the manifest. The image shape is not part of the weights.
[[nodiscard]] NetworkParams load_network(const std::filesystem::path& manifest, ImageShape shape);

}  // namespace resgd
