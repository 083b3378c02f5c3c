#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resgd/linops.hpp"
#include "resgd/types.hpp"

namespace resgd {

enum class PhantomKind { shepp_like, blocks, smooth_bumps };
enum class MaskKind { radial, uniform_random };

[[nodiscard]] PhantomKind parse_phantom_kind(std::string_view s);
[[nodiscard]] MaskKind parse_mask_kind(std::string_view s);
[[nodiscard]] std::string_view to_string(PhantomKind k);
[[nodiscard]] std::string_view to_string(MaskKind k);

struct InstanceMeta {
    std::string kind;  // "gaussian" or "fourier"
    ImageShape shape;
    double ratio = 1.0;
    std::uint64_t seed = 0;
    PhantomKind phantom = PhantomKind::blocks;
    std::optional<MaskKind> mask;  // fourier only
    double peak = 1.0;
};

struct ReconstructionInstance {
    FidelityProblem problem;
    std::optional<Vector> x_true;
    InstanceMeta meta;
};

/// Test image with values in [0, 1]; piecewise-constant kinds have sparse
/// gradients. Requires h, w >= 8.
[[nodiscard]] Vector make_phantom(std::size_t h, std::size_t w, PhantomKind kind, std::uint64_t seed);

/// ceil(ratio * n); throws ConfigError unless ratio is in (0, 1].
[[nodiscard]] std::size_t measurement_count(std::size_t n, double ratio);

/// ceil(ratio * n) x n i.i.d. N(0,1) matrix with orthonormalized rows.
[[nodiscard]] RowMajorMatrix orthonormal_gaussian_matrix(std::size_t n, double ratio, std::uint64_t seed);

/// orthonormal_gaussian_matrix measuring a generated phantom.
[[nodiscard]] ReconstructionInstance make_gaussian_cs(std::size_t h, std::size_t w, double ratio,
                                                      std::uint64_t seed,
                                                      PhantomKind phantom = PhantomKind::blocks);

/// Conjugate-symmetric frequency mask with ceil(ratio * n) indices (one more
/// when the symmetry makes that count unreachable), always containing the
/// zero frequency.
[[nodiscard]] std::vector<std::uint32_t> make_mask(ImageShape shape, double ratio, MaskKind kind,
                                                   std::uint64_t seed);

[[nodiscard]] ReconstructionInstance make_fourier_cs(std::size_t h, std::size_t w, double ratio,
                                                     MaskKind mask_kind, std::uint64_t seed,
                                                     PhantomKind phantom = PhantomKind::shepp_like);

[[nodiscard]] double mse(const Vector& x_hat, const Vector& x_true);
/// 10 log10(peak^2 / mse); +infinity when mse == 0.
[[nodiscard]] double psnr(const Vector& x_hat, const Vector& x_true, double peak = 1.0);

/// Directory layout: manifest.json, phi.bin (gaussian) or mask.bin (fourier),
/// z.bin and, when present, x_true.bin.
void save_instance(const std::filesystem::path& dir, const ReconstructionInstance& inst);
[[nodiscard]] ReconstructionInstance load_instance(const std::filesystem::path& dir);

}  // namespace resgd
