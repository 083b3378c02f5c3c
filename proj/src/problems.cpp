#include "resgd/problems.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include <Eigen/QR>
#include <json.hpp>

#include "resgd/binary_io.hpp"

namespace resgd {

namespace {

using nlohmann::json;

constexpr std::uint64_t kPhantomStream = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::size_t measurement_count(std::size_t n, double ratio) {
    if (!(ratio > 0.0) || ratio > 1.0 || !std::isfinite(ratio)) {
        throw ConfigError("sampling ratio must lie in (0, 1]");
    }
    // guard against 0.5 * 1089 = 544.5000000001-style float noise
    const double raw = ratio * static_cast<double>(n);
    const auto c = static_cast<std::size_t>(std::ceil(raw - 1e-9 * raw));
    if (c < 1) throw ConfigError("ratio * n must be >= 1");
    return std::min(c, n);
}

namespace {

double gradient_nonzero_fraction(const Vector& x, std::size_t h, std::size_t w) {
    std::size_t count = 0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double v = x[static_cast<Eigen::Index>(r * w + c)];
            const bool right = c + 1 < w && x[static_cast<Eigen::Index>(r * w + c + 1)] != v;
            const bool down = r + 1 < h && x[static_cast<Eigen::Index>((r + 1) * w + c)] != v;
            if (right || down) ++count;
        }
    }
    return static_cast<double>(count) / static_cast<double>(h * w);
}

Vector blocks_phantom(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> level(0.2, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t rects = 3; rects >= 1; --rects) {
        for (int attempt = 0; attempt < 8; ++attempt) {
            Vector x = Vector::Constant(static_cast<Eigen::Index>(h * w), 0.1 * unit(rng));
            for (std::size_t k = 0; k < rects; ++k) {
                const auto rh = static_cast<std::size_t>(std::round((0.25 + 0.25 * unit(rng)) * static_cast<double>(h)));
                const auto rw = static_cast<std::size_t>(std::round((0.25 + 0.25 * unit(rng)) * static_cast<double>(w)));
                const auto r0 = static_cast<std::size_t>(unit(rng) * static_cast<double>(h - rh));
                const auto c0 = static_cast<std::size_t>(unit(rng) * static_cast<double>(w - rw));
                const double v = level(rng);
                for (std::size_t r = r0; r < r0 + rh; ++r) {
                    for (std::size_t c = c0; c < c0 + rw; ++c) x[static_cast<Eigen::Index>(r * w + c)] = v;
                }
            }
            if (gradient_nonzero_fraction(x, h, w) <= 0.2) return x;
        }
    }
    // Two-level split: one edge column, always within the budget for w >= 8.
    Vector x = Vector::Constant(static_cast<Eigen::Index>(h * w), 0.1);
    const double v = level(rng);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = w / 2; c < w; ++c) x[static_cast<Eigen::Index>(r * w + c)] = v;
    }
    return x;
}

Vector shepp_like_phantom(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    struct Ellipse {
        double value, a, b, x0, y0, deg;
    };
    // Modified Shepp-Logan head
    std::array<Ellipse, 10> es{{{1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
                                {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
                                {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},
                                {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
                                {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},
                                {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
                                {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},
                                {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
                                {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},
                                {0.1, 0.023, 0.046, 0.06, -0.605, 0.0}}};
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    for (std::size_t k = 2; k < es.size(); ++k) {
        es[k].x0 += jitter(rng);
        es[k].y0 += jitter(rng);
    }
    Vector x = Vector::Zero(static_cast<Eigen::Index>(h * w));
    for (std::size_t r = 0; r < h; ++r) {
        const double py = 1.0 - 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(h);
        for (std::size_t c = 0; c < w; ++c) {
            const double px = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(w) - 1.0;
            double v = 0.0;
            for (const auto& e : es) {
                const double th = e.deg * std::numbers::pi / 180.0;
                const double dx = px - e.x0, dy = py - e.y0;
                const double u = (dx * std::cos(th) + dy * std::sin(th)) / e.a;
                const double t = (-dx * std::sin(th) + dy * std::cos(th)) / e.b;
                if (u * u + t * t <= 1.0) v += e.value;
            }
            x[static_cast<Eigen::Index>(r * w + c)] = std::clamp(v, 0.0, 1.0);
        }
    }
    return x;
}

Vector bumps_phantom(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector x = Vector::Zero(static_cast<Eigen::Index>(h * w));
    for (int k = 0; k < 4; ++k) {
        const double cy = unit(rng) * static_cast<double>(h);
        const double cx = unit(rng) * static_cast<double>(w);
        const double s = (0.1 + 0.15 * unit(rng)) * static_cast<double>(std::min(h, w));
        const double a = 0.3 + 0.7 * unit(rng);
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                const double d2 = std::pow(static_cast<double>(r) - cy, 2) + std::pow(static_cast<double>(c) - cx, 2);
                x[static_cast<Eigen::Index>(r * w + c)] += a * std::exp(-d2 / (2.0 * s * s));
            }
        }
    }
    const double mx = x.maxCoeff();
    if (mx > 0.0) x /= mx;
    return x;
}

// Signed frequency of a DFT bin.
long signed_freq(std::size_t k, std::size_t len) {
    const auto kk = static_cast<long>(k);
    return kk <= static_cast<long>(len) / 2 ? kk : kk - static_cast<long>(len);
}

struct Orbit {
    std::uint32_t k;   // representative (smaller flat index)
    std::uint32_t size;  // 1 (self-conjugate) or 2
    double radius;
};

std::vector<Orbit> all_orbits(ImageShape shape) {
    std::vector<Orbit> out;
    const auto n = static_cast<std::uint32_t>(shape.size());
    for (std::uint32_t k = 0; k < n; ++k) {
        const auto kc = MaskedFourierOperator::conjugate_index(shape, k);
        if (kc < k) continue;
        const double fy = static_cast<double>(signed_freq(k / shape.w, shape.h));
        const double fx = static_cast<double>(signed_freq(k % shape.w, shape.w));
        out.push_back({k, kc == k ? 1u : 2u, std::hypot(fy, fx)});
    }
    return out;
}

std::vector<std::uint32_t> expand(ImageShape shape, const std::vector<bool>& chosen_rep) {
    std::vector<std::uint32_t> idx;
    for (std::uint32_t k = 0; k < chosen_rep.size(); ++k) {
        if (chosen_rep[k]) {
            idx.push_back(k);
            const auto kc = MaskedFourierOperator::conjugate_index(shape, k);
            if (kc != k) idx.push_back(kc);
        }
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<bool> spokes(ImageShape shape, std::size_t count) {
    std::vector<bool> hit(shape.size(), false);
    const auto h = static_cast<long>(shape.h), w = static_cast<long>(shape.w);
    const double reach = std::hypot(static_cast<double>(h), static_cast<double>(w));
    for (std::size_t j = 0; j < count; ++j) {
        const double th = std::numbers::pi * static_cast<double>(j) / static_cast<double>(count);
        for (double t = -reach; t <= reach; t += 0.5) {
            const long fy = std::lround(t * std::sin(th));
            const long fx = std::lround(t * std::cos(th));
            if (fy < -h / 2 || fy > (h - 1) / 2 || fx < -w / 2 || fx > (w - 1) / 2) continue;
            const auto r = static_cast<std::size_t>((fy + h) % h);
            const auto c = static_cast<std::size_t>((fx + w) % w);
            hit[r * shape.w + c] = true;
        }
    }
    return hit;
}

// Marks orbit representatives; returns the covered index count.
std::size_t mark_representatives(ImageShape shape, const std::vector<bool>& hit, std::vector<bool>& rep) {
    std::size_t count = 0;
    for (const auto& o : all_orbits(shape)) {
        const auto kc = MaskedFourierOperator::conjugate_index(shape, o.k);
        if (hit[o.k] || hit[kc]) {
            rep[o.k] = true;
            count += o.size;
        }
    }
    return count;
}

std::vector<std::uint32_t> radial_mask(ImageShape shape, std::size_t target) {
    const std::size_t n = shape.size();
    std::vector<bool> rep(n, false);
    std::size_t count = 0;
    const std::size_t max_spokes = 4 * std::max(shape.h, shape.w);
    for (std::size_t s = 1; s <= max_spokes && count < target; ++s) {
        std::fill(rep.begin(), rep.end(), false);
        count = mark_representatives(shape, spokes(shape, s), rep);
    }
    auto orbits = all_orbits(shape);
    // Fill by increasing radius if the spokes fell short.
    std::stable_sort(orbits.begin(), orbits.end(), [](const Orbit& a, const Orbit& b) { return a.radius < b.radius; });
    for (const auto& o : orbits) {
        if (count >= target) break;
        if (!rep[o.k]) {
            rep[o.k] = true;
            count += o.size;
        }
    }
    // Trim the outermost sampled orbits while staying at or above the target.
    for (auto it = orbits.rbegin(); it != orbits.rend() && count > target; ++it) {
        if (it->k == 0 || !rep[it->k]) continue;
        if (count - it->size >= target) {
            rep[it->k] = false;
            count -= it->size;
        }
    }
    return expand(shape, rep);
}

std::vector<std::uint32_t> random_mask(ImageShape shape, std::size_t target, std::uint64_t seed) {
    std::vector<bool> rep(shape.size(), false);
    rep[0] = true;
    std::size_t count = 1;
    auto orbits = all_orbits(shape);
    orbits.erase(orbits.begin());  // DC
    std::mt19937_64 rng(seed);
    std::shuffle(orbits.begin(), orbits.end(), rng);
    for (const auto& o : orbits) {
        if (count >= target) break;
        rep[o.k] = true;
        count += o.size;
    }
    return expand(shape, rep);
}

json meta_to_json(const InstanceMeta& m) {
    json j{{"schema", 1},
           {"kind", m.kind},
           {"h", m.shape.h},
           {"w", m.shape.w},
           {"ratio", m.ratio},
           {"seed", m.seed},
           {"peak", m.peak},
           {"phantom", std::string(to_string(m.phantom))}};
    if (m.mask) j["mask"] = std::string(to_string(*m.mask));
    return j;
}

}  // namespace

PhantomKind parse_phantom_kind(std::string_view s) {
    if (s == "shepp-like") return PhantomKind::shepp_like;
    if (s == "blocks") return PhantomKind::blocks;
    if (s == "smooth-bumps") return PhantomKind::smooth_bumps;
    throw ConfigError("unknown phantom kind: " + std::string(s));
}

MaskKind parse_mask_kind(std::string_view s) {
    if (s == "radial") return MaskKind::radial;
    if (s == "uniform-random") return MaskKind::uniform_random;
    throw ConfigError("unknown mask kind: " + std::string(s));
}

std::string_view to_string(PhantomKind k) {
    switch (k) {
        case PhantomKind::shepp_like: return "shepp-like";
        case PhantomKind::blocks: return "blocks";
        case PhantomKind::smooth_bumps: return "smooth-bumps";
    }
    return "unknown";
}

std::string_view to_string(MaskKind k) {
    return k == MaskKind::radial ? "radial" : "uniform-random";
}

Vector make_phantom(std::size_t h, std::size_t w, PhantomKind kind, std::uint64_t seed) {
    if (h < 8 || w < 8) throw ConfigError("make_phantom: h and w must be >= 8");
    std::mt19937_64 rng(seed);
    switch (kind) {
        case PhantomKind::blocks: return blocks_phantom(h, w, rng);
        case PhantomKind::shepp_like: return shepp_like_phantom(h, w, rng);
        case PhantomKind::smooth_bumps: return bumps_phantom(h, w, rng);
    }
    throw ConfigError("make_phantom: unknown kind");
}

RowMajorMatrix orthonormal_gaussian_matrix(std::size_t n, double ratio, std::uint64_t seed) {
    const std::size_t rows = measurement_count(n, ratio);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd gt(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows));
    // fill row by row of G (= column of G^T) so the draw order is the natural one
    for (Eigen::Index i = 0; i < gt.cols(); ++i) {
        for (Eigen::Index j = 0; j < gt.rows(); ++j) gt(j, i) = normal(rng);
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gt);
    const Eigen::MatrixXd q =
        qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows));
    return q.transpose();
}

ReconstructionInstance make_gaussian_cs(std::size_t h, std::size_t w, double ratio, std::uint64_t seed,
                                        PhantomKind phantom) {
    auto op = std::make_shared<DenseSensingMatrix>(orthonormal_gaussian_matrix(h * w, ratio, seed));

    Vector x = make_phantom(h, w, phantom, seed ^ kPhantomStream);
    Vector z = op->apply(x);
    InstanceMeta meta{"gaussian", {h, w}, ratio, seed, phantom, std::nullopt, 1.0};
    return {FidelityProblem(std::move(op), std::move(z)), std::move(x), std::move(meta)};
}

std::vector<std::uint32_t> make_mask(ImageShape shape, double ratio, MaskKind kind, std::uint64_t seed) {
    const std::size_t target = measurement_count(shape.size(), ratio);
    return kind == MaskKind::radial ? radial_mask(shape, target) : random_mask(shape, target, seed);
}

ReconstructionInstance make_fourier_cs(std::size_t h, std::size_t w, double ratio, MaskKind mask_kind,
                                       std::uint64_t seed, PhantomKind phantom) {
    const ImageShape shape{h, w};
    auto op = std::make_shared<MaskedFourierOperator>(shape, make_mask(shape, ratio, mask_kind, seed));
    Vector x = make_phantom(h, w, phantom, seed ^ kPhantomStream);
    Vector z = op->apply(x);
    InstanceMeta meta{"fourier", shape, ratio, seed, phantom, mask_kind, 1.0};
    return {FidelityProblem(std::move(op), std::move(z)), std::move(x), std::move(meta)};
}

double mse(const Vector& x_hat, const Vector& x_true) {
    require_dim(static_cast<std::size_t>(x_hat.size()), static_cast<std::size_t>(x_true.size()), "mse");
    if (x_true.size() == 0) throw DimensionError("mse: empty signals");
    return (x_hat - x_true).squaredNorm() / static_cast<double>(x_true.size());
}

double psnr(const Vector& x_hat, const Vector& x_true, double peak) {
    if (!(peak > 0.0)) throw ConfigError("psnr: peak must be > 0");
    const double e = mse(x_hat, x_true);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / e);
}

void save_instance(const std::filesystem::path& dir, const ReconstructionInstance& inst) {
    std::filesystem::create_directories(dir);
    if (inst.meta.kind == "gaussian") {
        const auto* dense = dynamic_cast<const DenseSensingMatrix*>(inst.problem.op.get());
        if (dense == nullptr) throw ConfigError("save_instance: gaussian instance without a dense operator");
        io::save_dense(dir / "phi.bin", dense->matrix());
    } else if (inst.meta.kind == "fourier") {
        const auto* fourier = dynamic_cast<const MaskedFourierOperator*>(inst.problem.op.get());
        if (fourier == nullptr) throw ConfigError("save_instance: fourier instance without a mask operator");
        io::save_mask(dir / "mask.bin", {fourier->shape(), fourier->sampled()});
    } else {
        throw ConfigError("save_instance: unknown kind " + inst.meta.kind);
    }
    io::save_vector(dir / "z.bin", inst.problem.z);
    if (inst.x_true) io::save_vector(dir / "x_true.bin", *inst.x_true);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw FormatError("cannot write instance manifest in " + dir.string());
    out << meta_to_json(inst.meta).dump(2) << '\n';
}

ReconstructionInstance load_instance(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("cannot open instance manifest in " + dir.string());
    try {
        const json j = json::parse(in);
        InstanceMeta meta;
        meta.kind = j.at("kind").get<std::string>();
        meta.shape = {j.at("h").get<std::size_t>(), j.at("w").get<std::size_t>()};
        meta.ratio = j.at("ratio").get<double>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        meta.peak = j.value("peak", 1.0);
        meta.phantom = parse_phantom_kind(j.value("phantom", std::string("blocks")));
        if (!(meta.ratio > 0.0) || meta.ratio > 1.0) throw FormatError("instance ratio out of range");

        LinearMapPtr op;
        if (meta.kind == "gaussian") {
            auto m = io::load_dense(dir / "phi.bin");
            if (static_cast<std::size_t>(m.cols()) != meta.shape.size()) {
                throw FormatError("phi.bin column count does not match h*w");
            }
            op = std::make_shared<DenseSensingMatrix>(std::move(m));
        } else if (meta.kind == "fourier") {
            meta.mask = parse_mask_kind(j.value("mask", std::string("radial")));
            auto mask = io::load_mask(dir / "mask.bin");
            if (!(mask.shape == meta.shape)) throw FormatError("mask.bin shape does not match manifest");
            op = std::make_shared<MaskedFourierOperator>(mask.shape, mask.indices);
        } else {
            throw FormatError("unknown instance kind: " + meta.kind);
        }

        Vector z = io::load_vector(dir / "z.bin");
        if (static_cast<std::size_t>(z.size()) != op->n_out()) throw FormatError("z.bin length does not match operator");
        std::optional<Vector> x_true;
        if (std::filesystem::exists(dir / "x_true.bin")) {
            x_true = io::load_vector(dir / "x_true.bin");
            if (static_cast<std::size_t>(x_true->size()) != meta.shape.size()) {
                throw FormatError("x_true.bin length does not match h*w");
            }
        }
        return {FidelityProblem(std::move(op), std::move(z)), std::move(x_true), std::move(meta)};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("instance manifest: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("instance manifest: ") + e.what());
    }
}

}  // namespace resgd
