#include "resgd/unrolled.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "resgd/binary_io.hpp"
#include "resgd/solver.hpp"

namespace resgd {

namespace {

using nlohmann::json;

// sum over all output positions of ||W taps hitting the image||^2 for a single
// convolution: each tap (ty, tx) is active at (h - |ty|)(w - |tx|) positions.
double single_conv_frobenius_sq(const ConvKernel& k, ImageShape shape) {
    const auto r = static_cast<std::ptrdiff_t>(k.ksize / 2);
    double total = 0.0;
    for (std::size_t o = 0; o < k.out_ch; ++o) {
        for (std::size_t i = 0; i < k.in_ch; ++i) {
            for (std::size_t ky = 0; ky < k.ksize; ++ky) {
                for (std::size_t kx = 0; kx < k.ksize; ++kx) {
                    const auto dy = std::abs(static_cast<std::ptrdiff_t>(ky) - r);
                    const auto dx = std::abs(static_cast<std::ptrdiff_t>(kx) - r);
                    const auto rows = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(shape.h) - dy);
                    const auto cols = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(shape.w) - dx);
                    const double wgt = k.at(o, i, ky, kx);
                    total += wgt * wgt * static_cast<double>(rows * cols);
                }
            }
        }
    }
    return total;
}

ConvKernel kernel_difference(const ConvKernel& a, const ConvKernel& b) {
    ConvKernel d(a.out_ch, a.in_ch, a.ksize);
    for (std::size_t t = 0; t < d.weights.size(); ++t) d.weights[t] = a.weights[t] - b.weights[t];
    return d;
}

// ||C(W~) - C(W)||_F^2 for the cascade C = conv(k2) conv(k1) from one input
// channel. Column q of the difference is supported within 2*radius of pixel
// q, so each column is evaluated on a clipped window around q; zero padding
// at the window edge agrees with the full image there because the
// intermediate maps vanish outside the window.
double cascade_frobenius_sq(const ConvKernel& k1, const ConvKernel& k2, const ConvKernel& k1t,
                            const ConvKernel& k2t, ImageShape shape) {
    const auto reach = static_cast<std::ptrdiff_t>(2 * (k1.ksize / 2));
    const auto H = static_cast<std::ptrdiff_t>(shape.h);
    const auto W = static_cast<std::ptrdiff_t>(shape.w);
    double total = 0.0;
    for (std::ptrdiff_t qr = 0; qr < H; ++qr) {
        for (std::ptrdiff_t qc = 0; qc < W; ++qc) {
            const auto r0 = std::max<std::ptrdiff_t>(0, qr - reach);
            const auto r1 = std::min<std::ptrdiff_t>(H, qr + reach + 1);
            const auto c0 = std::max<std::ptrdiff_t>(0, qc - reach);
            const auto c1 = std::min<std::ptrdiff_t>(W, qc + reach + 1);
            const ImageShape win{static_cast<std::size_t>(r1 - r0), static_cast<std::size_t>(c1 - c0)};
            Vector impulse = Vector::Zero(static_cast<Eigen::Index>(win.size()));
            impulse[(qr - r0) * static_cast<std::ptrdiff_t>(win.w) + (qc - c0)] = 1.0;
            const Vector diff = conv_forward(k2t, win, conv_forward(k1t, win, impulse)) -
                                conv_forward(k2, win, conv_forward(k1, win, impulse));
            total += diff.squaredNorm();
        }
    }
    return total;
}

}  // namespace

void NetworkParams::validate() const {
    if (phases.empty()) throw ConfigError("network: K must be >= 1");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("network: eta must be > 0");
    if (!(vartheta >= 0.0) || !std::isfinite(vartheta)) throw ConfigError("network: vartheta must be >= 0");
    for (const auto& p : phases) {
        if (!(p.alpha > 0.0) || !std::isfinite(p.alpha) || !(p.gamma > 0.0) || !std::isfinite(p.gamma)) {
            throw ConfigError("network: phase step sizes must be finite and > 0");
        }
    }
}

Vector phase_forward(const NetworkParams& params, std::size_t k, const Vector& x_k,
                     const FidelityProblem& problem) {
    if (k == 0 || k > params.K()) throw ConfigError("phase_forward: phase index out of range");
    require_dim(static_cast<std::size_t>(x_k.size()), params.fb.n(), "phase_forward: x_k");
    const auto& ph = params.phases[k - 1];
    const SmoothingLevel eta(params.eta);
    const Vector b = b_step(x_k, ph.alpha, problem);
    const Vector u = u_step(b, ph.gamma, params.fb, eta, true);
    const Vector v = v_step(b, ph.alpha, x_k, params.fb, eta, true);
    return select_step(u, v, problem, params.fb, eta).x_next;
}

Vector network_forward(const NetworkParams& params, const Vector& z, const FidelityProblem& problem_template) {
    params.validate();
    const FidelityProblem problem(problem_template.op, z);
    Vector x = problem.op->adjoint_apply(problem.z);
    for (std::size_t k = 1; k <= params.K(); ++k) x = phase_forward(params, k, x, problem);
    return x;
}

double loss_constraint(const NetworkParams& params) {
    const auto& w = params.fb.weights();
    const auto shape = params.fb.shape();
    return cascade_frobenius_sq(w.a1, w.a2, w.a1_tilde, w.a2_tilde, shape) +
           single_conv_frobenius_sq(kernel_difference(w.b_tilde, w.b), shape);
}

double loss_total(const NetworkParams& params, const std::vector<TrainingPair>& batch,
                  const FidelityProblem& problem_template) {
    if (batch.empty()) throw ConfigError("loss_total: empty batch");
    double discrepancy = 0.0;
    for (const auto& item : batch) {
        discrepancy += (network_forward(params, item.z, problem_template) - item.x_true).squaredNorm();
    }
    discrepancy /= static_cast<double>(batch.size());
    return discrepancy + params.vartheta * loss_constraint(params);
}

void save_network(const std::filesystem::path& dir, const NetworkParams& params) {
    params.validate();
    std::filesystem::create_directories(dir);
    const auto& w = params.fb.weights();
    const std::vector<std::pair<std::string, const ConvKernel*>> blobs{
        {"A1", &w.a1}, {"A2", &w.a2}, {"B", &w.b},
        {"A1_tilde", &w.a1_tilde}, {"A2_tilde", &w.a2_tilde}, {"B_tilde", &w.b_tilde}};

    json manifest;
    manifest["schema"] = 1;
    manifest["K"] = params.K();
    manifest["eta"] = params.eta;
    manifest["vartheta"] = params.vartheta;
    manifest["d"] = params.fb.d();
    manifest["kernel_size"] = params.fb.ksize();
    manifest["delta"] = params.fb.activation().delta;
    json phases = json::array();
    for (const auto& p : params.phases) phases.push_back({{"alpha", p.alpha}, {"gamma", p.gamma}});
    manifest["phases"] = phases;
    json weights = json::object();
    for (const auto& [name, kernel] : blobs) {
        const std::string file = name + ".bin";
        io::save_dense(dir / file, kernel->as_matrix());
        weights[name] = file;
    }
    manifest["weights"] = weights;

    std::ofstream out(dir / "manifest.json");
    if (!out) throw FormatError("cannot write network manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

NetworkParams load_network(const std::filesystem::path& manifest_path, ImageShape shape) {
    std::ifstream in(manifest_path);
    if (!in) throw FormatError("cannot open network manifest: " + manifest_path.string());
    json m;
    try {
        m = json::parse(in);
        const auto d = m.at("d").get<std::size_t>();
        const auto ksize = m.at("kernel_size").get<std::size_t>();
        const auto base = manifest_path.parent_path();
        const auto& wj = m.at("weights");
        const auto load = [&](const char* name, std::size_t in_ch) {
            auto k = ConvKernel::from_matrix(io::load_dense(base / wj.at(name).get<std::string>()), in_ch, ksize);
            if (k.out_ch != d) throw FormatError(std::string("weight blob ") + name + " has wrong channel count");
            return k;
        };
        FilterBankWeights w{load("A1", 1),       load("A2", d),       load("B", d),
                            load("A1_tilde", 1), load("A2_tilde", d), load("B_tilde", d)};
        const double delta = m.contains("delta") ? m.at("delta").get<double>() : 0.1;

        std::vector<PhaseParams> phases;
        for (const auto& p : m.at("phases")) phases.push_back({p.at("alpha").get<double>(), p.at("gamma").get<double>()});
        if (phases.size() != m.at("K").get<std::size_t>()) throw FormatError("manifest K does not match phases");

        NetworkParams params{FilterBank(shape, std::move(w), SmoothActivation(delta)), m.at("eta").get<double>(),
                             std::move(phases), m.at("vartheta").get<double>()};
        params.validate();
        return params;
    } catch (const json::exception& e) {
        throw FormatError(std::string("network manifest: ") + e.what());
    }
}

}  // namespace resgd
