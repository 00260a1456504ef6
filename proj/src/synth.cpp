#include "lens/synth.hpp"

#include <cmath>
#include <numbers>
#include <json.hpp>

#include "io_util.hpp"

namespace lens {

namespace {

// Unit vector orthogonal to the span; isotropic in the complement.
Vec orthogonal_direction(SeededRng& gen, const SubspaceBasis& basis) {
    for (int attempt = 0; attempt < 16; ++attempt) {
        Vec w = sample_isotropic(gen, basis.dim, 1.0);
        Vec p = project_onto_span(w, basis);
        for (size_t i = 0; i < w.size(); ++i) w[i] -= p[i];
        double n = norm(w);
        if (n > 1e-12) {
            for (double& v : w) v /= n;
            return w;
        }
    }
    throw DegenerateInput("generate_scene: cannot find a direction orthogonal to the span");
}

Vec unit_isotropic(SeededRng& gen, int dim) {
    for (int attempt = 0; attempt < 16; ++attempt) {
        Vec v = sample_isotropic(gen, dim, 1.0);
        double n = norm(v);
        if (n > 1e-12) {
            for (double& x : v) x /= n;
            return v;
        }
    }
    throw DegenerateInput("generate_scene: degenerate isotropic sample");
}

}  // namespace

PlantedScene generate_scene(SeededRng& gen, std::span<const double> anchor,
                            std::span<const double> context, int k_tokens, int signal_count,
                            double delta, double snr, double eps) {
    if (k_tokens < 1) throw ContractViolation("generate_scene: k_tokens must be >= 1");
    if (signal_count < 0 || signal_count > k_tokens)
        throw ContractViolation("generate_scene: signal_count must be in [0, k_tokens]");
    if (delta < 0.0 || delta > 1.0) throw ContractViolation("generate_scene: delta must be in [0, 1]");
    if (!(snr > 0.0)) throw ContractViolation("generate_scene: snr must be > 0");
    if (anchor.size() != context.size())
        throw ContractViolation("generate_scene: anchor/context dimension mismatch");
    const int d = static_cast<int>(anchor.size());
    if (d < 3 && signal_count > 0)
        throw ContractViolation("generate_scene: need dim >= 3 for an out-of-span direction");

    SubspaceBasis basis = orthonormalize_pair(anchor, context, eps);
    if (basis.rank != 2)
        throw DegenerateInput("generate_scene: anchor and context do not span a plane");

    PlantedScene scene;
    scene.signal_count = signal_count;
    scene.delta = delta;
    scene.snr = snr;
    scene.tokens = Matrix(k_tokens, d);
    scene.role_components = Matrix(k_tokens, d);
    scene.noise_components = Matrix(k_tokens, d);
    scene.is_signal.assign(k_tokens, 0);

    // Signal positions drawn first so per-token draws stay aligned to index
    // order regardless of placement.
    std::vector<int> perm(k_tokens);
    for (int i = 0; i < k_tokens; ++i) perm[i] = i;
    for (int i = k_tokens - 1; i > 0; --i) {
        int j = static_cast<int>(gen.next_u64() % static_cast<uint64_t>(i + 1));
        std::swap(perm[i], perm[j]);
    }
    for (int i = 0; i < signal_count; ++i) scene.is_signal[perm[i]] = 1;

    const double noise_norm = 1.0 / std::sqrt(snr);          // |role| is 1
    const double bulk_scale = std::sqrt(1.0 + 1.0 / snr);    // matches signal-token energy

    for (int k = 0; k < k_tokens; ++k) {
        double* tok = scene.tokens.row(k);
        double* role = scene.role_components.row(k);
        double* noise = scene.noise_components.row(k);
        if (scene.is_signal[k]) {
            // In-span direction biased toward the anchor axis: theta in (-pi/4, pi/4).
            double theta = (gen.uniform() - 0.5) * 0.5 * std::numbers::pi;
            double ca = std::cos(theta), sa = std::sin(theta);
            Vec w = orthogonal_direction(gen, basis);
            const double in_span = std::sqrt(1.0 - delta), out_span = std::sqrt(delta);
            for (int c = 0; c < d; ++c)
                role[c] = in_span * (ca * basis.u1[c] + sa * basis.u2[c]) + out_span * w[c];
            Vec ndir = unit_isotropic(gen, d);
            for (int c = 0; c < d; ++c) noise[c] = noise_norm * ndir[c];
        } else {
            Vec bulk = sample_isotropic(gen, d, bulk_scale);
            for (int c = 0; c < d; ++c) noise[c] = bulk[c];
        }
        for (int c = 0; c < d; ++c) tok[c] = role[c] + noise[c];
    }
    return scene;
}

void save_scene(const PlantedScene& scene, const std::string& path) {
    nlohmann::ordered_json header;
    header["K"] = scene.tokens.rows;
    header["d"] = scene.tokens.cols;
    header["delta"] = scene.delta;
    header["snr"] = scene.snr;
    header["signal_count"] = scene.signal_count;
    header["dtype"] = "f32le";
    std::string out = header.dump();
    out.push_back('\n');
    detail::append_f32le(out, scene.tokens.data);
    detail::append_f32le(out, scene.role_components.data);
    detail::append_f32le(out, scene.noise_components.data);
    detail::write_file(path, out);
}

PlantedScene load_scene(const std::string& path) {
    std::string content = detail::read_file(path);
    size_t offset = 0;
    nlohmann::json header = nlohmann::json::parse(detail::header_line(content, offset, "scene"),
                                                  nullptr, false);
    if (header.is_discarded() || !header.is_object())
        throw ParseError("scene: invalid header JSON", 1);
    for (const char* key : {"K", "d", "delta", "snr", "signal_count", "dtype"})
        if (!header.contains(key))
            throw ParseError(std::string("scene: header missing ") + key, 1);
    if (header["dtype"] != "f32le") throw ParseError("scene: unsupported dtype", 1);

    const int k = header["K"].get<int>();
    const int d = header["d"].get<int>();
    if (k < 1 || d < 1) throw ParseError("scene: bad dimensions", 1);

    PlantedScene scene;
    scene.delta = header["delta"].get<double>();
    scene.snr = header["snr"].get<double>();
    scene.signal_count = header["signal_count"].get<int>();

    const size_t n = static_cast<size_t>(k) * d;
    scene.tokens = Matrix(k, d);
    scene.role_components = Matrix(k, d);
    scene.noise_components = Matrix(k, d);
    scene.tokens.data = detail::parse_f32le(content, n, offset, "scene tokens");
    scene.role_components.data = detail::parse_f32le(content, n, offset, "scene role");
    scene.noise_components.data = detail::parse_f32le(content, n, offset, "scene noise");
    if (offset != content.size()) throw ParseError("scene: trailing bytes after payload");

    scene.is_signal.assign(k, 0);
    int found = 0;
    for (int r = 0; r < k; ++r) {
        std::span<const double> row(scene.role_components.row(r), d);
        if (norm(row) > 0.0) {
            scene.is_signal[r] = 1;
            ++found;
        }
    }
    if (found != scene.signal_count)
        throw ParseError("scene: signal_count does not match non-zero role rows");
    return scene;
}

}  // namespace lens
