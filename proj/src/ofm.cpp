#include "lens/ofm.hpp"

#include <limits>

namespace lens {

namespace {

double energy_snr(double aligned, double orthogonal) {
    if (orthogonal == 0.0)
        return aligned == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return aligned / orthogonal;
}

}  // namespace

std::pair<Vec, ModulationReport> modulate_token(std::span<const double> z,
                                                const SubspaceBasis& basis, double gamma) {
    if (static_cast<int>(z.size()) != basis.dim)
        throw ContractViolation("modulate_token: dimension mismatch");
    if (gamma < 0.0 || gamma > 1.0) throw ContractViolation("modulate_token: gamma must be in [0, 1]");
    ensure_finite(z, "modulate_token input");

    Vec p = project_onto_span(z, basis);
    ModulationReport rep;
    rep.aligned_before = dot(p, p);
    double orth = 0.0;
    Vec out(z.size());
    if (gamma == 1.0) {
        for (size_t i = 0; i < z.size(); ++i) {
            double r = z[i] - p[i];
            orth += r * r;
            out[i] = z[i];  // identity mode is exact
        }
    } else {
        for (size_t i = 0; i < z.size(); ++i) {
            double r = z[i] - p[i];
            orth += r * r;
            out[i] = p[i] + gamma * r;
        }
    }
    rep.orthogonal_before = orth;
    rep.snr_before = energy_snr(rep.aligned_before, rep.orthogonal_before);

    // Measured, not assumed: re-project the output.
    Vec p_after = project_onto_span(out, basis);
    rep.aligned_after = dot(p_after, p_after);
    double orth_after = 0.0;
    for (size_t i = 0; i < out.size(); ++i) {
        double r = out[i] - p_after[i];
        orth_after += r * r;
    }
    rep.orthogonal_after = orth_after;
    rep.snr_after = energy_snr(rep.aligned_after, rep.orthogonal_after);

    ensure_finite(out, "modulate_token output");
    return {std::move(out), rep};
}

std::pair<Matrix, std::vector<ModulationReport>> modulate_subset(const Matrix& tokens,
                                                                 std::span<const double> h,
                                                                 std::span<const double> anchor,
                                                                 double gamma, double eps) {
    std::vector<ModulationReport> reports;
    Matrix out(tokens.rows, tokens.cols);
    if (tokens.rows == 0) return {std::move(out), std::move(reports)};
    if (tokens.cols != static_cast<int>(anchor.size()))
        throw ContractViolation("modulate_subset: token width must match anchor dimension");

    SubspaceBasis basis = orthonormalize_pair(anchor, h, eps);
    reports.reserve(tokens.rows);
    for (int r = 0; r < tokens.rows; ++r) {
        auto [z, rep] = modulate_token(std::span<const double>(tokens.row(r), tokens.cols), basis,
                                       gamma);
        out.set_row(r, z);
        reports.push_back(rep);
    }
    return {std::move(out), std::move(reports)};
}

}  // namespace lens
