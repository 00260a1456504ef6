#include "lens/reinject.hpp"

#include <cmath>

namespace lens {

Vec injection_term(std::span<const double> gate_state, const Matrix& purified, double eta) {
    if (eta < 0.0) throw ContractViolation("injection_term: eta must be >= 0");
    Vec out(gate_state.size(), 0.0);
    if (eta == 0.0 || purified.rows == 0) return out;
    if (purified.cols != static_cast<int>(gate_state.size()))
        throw ContractViolation("injection_term: dimension mismatch");
    ensure_finite(gate_state, "injection gate state");

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(gate_state.size()));
    for (int r = 0; r < purified.rows; ++r) {
        std::span<const double> z(purified.row(r), purified.cols);
        double g = silu(dot(gate_state, z) * inv_sqrt_d);
        for (size_t c = 0; c < gate_state.size(); ++c) out[c] += g * z[c];
    }
    for (double& v : out) v *= eta;
    ensure_finite(out, "injection term");
    return out;
}

Vec ffn_with_injection(const FfnFn& ffn, std::span<const double> h_pre_steer,
                       std::span<const double> h_steered, const Matrix& purified, double eta,
                       bool gate_on_steered) {
    if (!ffn) throw ContractViolation("ffn_with_injection: missing ffn");
    Vec out = ffn(Vec(h_steered.begin(), h_steered.end()));
    if (eta == 0.0 || purified.rows == 0) return out;

    Vec term = injection_term(gate_on_steered ? h_steered : h_pre_steer, purified, eta);
    if (term.size() != out.size())
        throw ContractViolation("ffn_with_injection: ffn output width mismatch");
    for (size_t i = 0; i < out.size(); ++i) out[i] += term[i];
    return out;
}

}  // namespace lens
