#pragma once

#include <functional>
#include <span>

#include "lens/kernel.hpp"

namespace lens {

// eta * sum_k silu(<gate_state, z_k>/sqrt(d)) * z_k over the rows of purified.
// eta == 0 or an empty row set yields an exact zero vector.
Vec injection_term(std::span<const double> gate_state, const Matrix& purified, double eta);

using FfnFn = std::function<Vec(const Vec&)>;

// FFN(h_steered) plus the injection term. The gate reads the pre-steering
// state unless gate_on_steered is set; the FFN body always consumes the
// steered state. eta == 0 returns FFN(h_steered) bit-exactly.
Vec ffn_with_injection(const FfnFn& ffn, std::span<const double> h_pre_steer,
                       std::span<const double> h_steered, const Matrix& purified, double eta,
                       bool gate_on_steered = false);

}  // namespace lens
