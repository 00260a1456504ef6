#pragma once

#include <span>
#include <utility>
#include <vector>

#include "lens/kernel.hpp"

namespace lens {

// Energies are measured by re-projecting the output, not copied from the
// construction, so the attenuation law is a real observation.
struct ModulationReport {
    double aligned_before = 0.0;
    double aligned_after = 0.0;
    double orthogonal_before = 0.0;
    double orthogonal_after = 0.0;
    double snr_before = 0.0;  // aligned / orthogonal; +inf when orthogonal is 0
    double snr_after = 0.0;
};

// z_tilde = P z + gamma (I - P) z with P the projector onto the basis span.
// gamma == 1 returns z bit-exactly.
std::pair<Vec, ModulationReport> modulate_token(std::span<const double> z,
                                                const SubspaceBasis& basis, double gamma);

// Builds the span basis from (anchor, h) and modulates every row. gamma in
// [0, 1]; rows must match the anchor dimension.
std::pair<Matrix, std::vector<ModulationReport>> modulate_subset(const Matrix& tokens,
                                                                 std::span<const double> h,
                                                                 std::span<const double> anchor,
                                                                 double gamma, double eps = 1e-8);

}  // namespace lens
