#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lens/kernel.hpp"

namespace lens {

// One analytical claim checked against a brute-force or Monte Carlo estimate.
// relation is "<=", ">=" or "within-rel"; passed is always re-derivable from
// (statistic, relation, bound, tolerance).
struct VerificationReport {
    std::string check_name;
    long trials = 0;
    double statistic = 0.0;
    std::string relation;
    double bound = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::vector<std::pair<std::string, double>> details;
};

std::string report_to_json(const VerificationReport& r);

// Token SNR is invariant under scalar scaling: max relative deviation of
// SNR(alpha z)/SNR(z) from 1 over random orthogonal (role, noise) pairs and
// alpha in (0, 1].
std::vector<VerificationReport> verify_prop1(SeededRng gen, long trials, int d);

// Rank-2 projection of isotropic noise keeps 2/d of the energy (within 5%
// relative), and the expected-SNR amplification of planted tokens under full
// orthogonal suppression reaches at least 0.8 * (d/2) * (1-delta). Per-token
// log10 amplifications are appended to log10_amps when given.
std::vector<VerificationReport> verify_prop2(SeededRng gen, long trials, int d, double delta,
                                             std::vector<double>* log10_amps = nullptr);

// The closed-form steering intensity with tau_vis = lambda/mu matches the
// grid-searched minimizer of the quadratic risk within 1e-4.
std::vector<VerificationReport> verify_mars_optimality(SeededRng gen, long trials);

}  // namespace lens
