#pragma once

#include <span>
#include <string>
#include <vector>

#include "lens/decoder.hpp"
#include "lens/kernel.hpp"

namespace lens {

struct CalibrationPair {
    std::string pair_id;
    std::vector<int> role;
    std::vector<int> neutral;
};

struct SteeringBank {
    std::vector<int> layers;  // ascending
    int dim = 0;
    int num_pairs = 0;
    std::vector<Vec> vectors;  // parallel to layers

    const Vec* find(int layer) const;
};

// v^(l) = mean over pairs of (role hidden - neutral hidden), where the hidden
// state is the last prompt token's post-attention residual at layer l from a
// plain forward pass. Pairs are accumulated in ascending pair_id order, so the
// bank does not depend on input ordering.
SteeringBank calibrate(const Decoder& dec, std::vector<CalibrationPair> pairs,
                       std::vector<int> layer_set);

// Head-averaged attention mass on the given key positions. Every head row must
// sum to 1 within 1e-4.
double visual_reliance(const AttentionCapture& capture, std::span<const int> visual_index_set);

// alpha = lambda * max(0, 1 - omega/tau_vis). Zero at and beyond tau_vis.
double steering_intensity(double omega, double lambda, double tau_vis);

// h + alpha*v. alpha == 0 returns h bit-exactly.
Vec apply_steering(std::span<const double> h, std::span<const double> v, double alpha);

// Minimizer of 0.5*(lambda - alpha)^2 + mu*alpha*omega over alpha >= 0, found
// by grid search (step <= 1e-5) plus a fine local pass. Verification-only
// counterpart of steering_intensity with tau_vis = lambda/mu.
double risk_optimum_oracle(double lambda, double mu, double omega);

// File format: one JSON header line {"layers","dim","pairs","dtype":"f32le"}
// followed by the vectors as little-endian float32, in layer order.
void save_bank(const SteeringBank& bank, const std::string& path);
SteeringBank load_bank(const std::string& path);

// JSON Lines: {"pair_id": str, "role": [ids], "neutral": [ids]} per line.
std::vector<CalibrationPair> load_calibration_pairs(const std::string& path);

}  // namespace lens
