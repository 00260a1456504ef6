#pragma once

#include <span>
#include <string>
#include <vector>

#include "lens/kernel.hpp"

namespace lens {

// Synthetic visual tokens with known ground truth. Signal rows decompose as
// token = role + noise exactly; role carries fraction (1-delta) of its energy
// inside span(anchor, context) and fraction delta along a random direction
// orthogonal to it, with |role|^2 / |noise|^2 == snr per token. Non-signal
// rows are pure isotropic noise at matching expected energy, so token norms
// carry no selection signal.
struct PlantedScene {
    Matrix tokens;
    Matrix role_components;   // zero rows at non-signal positions
    Matrix noise_components;
    std::vector<uint8_t> is_signal;
    int signal_count = 0;
    double delta = 0.0;
    double snr = 0.0;
};

PlantedScene generate_scene(SeededRng& gen, std::span<const double> anchor,
                            std::span<const double> context, int k_tokens, int signal_count,
                            double delta, double snr, double eps = 1e-8);

// One JSON header line {"K","d","delta","snr","signal_count","dtype":"f32le"}
// followed by the tokens, role and noise blocks as little-endian float32,
// row-major. Signal membership is recovered from non-zero role rows.
void save_scene(const PlantedScene& scene, const std::string& path);
PlantedScene load_scene(const std::string& path);

}  // namespace lens
