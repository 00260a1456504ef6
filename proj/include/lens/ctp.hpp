#pragma once

#include <span>
#include <vector>

#include "lens/kernel.hpp"

namespace lens {

struct SequenceState;

struct PruneResult {
    std::vector<int> retained;   // indices into the scored list, ascending
    std::vector<double> scores;  // resonance per token, input order
    double tau_q = 0.0;          // smallest retained score
    int total = 0;
};

// Cosine of each token row against the anchor. A zero-norm row scores -1 so it
// sorts behind every real token.
Vec resonance_scores(const Matrix& tokens, std::span<const double> anchor);

// Keeps the ceil(q*K) highest scores; equal scores break toward the lower
// index. Output is sorted ascending.
std::vector<int> select_top_q(std::span<const double> scores, double q);

// Scores the raw visual rows of the state, masks everything outside the top-q
// set out of attention and records the survivors. Runs before any position is
// processed; discarded tokens keep their position. Text-only states are a
// no-op.
PruneResult prune_visual_tokens(SequenceState& state, std::span<const double> anchor, double q);

}  // namespace lens
