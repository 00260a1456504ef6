#include "lens/ctp.hpp"

#include <algorithm>
#include <cmath>

#include "lens/decoder.hpp"

namespace lens {

Vec resonance_scores(const Matrix& tokens, std::span<const double> anchor) {
    if (tokens.cols != static_cast<int>(anchor.size()) && tokens.rows > 0)
        throw ContractViolation("resonance_scores: dimension mismatch");
    double na = norm(anchor);
    if (na == 0.0) throw DegenerateInput("resonance_scores: zero-norm anchor");
    ensure_finite(anchor, "resonance anchor");

    Vec scores(tokens.rows);
    for (int r = 0; r < tokens.rows; ++r) {
        std::span<const double> row(tokens.row(r), tokens.cols);
        ensure_finite(row, "resonance token");
        double nr = norm(row);
        scores[r] = nr == 0.0 ? -1.0 : std::clamp(dot(row, anchor) / (nr * na), -1.0, 1.0);
    }
    return scores;
}

std::vector<int> select_top_q(std::span<const double> scores, double q) {
    if (scores.empty()) throw ContractViolation("select_top_q: empty score list");
    if (!(q > 0.0 && q <= 1.0)) throw ContractViolation("select_top_q: q must be in (0, 1]");
    ensure_finite(scores, "select_top_q scores");

    const int k = static_cast<int>(scores.size());
    int keep = static_cast<int>(std::ceil(q * static_cast<double>(k)));
    keep = std::clamp(keep, 1, k);

    std::vector<int> order(k);
    for (int i = 0; i < k; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

PruneResult prune_visual_tokens(SequenceState& state, std::span<const double> anchor, double q) {
    if (state.processed != 0)
        throw ContractViolation("prune_visual_tokens: must run before any position is processed");

    PruneResult res;
    res.total = static_cast<int>(state.visual_positions.size());
    if (res.total == 0) return res;

    Matrix tokens(res.total, static_cast<int>(anchor.size()));
    for (int i = 0; i < res.total; ++i)
        tokens.set_row(i, state.acts[0][state.visual_positions[i]]);

    res.scores = resonance_scores(tokens, anchor);
    res.retained = select_top_q(res.scores, q);
    res.tau_q = res.scores[res.retained[0]];
    for (int i : res.retained) res.tau_q = std::min(res.tau_q, res.scores[i]);

    std::vector<uint8_t> keep(res.total, 0);
    for (int i : res.retained) keep[i] = 1;
    state.retained_visual.clear();
    for (int i = 0; i < res.total; ++i) {
        if (keep[i])
            state.retained_visual.push_back(state.visual_positions[i]);
        else
            state.masked[state.visual_positions[i]] = 1;
    }
    return res;
}

}  // namespace lens
