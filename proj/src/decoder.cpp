#include "lens/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "lens/mars.hpp"
#include "lens/ofm.hpp"
#include "lens/reinject.hpp"

namespace lens {

namespace {

// Weight-stream kinds; stream id = (kind << 32) | layer, so adding tensors or
// reordering generation never shifts another tensor's entries.
enum : uint64_t { kEmbed = 0, kWq, kWk, kWv, kWo, kW1, kW2 };

constexpr double kAttnTemp = 4.0;
// Diagonal skew + noise scale of the attention projections. Q/K lean random
// (selectivity), V/O lean identity (content transport).
constexpr double kQkDiag = 0.6, kQkNoise = 0.8;
constexpr double kVoDiag = 0.45, kVoNoise = 0.3;
constexpr double kFfnDiag = 0.3, kFfnNoise = 0.2;

Matrix random_matrix(uint64_t seed, uint64_t stream, int rows, int cols, double entry_std,
                     double diag) {
    SeededRng rng(seed, stream);
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        double* row = m.row(r);
        for (int c = 0; c < cols; ++c) row[c] = entry_std * rng.gaussian();
    }
    if (diag != 0.0)
        for (int i = 0; i < std::min(rows, cols); ++i) m.at(i, i) += diag;
    return m;
}

uint64_t tensor_stream(uint64_t kind, int layer) { return (kind << 32) | static_cast<uint32_t>(layer); }

void check_layer_index(const DecoderConfig& cfg, int l) {
    if (l < 0 || l >= cfg.num_layers) throw ContractViolation("decoder: layer index out of range");
}

}  // namespace

Decoder::Decoder(const DecoderConfig& cfg) : cfg_(cfg) {
    if (cfg.dim < 1 || cfg.num_layers < 1 || cfg.num_heads < 1 || cfg.vocab_size < 1 ||
        cfg.ffn_mult < 1)
        throw ContractViolation("decoder config: all sizes must be >= 1");
    if (cfg.dim % cfg.num_heads != 0)
        throw ContractViolation("decoder config: num_heads must divide dim");

    const int d = cfg.dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    SeededRng erng(cfg.weight_seed, tensor_stream(kEmbed, 0));
    embed_ = Matrix(cfg.vocab_size, d);
    for (int t = 0; t < cfg.vocab_size; ++t) {
        double* row = embed_.row(t);
        for (int c = 0; c < d; ++c) row[c] = erng.gaussian();
        double n = norm(std::span<const double>(row, d));
        if (n < 1e-12) {
            std::fill(row, row + d, 0.0);
            row[0] = 1.0;
        } else {
            for (int c = 0; c < d; ++c) row[c] /= n;
        }
    }

    const int m = cfg.ffn_mult * d;
    layers_.reserve(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerWeights w;
        w.wq = random_matrix(cfg.weight_seed, tensor_stream(kWq, l), d, d, kQkNoise * inv_sqrt_d, kQkDiag);
        w.wk = random_matrix(cfg.weight_seed, tensor_stream(kWk, l), d, d, kQkNoise * inv_sqrt_d, kQkDiag);
        w.wv = random_matrix(cfg.weight_seed, tensor_stream(kWv, l), d, d, kVoNoise * inv_sqrt_d, kVoDiag);
        w.wo = random_matrix(cfg.weight_seed, tensor_stream(kWo, l), d, d, kVoNoise * inv_sqrt_d, kVoDiag);
        w.w1 = random_matrix(cfg.weight_seed, tensor_stream(kW1, l), m, d, kFfnNoise * inv_sqrt_d,
                             kFfnDiag);
        w.w2 = random_matrix(cfg.weight_seed, tensor_stream(kW2, l), d, m,
                             kFfnNoise / std::sqrt(static_cast<double>(m)), kFfnDiag);
        layers_.push_back(std::move(w));
    }
}

const LayerWeights& Decoder::layer(int l) const {
    check_layer_index(cfg_, l);
    return layers_[l];
}

Vec Decoder::embed_token(int id) const {
    if (id < 0 || id >= cfg_.vocab_size) throw ContractViolation("embed_token: id out of range");
    return embed_.row_vec(id);
}

Matrix Decoder::embed_tokens(std::span<const int> ids) const {
    Matrix m(static_cast<int>(ids.size()), cfg_.dim);
    for (size_t i = 0; i < ids.size(); ++i) m.set_row(static_cast<int>(i), embed_token(ids[i]));
    return m;
}

Vec Decoder::ffn(int l, const Vec& x) const {
    check_layer_index(cfg_, l);
    Vec y = matvec(layers_[l].w1, x);
    for (double& v : y) v = silu(v);
    return matvec(layers_[l].w2, y);
}

Vec Decoder::logits(const Vec& final_hidden) const {
    if (static_cast<int>(final_hidden.size()) != cfg_.dim)
        throw ContractViolation("logits: dimension mismatch");
    return matvec(embed_, final_hidden);
}

int argmax_lowest(std::span<const double> v) {
    if (v.empty()) throw ContractViolation("argmax over empty vector");
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

SequenceState make_state(const Decoder& dec, const Matrix* visual_rows,
                         std::span<const int> system_ids, std::span<const int> query_ids) {
    const int d = dec.config().dim;
    SequenceState st;
    st.acts.resize(dec.config().num_layers + 1);

    if (visual_rows) {
        if (visual_rows->cols != d)
            throw ContractViolation("make_state: visual rows have wrong width");
        for (int r = 0; r < visual_rows->rows; ++r) {
            Vec row = visual_rows->row_vec(r);
            ensure_finite(row, "visual token");
            st.visual_positions.push_back(st.length());
            st.kinds.push_back(TokenKind::Visual);
            st.token_ids.push_back(-1);
            st.acts[0].push_back(std::move(row));
        }
    }
    for (int id : system_ids) {
        st.kinds.push_back(TokenKind::System);
        st.token_ids.push_back(id);
        st.acts[0].push_back(dec.embed_token(id));
    }
    for (int id : query_ids) {
        st.kinds.push_back(TokenKind::Query);
        st.token_ids.push_back(id);
        st.acts[0].push_back(dec.embed_token(id));
    }
    if (st.length() == 0) throw ContractViolation("make_state: empty sequence");
    st.retained_visual = st.visual_positions;
    st.masked.assign(st.length(), 0);
    return st;
}

void append_token(const Decoder& dec, SequenceState& state, int token_id, TokenKind kind) {
    state.kinds.push_back(kind);
    state.token_ids.push_back(token_id);
    state.acts[0].push_back(dec.embed_token(token_id));
    state.masked.push_back(0);
}

namespace {

struct ForwardOut {
    Vec final_hidden;
    std::vector<Vec> post_attention;
    std::vector<AttentionCapture> captures;
    std::vector<LayerStepRecord> records;
};

void validate_hooks(const Decoder& dec, const InterventionHooks& h) {
    const auto& cfg = dec.config();
    int prev = -1;
    for (int l : h.steer_layers) {
        if (l < 0 || l >= cfg.num_layers)
            throw ContractViolation("hooks: steer layer out of range");
        if (l <= prev) throw ContractViolation("hooks: steer layers must be ascending and unique");
        prev = l;
    }
    if (h.lambda < 0.0) throw ContractViolation("hooks: lambda must be >= 0");
    if (!(h.tau_vis > 0.0)) throw ContractViolation("hooks: tau_vis must be > 0");
    if (h.gamma < 0.0 || h.gamma > 1.0) throw ContractViolation("hooks: gamma must be in [0, 1]");
    if (h.eta < 0.0) throw ContractViolation("hooks: eta must be >= 0");
    if ((h.ofm || h.reinject) && h.anchor == nullptr)
        throw ContractViolation("hooks: modulation and re-injection need an anchor");
    if (h.anchor && static_cast<int>(h.anchor->size()) != cfg.dim)
        throw ContractViolation("hooks: anchor dimension mismatch");
    if (h.mars) {
        if (h.bank == nullptr) throw ContractViolation("hooks: steering needs a bank");
        if (h.bank->dim != cfg.dim) throw ContractViolation("hooks: bank dimension mismatch");
        for (int l : h.steer_layers)
            if (h.bank->find(l) == nullptr)
                throw ContractViolation("hooks: bank is missing a steer layer");
    }
}

// Runs one position through all layers. `hooks` may be null (plain forward).
// Capture assembly is bookkeeping only; the arithmetic is identical with and
// without it.
ForwardOut forward_position(const Decoder& dec, SequenceState& st, int pos,
                            const InterventionHooks* hooks, bool want_capture) {
    const auto& cfg = dec.config();
    const int d = cfg.dim;
    const int nh = cfg.num_heads;
    const int dh = d / nh;

    ForwardOut out;

    bool want_mod = hooks && (hooks->ofm || hooks->reinject);
    double gamma_eff = (hooks && hooks->ofm) ? hooks->gamma : 1.0;

    // Raw retained visual rows; purification always starts from the embedding
    // layer representation.
    Matrix z_sub;
    if (want_mod && !st.retained_visual.empty()) {
        z_sub = Matrix(static_cast<int>(st.retained_visual.size()), d);
        for (size_t i = 0; i < st.retained_visual.size(); ++i)
            z_sub.set_row(static_cast<int>(i), st.acts[0][st.retained_visual[i]]);
    }

    Matrix z_shared;
    std::vector<ModulationReport> shared_reports;
    if (hooks && hooks->ofm_embed_only && want_mod && z_sub.rows > 0) {
        auto [zt, reps] = modulate_subset(z_sub, st.acts[0][pos], *hooks->anchor, gamma_eff,
                                          hooks->eps);
        z_shared = std::move(zt);
        shared_reports = std::move(reps);
    }

    Vec x = st.acts[0][pos];
    for (int l = 0; l < cfg.num_layers; ++l) {
        if (l > 0) {
            if (static_cast<int>(st.acts[l].size()) != pos)
                throw ContractViolation("forward: activation cache out of sync");
            st.acts[l].push_back(x);
        }
        const LayerWeights& w = dec.layer(l);

        Vec q = matvec(w.wq, x);
        for (int h = 0; h < nh; ++h) {
            std::span<double> qh(q.data() + h * dh, dh);
            double n = norm(qh);
            if (n > 0.0)
                for (double& v : qh) v /= n;
        }

        std::vector<int> keys;
        keys.reserve(pos + 1);
        for (int j = 0; j <= pos; ++j)
            if (!st.masked[j] || j == pos) keys.push_back(j);

        // Per-key projected values and per-head key directions.
        std::vector<Vec> kproj(keys.size()), vproj(keys.size());
        for (size_t i = 0; i < keys.size(); ++i) {
            const Vec& src = st.acts[l][keys[i]];
            kproj[i] = matvec(w.wk, src);
            for (int h = 0; h < nh; ++h) {
                std::span<double> kh(kproj[i].data() + h * dh, dh);
                double n = norm(kh);
                if (n > 0.0)
                    for (double& v : kh) v /= n;
            }
            vproj[i] = matvec(w.wv, src);
        }

        Vec ctx(d, 0.0);
        AttentionCapture cap;
        cap.layer = l;
        if (want_capture) cap.head_rows.assign(nh, Vec(pos + 1, 0.0));

        for (int h = 0; h < nh; ++h) {
            Vec logit(keys.size());
            for (size_t i = 0; i < keys.size(); ++i)
                logit[i] = kAttnTemp * dot(std::span<const double>(q.data() + h * dh, dh),
                                           std::span<const double>(kproj[i].data() + h * dh, dh));
            Vec prob = softmax_row(logit);
            for (size_t i = 0; i < keys.size(); ++i) {
                const double p = prob[i];
                const double* v = vproj[i].data() + h * dh;
                for (int c = 0; c < dh; ++c) ctx[h * dh + c] += p * v[c];
                if (want_capture) cap.head_rows[h][keys[i]] = p;
            }
        }
        if (want_capture) out.captures.push_back(std::move(cap));

        Vec attn = matvec(w.wo, ctx);
        Vec h_pre(d);
        for (int c = 0; c < d; ++c) h_pre[c] = x[c] + attn[c];
        out.post_attention.push_back(h_pre);

        bool is_steer_layer =
            hooks && std::binary_search(hooks->steer_layers.begin(), hooks->steer_layers.end(), l);

        Vec h_steered = h_pre;
        LayerStepRecord rec;
        rec.layer = l;
        if (is_steer_layer) {
            // omega is a pure read; it is recorded even when steering is off so
            // baseline traces stay comparable.
            if (want_capture && !st.retained_visual.empty())
                rec.omega = visual_reliance(out.captures.back(), st.retained_visual);
            if (hooks->mars) {
                rec.alpha = steering_intensity(rec.omega, hooks->lambda, hooks->tau_vis);
                if (rec.alpha > 0.0) {
                    h_steered = apply_steering(h_pre, *hooks->bank->find(l), rec.alpha);
                    rec.applied = true;
                }
            }
        }

        Vec f;
        if (want_mod && is_steer_layer && z_sub.rows > 0) {
            const Matrix* z_use = &z_shared;
            const std::vector<ModulationReport>* reps_use = &shared_reports;
            Matrix z_local;
            std::vector<ModulationReport> local_reports;
            if (!hooks->ofm_embed_only) {
                auto [zt, reps] = modulate_subset(z_sub, h_pre, *hooks->anchor, gamma_eff,
                                                  hooks->eps);
                z_local = std::move(zt);
                local_reports = std::move(reps);
                z_use = &z_local;
                reps_use = &local_reports;
            }
            double sb = 0.0, sa = 0.0;
            for (const auto& r : *reps_use) {
                sb += r.snr_before;
                sa += r.snr_after;
            }
            rec.snr_before = sb / static_cast<double>(reps_use->size());
            rec.snr_after = sa / static_cast<double>(reps_use->size());

            f = dec.ffn(l, h_steered);
            if (hooks->reinject && hooks->eta > 0.0) {
                const Vec& gate = hooks->gate_on_steered ? h_steered : h_pre;
                Vec term = injection_term(gate, *z_use, hooks->eta);
                rec.inject_energy = dot(term, term);
                for (int c = 0; c < d; ++c) f[c] += term[c];
            }
        } else {
            f = dec.ffn(l, h_steered);
        }

        if (is_steer_layer) out.records.push_back(rec);

        for (int c = 0; c < d; ++c) x[c] = h_steered[c] + f[c];
    }

    ensure_finite(x, "forward output");
    st.acts[cfg.num_layers].push_back(x);
    out.final_hidden = std::move(x);
    st.processed = pos + 1;
    return out;
}

}  // namespace

void prefill(const Decoder& dec, SequenceState& state) {
    for (int pos = state.processed; pos < state.length() - 1; ++pos)
        forward_position(dec, state, pos, nullptr, false);
}

StepResult decode_step(const Decoder& dec, SequenceState& state, const InterventionHooks& hooks) {
    if (state.length() < 1) throw ContractViolation("decode_step: empty state");
    if (state.processed != state.length() - 1)
        throw ContractViolation("decode_step: prefill required before stepping");
    validate_hooks(dec, hooks);

    ForwardOut fo = forward_position(dec, state, state.length() - 1, &hooks, true);

    StepResult res;
    res.final_hidden = fo.final_hidden;
    res.post_attention = std::move(fo.post_attention);
    res.captures = std::move(fo.captures);
    res.records = std::move(fo.records);
    res.logits = dec.logits(res.final_hidden);
    res.token_id = argmax_lowest(res.logits);
    append_token(dec, state, res.token_id, TokenKind::Generated);
    return res;
}

}  // namespace lens
