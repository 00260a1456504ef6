#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lens/kernel.hpp"

namespace lens {

struct SteeringBank;  // mars.hpp

struct DecoderConfig {
    int dim = 128;
    int num_layers = 8;
    int num_heads = 4;  // must divide dim
    int vocab_size = 512;
    int ffn_mult = 4;
    uint64_t weight_seed = 7;
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;  // dim x dim
    Matrix w1;              // (ffn_mult*dim) x dim
    Matrix w2;              // dim x (ffn_mult*dim)
};

// Deterministic toy decoder. Layer structure per position:
//   h   = x + W_o . MHSA(x)          (per-head q/k normalization, fixed temperature)
//   out = h + W_2 . silu(W_1 . h)
// Logits are tied to the embedding table. All weights derive from weight_seed;
// Q/K/V/O carry an identity component so content survives the attention path,
// which is what makes directional interventions observable at this scale.
class Decoder {
  public:
    explicit Decoder(const DecoderConfig& cfg);

    const DecoderConfig& config() const { return cfg_; }
    const Matrix& embedding() const { return embed_; }
    const LayerWeights& layer(int l) const;

    Vec embed_token(int id) const;
    Matrix embed_tokens(std::span<const int> ids) const;  // one row per id

    Vec ffn(int l, const Vec& x) const;
    Vec logits(const Vec& final_hidden) const;

  private:
    DecoderConfig cfg_;
    Matrix embed_;
    std::vector<LayerWeights> layers_;
};

enum class TokenKind : uint8_t { Visual, System, Query, Generated };

// Activation cache. acts[l] holds the inputs to layer l for every processed
// position; acts[num_layers] holds final outputs. Visual positions that are
// pruned away stay in the sequence but are masked out of attention.
struct SequenceState {
    std::vector<TokenKind> kinds;
    std::vector<int> token_ids;  // -1 at visual positions
    std::vector<int> visual_positions;
    std::vector<int> retained_visual;  // ascending sequence positions
    std::vector<uint8_t> masked;
    std::vector<std::vector<Vec>> acts;
    int processed = 0;

    int length() const { return static_cast<int>(kinds.size()); }
};

struct AttentionCapture {
    int layer = 0;
    // One probability row per head over key positions [0, t]; masked keys hold 0.
    std::vector<Vec> head_rows;
};

struct InterventionHooks {
    bool ofm = false;
    bool mars = false;
    bool reinject = false;
    bool ofm_embed_only = false;     // one modulation per step, embedding as context
    bool gate_on_steered = false;    // injection gate reads the steered state
    double lambda = 0.0;
    double tau_vis = 0.4;
    double gamma = 0.8;              // 1.0 = identity modulation (bit-exact)
    double eta = 0.0;
    double eps = 1e-8;
    std::vector<int> steer_layers;   // ascending, unique, < num_layers
    const Vec* anchor = nullptr;     // required when ofm or reinject is on
    const SteeringBank* bank = nullptr;  // required when mars is on
};

struct LayerStepRecord {
    int layer = 0;
    double omega = 0.0;
    double alpha = 0.0;
    bool applied = false;
    double snr_before = 0.0;
    double snr_after = 0.0;
    double inject_energy = 0.0;
};

struct StepResult {
    int token_id = -1;
    Vec logits;
    Vec final_hidden;
    std::vector<Vec> post_attention;         // per layer, at the stepped position
    std::vector<AttentionCapture> captures;  // per layer
    std::vector<LayerStepRecord> records;    // per steer layer
};

SequenceState make_state(const Decoder& dec, const Matrix* visual_rows,
                         std::span<const int> system_ids, std::span<const int> query_ids);

void append_token(const Decoder& dec, SequenceState& state, int token_id,
                  TokenKind kind = TokenKind::Generated);

// Plain forward over every position except the last, hooks disabled.
void prefill(const Decoder& dec, SequenceState& state);

// Processes the last pending position with hooks, picks the next token by
// greedy argmax (lowest index wins ties) and appends it to the state. Hooks
// that are off, or carry identity parameters (alpha == 0, eta == 0), leave the
// hidden states bit-identical to a plain forward.
StepResult decode_step(const Decoder& dec, SequenceState& state, const InterventionHooks& hooks);

int argmax_lowest(std::span<const double> v);

}  // namespace lens
