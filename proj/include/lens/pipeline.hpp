#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lens/anchor.hpp"
#include "lens/ctp.hpp"
#include "lens/decoder.hpp"
#include "lens/mars.hpp"
#include "lens/synth.hpp"

namespace lens {

struct RunConfig {
    uint64_t seed = 2026;
    DecoderConfig decoder;
    double q = 0.25;
    double gamma = 0.8;
    double eta = 0.06;
    double lambda = 0.15;
    double tau_vis = 0.4;
    std::vector<int> steer_layers;  // default: top ceil(7/32 * num_layers) layers
    double eps_degenerate = 1e-8;
    int max_new_tokens = 8;
    bool ctp = true;
    bool ofm = true;
    bool mars = true;
    bool reinject = true;
    bool ofm_embed_only = false;
    bool reinject_gate_on_steered = false;
};

std::vector<int> default_steer_layers(int num_layers);
RunConfig default_config();

// Throws ContractViolation naming the offending key.
void validate_config(const RunConfig& cfg);

// Flat key=value text, '#' comments. Unknown keys and out-of-range values are
// errors; missing keys fall back to defaults. serialize/load round-trips
// bit-exactly.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

struct TraceRecord {
    int step = 0;  // 1-based generated-token index
    int layer = 0;
    double omega = 0.0;
    double alpha = 0.0;
    bool applied = false;
    double snr_before = 0.0;
    double snr_after = 0.0;
    double inject_energy = 0.0;
};

struct DecodeTrace {
    PruneResult prune;
    std::vector<TraceRecord> records;  // one per (step, steer layer)
};

// JSON Lines; every record carries the keys {step, layer, omega, alpha,
// snr_before, snr_after, inject_energy}. The first line is the prune summary
// (step 0, layer -1). Identical inputs produce identical bytes.
std::string trace_to_jsonl(const DecodeTrace& trace);
void save_trace(const DecodeTrace& trace, const std::string& path);

struct ExperimentInput {
    const PlantedScene* scene = nullptr;  // optional visual block
    std::vector<int> system_ids;          // character profile, non-empty
    std::vector<int> query_ids;
    const SteeringBank* bank = nullptr;   // required when cfg.mars
};

struct ExperimentResult {
    std::vector<int> generated;
    DecodeTrace trace;
    double role_resonance = 0.0;   // mean cos(final-layer step state, anchor)
    double grounding_score = 0.0;  // mean attention mass on planted signal rows
    Vec last_final_hidden;
};

ExperimentResult run_experiment(const Decoder& dec, const RunConfig& cfg,
                                const ExperimentInput& input);

// Seeded scene + profile + query + calibrated bank for harness experiments.
// Tasks with the same (seed, index) are identical; the neutral calibration
// profile depends on the seed only.
struct TaskSpec {
    int k_tokens = 16;
    int signal_count = 4;
    double delta = 0.25;
    double snr = 1.0;
    int profile_len = 8;
    int query_len = 6;
    int calib_pairs = 16;
    int calib_query_len = 6;
};

struct SyntheticTask {
    PlantedScene scene;
    CharacterProfile profile;
    std::vector<int> query_ids;
    SteeringBank bank;
    Vec anchor;
    Vec context;  // mean query embedding; the scene span is (anchor, context)
};

SyntheticTask make_synthetic_task(const Decoder& dec, uint64_t seed, uint64_t index,
                                  const TaskSpec& spec, const std::vector<int>& steer_layers);

// Selector baselines for the pruning benchmark, all at cardinality ceil(q*K).
enum class Selector { Resonance, Random, Norm, QueryRelevance };

std::vector<int> select_baseline(Selector sel, const Matrix& tokens,
                                 std::span<const double> anchor, std::span<const double> query_vec,
                                 double q, SeededRng& rng);

// Mean over the selected rows of cos(token, anchor) - cos(token, query).
double role_specific_gain(const Matrix& tokens, std::span<const int> selected,
                          std::span<const double> anchor, std::span<const double> query_vec);

// value,role_resonance,grounding_score rows (header line first), one row per
// (value, scene), sorted by value. param is one of q, gamma, eta, lambda,
// tau_vis; every value must satisfy the config range for that key.
std::string sweep_csv(const Decoder& dec, const RunConfig& base, const std::string& param,
                      std::span<const double> values, int num_scenes);

// Runs every (prompt, role) pair and dumps the final-layer hidden state of the
// last generated step: one JSON header line {"rows","dim","dtype":"f32le"},
// float32 rows, plus a JSON Lines index mapping row -> (prompt_id, role_id).
void dump_hidden_states(const Decoder& dec, const RunConfig& cfg,
                        std::span<const CharacterProfile> roles, int num_prompts,
                        const std::string& states_path, const std::string& index_path);

Matrix load_state_dump(const std::string& path);

}  // namespace lens
