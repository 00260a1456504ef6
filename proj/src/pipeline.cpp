#include "lens/pipeline.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <json.hpp>

#include "io_util.hpp"
#include "lens/ofm.hpp"

namespace lens {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double_value(const std::string& s, const std::string& key, long line) {
    const std::string t = trim(s);
    if (t.empty()) throw ParseError("config: empty value for " + key, line);
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError("config: invalid number for " + key + ": '" + t + "'", line);
    return v;
}

long long parse_int_value(const std::string& s, const std::string& key, long line) {
    const std::string t = trim(s);
    if (t.empty()) throw ParseError("config: empty value for " + key, line);
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError("config: invalid integer for " + key + ": '" + t + "'", line);
    return v;
}

uint64_t parse_u64_value(const std::string& s, const std::string& key, long line) {
    const std::string t = trim(s);
    if (t.empty() || t[0] == '-') throw ParseError("config: invalid value for " + key, line);
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError("config: invalid integer for " + key + ": '" + t + "'", line);
    return static_cast<uint64_t>(v);
}

bool parse_bool_value(const std::string& s, const std::string& key, long line) {
    const std::string t = trim(s);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ParseError("config: invalid boolean for " + key + ": '" + t + "'", line);
}

std::vector<int> parse_layer_list(const std::string& s, long line) {
    std::vector<int> out;
    const std::string t = trim(s);
    if (t.empty()) return out;
    size_t pos = 0;
    while (pos <= t.size()) {
        size_t comma = t.find(',', pos);
        std::string item = comma == std::string::npos ? t.substr(pos) : t.substr(pos, comma - pos);
        out.push_back(static_cast<int>(parse_int_value(item, "steer_layers", line)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::string join_layers(const std::vector<int>& layers) {
    std::string out;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(layers[i]);
    }
    return out;
}

std::vector<int> random_token_ids(SeededRng rng, int count, int vocab) {
    std::vector<int> ids(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        ids[static_cast<size_t>(i)] = static_cast<int>(rng.next_u64() % static_cast<uint64_t>(vocab));
    return ids;
}

// Stream ids under SeededRng(seed): 0 is the seed-only neutral profile shared
// by every caller; tasks occupy index+1; the dump tool uses the two tags below.
constexpr uint64_t kNeutralStream = 0;
constexpr uint64_t kDumpPromptStream = 0xD00DULL;
constexpr uint64_t kDumpCalibStream = 0xCA11BULL;

SteeringBank calibrate_profile_bank(const Decoder& dec, const std::vector<int>& role_ids,
                                    const std::vector<int>& neutral_ids, SeededRng calib_root,
                                    int num_pairs, int query_len,
                                    const std::vector<int>& layer_set) {
    std::vector<CalibrationPair> pairs;
    pairs.reserve(static_cast<size_t>(num_pairs));
    for (int i = 0; i < num_pairs; ++i) {
        std::vector<int> query = random_token_ids(calib_root.substream(static_cast<uint64_t>(i)),
                                                  query_len, dec.config().vocab_size);
        char id[16];
        std::snprintf(id, sizeof(id), "pair-%03d", i);
        CalibrationPair p;
        p.pair_id = id;
        p.role = role_ids;
        p.role.insert(p.role.end(), query.begin(), query.end());
        p.neutral = neutral_ids;
        p.neutral.insert(p.neutral.end(), query.begin(), query.end());
        pairs.push_back(std::move(p));
    }
    return calibrate(dec, std::move(pairs), layer_set);
}

}  // namespace

std::vector<int> default_steer_layers(int num_layers) {
    if (num_layers < 1) throw ContractViolation("config: num_layers must be >= 1");
    int count = (7 * num_layers + 31) / 32;  // ceil(7/32 * L)
    if (count < 1) count = 1;
    if (count > num_layers) count = num_layers;
    std::vector<int> layers(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) layers[static_cast<size_t>(i)] = num_layers - count + i;
    return layers;
}

RunConfig default_config() {
    RunConfig cfg;
    cfg.steer_layers = default_steer_layers(cfg.decoder.num_layers);
    return cfg;
}

void validate_config(const RunConfig& cfg) {
    const auto& d = cfg.decoder;
    if (d.dim < 1) throw ContractViolation("config: dim must be >= 1");
    if (d.num_layers < 1) throw ContractViolation("config: num_layers must be >= 1");
    if (d.num_heads < 1) throw ContractViolation("config: num_heads must be >= 1");
    if (d.dim % d.num_heads != 0)
        throw ContractViolation("config: dim must be divisible by num_heads");
    if (d.vocab_size < 1) throw ContractViolation("config: vocab_size must be >= 1");
    if (d.ffn_mult < 1) throw ContractViolation("config: ffn_mult must be >= 1");
    if (!(cfg.q > 0.0 && cfg.q <= 1.0)) throw ContractViolation("config: q must be in (0, 1]");
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
        throw ContractViolation("config: gamma must be in [0, 1)");
    if (!(cfg.eta >= 0.0 && cfg.eta <= 1.0))
        throw ContractViolation("config: eta must be in [0, 1]");
    if (!(cfg.lambda >= 0.0)) throw ContractViolation("config: lambda must be >= 0");
    if (!(cfg.tau_vis > 0.0)) throw ContractViolation("config: tau_vis must be > 0");
    if (!(cfg.eps_degenerate > 0.0))
        throw ContractViolation("config: eps_degenerate must be > 0");
    if (cfg.max_new_tokens < 1) throw ContractViolation("config: max_new_tokens must be >= 1");
    for (size_t i = 0; i < cfg.steer_layers.size(); ++i) {
        int l = cfg.steer_layers[i];
        if (l < 0 || l >= d.num_layers)
            throw ContractViolation("config: steer_layers entries must be in [0, num_layers)");
        if (i > 0 && cfg.steer_layers[i - 1] >= l)
            throw ContractViolation("config: steer_layers must be strictly ascending");
    }
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    bool steer_set = false;

    std::istringstream in(text);
    std::string raw;
    long lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        size_t hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string line = trim(raw);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config: expected key=value, got '" + line + "'", lineno);
        std::string key = trim(line.substr(0, eq));
        std::string value = line.substr(eq + 1);
        if (key.empty()) throw ParseError("config: missing key before '='", lineno);

        if (key == "seed") cfg.seed = parse_u64_value(value, key, lineno);
        else if (key == "dim") cfg.decoder.dim = static_cast<int>(parse_int_value(value, key, lineno));
        else if (key == "num_layers") cfg.decoder.num_layers = static_cast<int>(parse_int_value(value, key, lineno));
        else if (key == "num_heads") cfg.decoder.num_heads = static_cast<int>(parse_int_value(value, key, lineno));
        else if (key == "vocab_size") cfg.decoder.vocab_size = static_cast<int>(parse_int_value(value, key, lineno));
        else if (key == "ffn_mult") cfg.decoder.ffn_mult = static_cast<int>(parse_int_value(value, key, lineno));
        else if (key == "weight_seed") cfg.decoder.weight_seed = parse_u64_value(value, key, lineno);
        else if (key == "q") cfg.q = parse_double_value(value, key, lineno);
        else if (key == "gamma") cfg.gamma = parse_double_value(value, key, lineno);
        else if (key == "eta") cfg.eta = parse_double_value(value, key, lineno);
        else if (key == "lambda") cfg.lambda = parse_double_value(value, key, lineno);
        else if (key == "tau_vis") cfg.tau_vis = parse_double_value(value, key, lineno);
        else if (key == "steer_layers") { cfg.steer_layers = parse_layer_list(value, lineno); steer_set = true; }
        else if (key == "eps_degenerate") cfg.eps_degenerate = parse_double_value(value, key, lineno);
        else if (key == "max_new_tokens") cfg.max_new_tokens = static_cast<int>(parse_int_value(value, key, lineno));
        else if (key == "ctp") cfg.ctp = parse_bool_value(value, key, lineno);
        else if (key == "ofm") cfg.ofm = parse_bool_value(value, key, lineno);
        else if (key == "mars") cfg.mars = parse_bool_value(value, key, lineno);
        else if (key == "reinject") cfg.reinject = parse_bool_value(value, key, lineno);
        else if (key == "ofm_embed_only") cfg.ofm_embed_only = parse_bool_value(value, key, lineno);
        else if (key == "reinject_gate_on_steered") cfg.reinject_gate_on_steered = parse_bool_value(value, key, lineno);
        else throw ParseError("config: unknown key '" + key + "'", lineno);
    }

    if (!steer_set) cfg.steer_layers = default_steer_layers(cfg.decoder.num_layers);
    validate_config(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(detail::read_file(path)); }

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    auto kv = [&out](const std::string& key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += "\n";
    };
    kv("seed", std::to_string(cfg.seed));
    kv("dim", std::to_string(cfg.decoder.dim));
    kv("num_layers", std::to_string(cfg.decoder.num_layers));
    kv("num_heads", std::to_string(cfg.decoder.num_heads));
    kv("vocab_size", std::to_string(cfg.decoder.vocab_size));
    kv("ffn_mult", std::to_string(cfg.decoder.ffn_mult));
    kv("weight_seed", std::to_string(cfg.decoder.weight_seed));
    kv("q", fmt_double(cfg.q));
    kv("gamma", fmt_double(cfg.gamma));
    kv("eta", fmt_double(cfg.eta));
    kv("lambda", fmt_double(cfg.lambda));
    kv("tau_vis", fmt_double(cfg.tau_vis));
    kv("steer_layers", join_layers(cfg.steer_layers));
    kv("eps_degenerate", fmt_double(cfg.eps_degenerate));
    kv("max_new_tokens", std::to_string(cfg.max_new_tokens));
    kv("ctp", cfg.ctp ? "true" : "false");
    kv("ofm", cfg.ofm ? "true" : "false");
    kv("mars", cfg.mars ? "true" : "false");
    kv("reinject", cfg.reinject ? "true" : "false");
    kv("ofm_embed_only", cfg.ofm_embed_only ? "true" : "false");
    kv("reinject_gate_on_steered", cfg.reinject_gate_on_steered ? "true" : "false");
    return out;
}

void save_config(const RunConfig& cfg, const std::string& path) {
    detail::write_file(path, serialize_config(cfg));
}

std::string trace_to_jsonl(const DecodeTrace& trace) {
    std::string out;
    {
        nlohmann::ordered_json j;
        j["step"] = 0;
        j["layer"] = -1;
        j["omega"] = 0.0;
        j["alpha"] = 0.0;
        j["snr_before"] = 0.0;
        j["snr_after"] = 0.0;
        j["inject_energy"] = 0.0;
        j["prune"] = {{"total", trace.prune.total},
                      {"retained", static_cast<int>(trace.prune.retained.size())},
                      {"tau_q", trace.prune.tau_q}};
        out += j.dump();
        out += "\n";
    }
    for (const TraceRecord& r : trace.records) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["layer"] = r.layer;
        j["omega"] = r.omega;
        j["alpha"] = r.alpha;
        j["snr_before"] = r.snr_before;
        j["snr_after"] = r.snr_after;
        j["inject_energy"] = r.inject_energy;
        j["applied"] = r.applied;
        out += j.dump();
        out += "\n";
    }
    return out;
}

void save_trace(const DecodeTrace& trace, const std::string& path) {
    detail::write_file(path, trace_to_jsonl(trace));
}

ExperimentResult run_experiment(const Decoder& dec, const RunConfig& cfg,
                                const ExperimentInput& input) {
    validate_config(cfg);
    if (input.system_ids.empty())
        throw ContractViolation("run_experiment: system_ids must be non-empty");
    if (cfg.mars && input.bank == nullptr)
        throw ContractViolation("run_experiment: a steering bank is required when mars is on");

    const Vec anchor = anchor_from_rows(dec.embed_tokens(input.system_ids));

    const Matrix* visual = input.scene ? &input.scene->tokens : nullptr;
    SequenceState state = make_state(dec, visual, input.system_ids, input.query_ids);

    ExperimentResult result;
    if (cfg.ctp && input.scene) {
        result.trace.prune = prune_visual_tokens(state, anchor, cfg.q);
    } else if (input.scene) {
        result.trace.prune.total = input.scene->tokens.rows;
        result.trace.prune.retained.resize(static_cast<size_t>(input.scene->tokens.rows));
        for (int i = 0; i < input.scene->tokens.rows; ++i)
            result.trace.prune.retained[static_cast<size_t>(i)] = i;
    }

    prefill(dec, state);

    InterventionHooks hooks;
    hooks.ofm = cfg.ofm;
    hooks.mars = cfg.mars;
    hooks.reinject = cfg.reinject;
    hooks.ofm_embed_only = cfg.ofm_embed_only;
    hooks.gate_on_steered = cfg.reinject_gate_on_steered;
    hooks.lambda = cfg.lambda;
    hooks.tau_vis = cfg.tau_vis;
    hooks.gamma = cfg.gamma;
    hooks.eta = cfg.eta;
    hooks.eps = cfg.eps_degenerate;
    hooks.steer_layers = cfg.steer_layers;
    hooks.anchor = &anchor;
    hooks.bank = input.bank;

    std::vector<int> signal_positions;
    if (input.scene) {
        for (int i = 0; i < input.scene->tokens.rows; ++i)
            if (input.scene->is_signal[static_cast<size_t>(i)])
                signal_positions.push_back(i);  // scene row i sits at sequence position i
    }

    double resonance_sum = 0.0;
    double grounding_sum = 0.0;
    long grounding_count = 0;
    for (int step = 1; step <= cfg.max_new_tokens; ++step) {
        StepResult sr = decode_step(dec, state, hooks);
        result.generated.push_back(sr.token_id);
        resonance_sum += cosine_similarity(sr.final_hidden, anchor);
        if (!signal_positions.empty()) {
            for (const AttentionCapture& cap : sr.captures) {
                grounding_sum += visual_reliance(cap, signal_positions);
                ++grounding_count;
            }
        }
        for (const LayerStepRecord& rec : sr.records) {
            TraceRecord t;
            t.step = step;
            t.layer = rec.layer;
            t.omega = rec.omega;
            t.alpha = rec.alpha;
            t.applied = rec.applied;
            t.snr_before = rec.snr_before;
            t.snr_after = rec.snr_after;
            t.inject_energy = rec.inject_energy;
            result.trace.records.push_back(t);
        }
        if (step == cfg.max_new_tokens) result.last_final_hidden = sr.final_hidden;
    }

    result.role_resonance = resonance_sum / cfg.max_new_tokens;
    result.grounding_score = grounding_count > 0 ? grounding_sum / grounding_count : 0.0;
    return result;
}

SyntheticTask make_synthetic_task(const Decoder& dec, uint64_t seed, uint64_t index,
                                  const TaskSpec& spec, const std::vector<int>& steer_layers) {
    if (spec.k_tokens < 1) throw ContractViolation("task: k_tokens must be >= 1");
    if (spec.profile_len < 1) throw ContractViolation("task: profile_len must be >= 1");
    if (spec.query_len < 1) throw ContractViolation("task: query_len must be >= 1");
    if (spec.calib_pairs < 1) throw ContractViolation("task: calib_pairs must be >= 1");
    if (spec.calib_query_len < 1) throw ContractViolation("task: calib_query_len must be >= 1");

    const SeededRng root(seed);
    const SeededRng task_root = root.substream(index + 1);
    const int vocab = dec.config().vocab_size;

    SyntheticTask task;
    task.profile.name = "task-" + std::to_string(index);
    task.profile.token_ids = random_token_ids(task_root.substream(1), spec.profile_len, vocab);
    task.query_ids = random_token_ids(task_root.substream(2), spec.query_len, vocab);

    task.anchor = build_anchor(dec, task.profile);
    task.context = anchor_from_rows(dec.embed_tokens(task.query_ids));

    SeededRng scene_rng = task_root.substream(3);
    task.scene = generate_scene(scene_rng, task.anchor, task.context, spec.k_tokens,
                                spec.signal_count, spec.delta, spec.snr);

    const std::vector<int> neutral_ids =
        random_token_ids(root.substream(kNeutralStream).substream(1), spec.profile_len, vocab);
    task.bank = calibrate_profile_bank(dec, task.profile.token_ids, neutral_ids,
                                       task_root.substream(4), spec.calib_pairs,
                                       spec.calib_query_len, steer_layers);
    return task;
}

std::vector<int> select_baseline(Selector sel, const Matrix& tokens,
                                 std::span<const double> anchor, std::span<const double> query_vec,
                                 double q, SeededRng& rng) {
    if (tokens.rows < 1) throw ContractViolation("select_baseline: no tokens");
    if (!(q > 0.0 && q <= 1.0)) throw ContractViolation("select_baseline: q must be in (0, 1]");

    const int k = tokens.rows;
    switch (sel) {
        case Selector::Resonance:
            return select_top_q(resonance_scores(tokens, anchor), q);
        case Selector::Random: {
            int quota = static_cast<int>(std::ceil(q * k));
            quota = std::clamp(quota, 1, k);
            std::vector<int> pool(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i) pool[static_cast<size_t>(i)] = i;
            for (int i = 0; i < quota; ++i) {
                int j = i + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(k - i));
                std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
            }
            pool.resize(static_cast<size_t>(quota));
            std::sort(pool.begin(), pool.end());
            return pool;
        }
        case Selector::Norm: {
            Vec scores(static_cast<size_t>(k));
            for (int i = 0; i < k; ++i)
                scores[static_cast<size_t>(i)] = norm(std::span<const double>(tokens.row(i), tokens.cols));
            return select_top_q(scores, q);
        }
        case Selector::QueryRelevance:
            return select_top_q(resonance_scores(tokens, query_vec), q);
    }
    throw ContractViolation("select_baseline: unknown selector");
}

double role_specific_gain(const Matrix& tokens, std::span<const int> selected,
                          std::span<const double> anchor, std::span<const double> query_vec) {
    if (selected.empty()) throw ContractViolation("role_specific_gain: empty selection");
    const Vec to_anchor = resonance_scores(tokens, anchor);
    const Vec to_query = resonance_scores(tokens, query_vec);
    double sum = 0.0;
    for (int idx : selected) {
        if (idx < 0 || idx >= tokens.rows)
            throw ContractViolation("role_specific_gain: index out of range");
        sum += to_anchor[static_cast<size_t>(idx)] - to_query[static_cast<size_t>(idx)];
    }
    return sum / static_cast<double>(selected.size());
}

std::string sweep_csv(const Decoder& dec, const RunConfig& base, const std::string& param,
                      std::span<const double> values, int num_scenes) {
    if (values.empty()) throw ContractViolation("sweep: values must be non-empty");
    if (num_scenes < 1) throw ContractViolation("sweep: num_scenes must be >= 1");

    auto with_value = [&](double v) {
        RunConfig cfg = base;
        if (param == "q") cfg.q = v;
        else if (param == "gamma") cfg.gamma = v;
        else if (param == "eta") cfg.eta = v;
        else if (param == "lambda") cfg.lambda = v;
        else if (param == "tau_vis") cfg.tau_vis = v;
        else throw ContractViolation("sweep: unsupported parameter '" + param + "'");
        validate_config(cfg);
        return cfg;
    };
    for (double v : values) (void)with_value(v);  // reject bad values before any work

    std::vector<SyntheticTask> tasks;
    tasks.reserve(static_cast<size_t>(num_scenes));
    for (int s = 0; s < num_scenes; ++s)
        tasks.push_back(make_synthetic_task(dec, base.seed, static_cast<uint64_t>(s), TaskSpec{},
                                            base.steer_layers));

    std::vector<double> ordered(values.begin(), values.end());
    std::sort(ordered.begin(), ordered.end());

    std::string out = "value,role_resonance,grounding_score\n";
    for (double v : ordered) {
        RunConfig cfg = with_value(v);
        for (const SyntheticTask& task : tasks) {
            ExperimentInput input;
            input.scene = &task.scene;
            input.system_ids = task.profile.token_ids;
            input.query_ids = task.query_ids;
            input.bank = &task.bank;
            ExperimentResult res = run_experiment(dec, cfg, input);
            out += fmt_double(v);
            out += ",";
            out += fmt_double(res.role_resonance);
            out += ",";
            out += fmt_double(res.grounding_score);
            out += "\n";
        }
    }
    return out;
}

void dump_hidden_states(const Decoder& dec, const RunConfig& cfg,
                        std::span<const CharacterProfile> roles, int num_prompts,
                        const std::string& states_path, const std::string& index_path) {
    validate_config(cfg);
    if (roles.empty()) throw ContractViolation("dump: roles must be non-empty");
    if (num_prompts < 1) throw ContractViolation("dump: num_prompts must be >= 1");
    for (const CharacterProfile& role : roles)
        if (role.token_ids.empty())
            throw ContractViolation("dump: every role needs at least one token");

    const SeededRng root(cfg.seed);
    const int vocab = dec.config().vocab_size;
    constexpr int kPromptLen = 6;
    constexpr int kNeutralLen = 8;
    constexpr int kCalibPairs = 16;
    constexpr int kCalibQueryLen = 6;

    const std::vector<int> neutral_ids =
        random_token_ids(root.substream(kNeutralStream).substream(1), kNeutralLen, vocab);

    std::vector<SteeringBank> banks;
    if (cfg.mars) {
        banks.reserve(roles.size());
        for (const CharacterProfile& role : roles)
            banks.push_back(calibrate_profile_bank(dec, role.token_ids, neutral_ids,
                                                   root.substream(kDumpCalibStream), kCalibPairs,
                                                   kCalibQueryLen, cfg.steer_layers));
    }

    const int num_roles = static_cast<int>(roles.size());
    const int rows = num_prompts * num_roles;
    const int dim = dec.config().dim;

    nlohmann::ordered_json header;
    header["rows"] = rows;
    header["dim"] = dim;
    header["dtype"] = "f32le";
    std::string states = header.dump();
    states += "\n";

    std::string index;
    for (int p = 0; p < num_prompts; ++p) {
        const std::vector<int> prompt_ids = random_token_ids(
            root.substream(kDumpPromptStream).substream(static_cast<uint64_t>(p)), kPromptLen,
            vocab);
        for (int r = 0; r < num_roles; ++r) {
            ExperimentInput input;
            input.system_ids = roles[static_cast<size_t>(r)].token_ids;
            input.query_ids = prompt_ids;
            input.bank = cfg.mars ? &banks[static_cast<size_t>(r)] : nullptr;
            ExperimentResult res = run_experiment(dec, cfg, input);
            detail::append_f32le(states, res.last_final_hidden);

            nlohmann::ordered_json line;
            line["row"] = p * num_roles + r;
            line["prompt_id"] = p;
            line["role_id"] = r;
            line["role_name"] = roles[static_cast<size_t>(r)].name;
            index += line.dump();
            index += "\n";
        }
    }

    detail::write_file(states_path, states);
    detail::write_file(index_path, index);
}

Matrix load_state_dump(const std::string& path) {
    const std::string content = detail::read_file(path);
    size_t offset = 0;
    const std::string header = detail::header_line(content, offset, "state dump");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("state dump: bad header: ") + e.what(), 1);
    }
    if (!j.is_object() || !j.contains("rows") || !j.contains("dim") || !j.contains("dtype"))
        throw ParseError("state dump: header needs rows, dim, dtype", 1);
    if (j["dtype"].get<std::string>() != "f32le")
        throw ParseError("state dump: unsupported dtype", 1);
    const int rows = j["rows"].get<int>();
    const int dim = j["dim"].get<int>();
    if (rows < 0 || dim < 1) throw ParseError("state dump: invalid shape", 1);

    std::span<const char> bytes(content.data(), content.size());
    Matrix m(rows, dim);
    for (int r = 0; r < rows; ++r) {
        Vec row = detail::parse_f32le(bytes, static_cast<size_t>(dim), offset, "state dump");
        m.set_row(r, row);
    }
    if (offset != content.size()) throw ParseError("state dump: trailing bytes");
    return m;
}

}  // namespace lens
