// Command-line front end: calibrate steering banks, run instrumented decodes,
// check the statistical guarantees, sweep intervention strengths, and dump
// hidden states for offline analysis.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lens/anchor.hpp"
#include "lens/decoder.hpp"
#include "lens/mars.hpp"
#include "lens/pipeline.hpp"
#include "lens/synth.hpp"
#include "lens/verify.hpp"

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::optional<uint64_t> env_seed() {
    const char* s = std::getenv("LENS_SEED");
    if (!s || !*s) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0' || errno == ERANGE)
        throw lens::ContractViolation("LENS_SEED must be an unsigned integer");
    return static_cast<uint64_t>(v);
}

lens::RunConfig load_or_default(const std::string& config_path) {
    lens::RunConfig cfg =
        config_path.empty() ? lens::default_config() : lens::load_config(config_path);
    if (auto seed = env_seed()) cfg.seed = *seed;
    return cfg;
}

int cmd_calibrate(const std::string& config_path, const std::string& pairs_path,
                  const std::string& out_path) {
    lens::RunConfig cfg = load_or_default(config_path);
    lens::validate_config(cfg);
    lens::Decoder dec(cfg.decoder);
    std::vector<lens::CalibrationPair> pairs = lens::load_calibration_pairs(pairs_path);
    lens::SteeringBank bank = lens::calibrate(dec, std::move(pairs), cfg.steer_layers);
    lens::save_bank(bank, out_path);
    std::cout << "bank: " << bank.layers.size() << " layers, " << bank.num_pairs
              << " pairs, dim " << bank.dim << " -> " << out_path << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& scene_path,
            const std::string& profile_path, const std::string& character,
            const std::string& bank_path, const std::vector<int>& query_ids,
            const std::string& trace_path) {
    lens::RunConfig cfg = load_or_default(config_path);
    lens::validate_config(cfg);
    lens::Decoder dec(cfg.decoder);

    std::vector<lens::CharacterProfile> profiles = lens::load_profiles(profile_path);
    if (profiles.empty()) throw lens::ContractViolation("run: profile file has no characters");
    const lens::CharacterProfile* chosen = &profiles.front();
    if (!character.empty()) {
        chosen = nullptr;
        for (const auto& p : profiles)
            if (p.name == character) chosen = &p;
        if (!chosen)
            throw lens::ContractViolation("run: character '" + character + "' not in profile file");
    }

    std::optional<lens::PlantedScene> scene;
    if (!scene_path.empty()) scene = lens::load_scene(scene_path);

    std::optional<lens::SteeringBank> bank;
    if (!bank_path.empty()) bank = lens::load_bank(bank_path);
    if (cfg.mars && !bank)
        throw lens::ContractViolation("run: config has mars enabled; pass --bank");

    lens::ExperimentInput input;
    input.scene = scene ? &*scene : nullptr;
    input.system_ids = chosen->token_ids;
    input.query_ids = query_ids;
    input.bank = bank ? &*bank : nullptr;

    lens::ExperimentResult res = lens::run_experiment(dec, cfg, input);

    std::cout << "generated:";
    for (int id : res.generated) std::cout << " " << id;
    std::cout << "\n";
    std::cout << "role_resonance: " << fmt17(res.role_resonance) << "\n";
    std::cout << "grounding_score: " << fmt17(res.grounding_score) << "\n";
    if (!trace_path.empty()) {
        lens::save_trace(res.trace, trace_path);
        std::cout << "trace -> " << trace_path << "\n";
    }
    return 0;
}

int cmd_verify(long trials, long mars_trials, std::vector<int> dims, double delta,
               const std::string& hist_path) {
    uint64_t seed = env_seed().value_or(2026);
    lens::SeededRng root(seed);
    if (dims.empty()) dims = {4, 64, 4096};

    bool all_passed = true;
    auto emit = [&all_passed](const std::vector<lens::VerificationReport>& reports) {
        for (const auto& r : reports) {
            std::cout << lens::report_to_json(r) << "\n";
            all_passed = all_passed && r.passed;
        }
    };

    emit(lens::verify_prop1(root.substream(1), trials, 128));

    std::vector<double> amps;
    for (size_t i = 0; i < dims.size(); ++i) {
        const bool last = i + 1 == dims.size();
        std::vector<double>* sink = (!hist_path.empty() && last) ? &amps : nullptr;
        emit(lens::verify_prop2(root.substream(2 + static_cast<uint64_t>(i)), trials, dims[i],
                                delta, sink));
    }

    emit(lens::verify_mars_optimality(root.substream(99), mars_trials));

    if (!hist_path.empty()) {
        std::map<long, long> bins;  // bin b covers [0.1*b, 0.1*(b+1))
        for (double a : amps) bins[static_cast<long>(std::floor(a / 0.1))]++;
        std::string csv = "log10_amplification,count\n";
        for (const auto& [b, c] : bins) {
            char edge[32];
            std::snprintf(edge, sizeof(edge), "%.1f", 0.1 * static_cast<double>(b));
            csv += edge;
            csv += ",";
            csv += std::to_string(c);
            csv += "\n";
        }
        std::ofstream f(hist_path, std::ios::binary);
        if (!f) throw lens::ParseError("cannot open for writing: " + hist_path);
        f << csv;
        std::cout << "histogram -> " << hist_path << "\n";
    }
    return all_passed ? 0 : 1;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::vector<double>& values, int scenes, const std::string& out_path) {
    lens::RunConfig cfg = load_or_default(config_path);
    lens::validate_config(cfg);
    lens::Decoder dec(cfg.decoder);
    std::string csv = lens::sweep_csv(dec, cfg, param, values, scenes);
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw lens::ParseError("cannot open for writing: " + out_path);
    f << csv;
    std::cout << "sweep (" << param << ", " << values.size() << " values x " << scenes
              << " scenes) -> " << out_path << "\n";
    return 0;
}

int cmd_dump(const std::string& config_path, const std::string& profiles_path, int num_prompts,
             const std::string& out_path, const std::string& index_path) {
    lens::RunConfig cfg = load_or_default(config_path);
    lens::validate_config(cfg);
    lens::Decoder dec(cfg.decoder);
    std::vector<lens::CharacterProfile> roles = lens::load_profiles(profiles_path);
    lens::dump_hidden_states(dec, cfg, roles, num_prompts, out_path, index_path);
    std::cout << "states (" << num_prompts << " prompts x " << roles.size() << " roles) -> "
              << out_path << " / " << index_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"character-anchored visual-token intervention toolkit"};
    app.require_subcommand(1);

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "build a steering bank from contrast pairs");
    std::string cal_config, cal_pairs, cal_out;
    calibrate->add_option("--config", cal_config, "run config (key=value lines)");
    calibrate->add_option("--pairs", cal_pairs, "calibration pairs (JSON lines)")->required();
    calibrate->add_option("--out", cal_out, "output bank path")->required();

    // run
    auto* run = app.add_subcommand("run", "instrumented greedy decode");
    std::string run_config, run_scene, run_profile, run_character, run_bank, run_trace;
    std::vector<int> run_query;
    run->add_option("--config", run_config, "run config (key=value lines)");
    run->add_option("--scene", run_scene, "visual scene file (optional)");
    run->add_option("--profile", run_profile, "character profiles (JSON lines)")->required();
    run->add_option("--character", run_character, "character name (default: first)");
    run->add_option("--bank", run_bank, "steering bank (required when mars is on)");
    run->add_option("--query", run_query, "query token ids")->delimiter(',');
    run->add_option("--trace", run_trace, "write the decode trace here (JSON lines)");

    // verify
    auto* verify = app.add_subcommand("verify", "check the statistical guarantees");
    long ver_trials = 10000;
    long ver_mars_trials = 1000;
    std::vector<int> ver_dims;
    double ver_delta = 0.25;
    std::string ver_hist;
    verify->add_option("--trials", ver_trials, "Monte Carlo trials per check (default 10000)");
    verify->add_option("--mars-trials", ver_mars_trials,
                       "random (lambda, mu, omega) triples for the schedule check (default 1000)");
    verify->add_option("--dim", ver_dims, "projection-check dimensions (default 4,64,4096)")
        ->delimiter(',');
    verify->add_option("--delta", ver_delta, "out-of-span role fraction (default 0.25)");
    verify->add_option("--hist-out", ver_hist,
                       "write a log10-amplification histogram CSV for the last dimension");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "parameter sweep over synthetic scenes");
    std::string sw_config, sw_param, sw_out;
    std::vector<double> sw_values;
    int sw_scenes = 20;
    sweep->add_option("--config", sw_config, "run config (key=value lines)");
    sweep->add_option("--param", sw_param, "one of q, gamma, eta, lambda, tau_vis")->required();
    sweep->add_option("--values", sw_values, "comma-separated values")->required()->delimiter(',');
    sweep->add_option("--scenes", sw_scenes, "synthetic scenes per value (default 20)");
    sweep->add_option("--out", sw_out, "output CSV path")->required();

    // dump-states
    auto* dump = app.add_subcommand("dump-states", "dump per-(prompt, role) hidden states");
    std::string dp_config, dp_profiles, dp_out, dp_index;
    int dp_prompts = 4;
    dump->add_option("--config", dp_config, "run config (key=value lines)");
    dump->add_option("--profiles", dp_profiles, "character profiles (JSON lines)")->required();
    dump->add_option("--num-prompts", dp_prompts, "prompts shared across roles (default 4)");
    dump->add_option("--out", dp_out, "hidden-state matrix path")->required();
    dump->add_option("--index", dp_index, "row index path (JSON lines)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (calibrate->parsed()) return cmd_calibrate(cal_config, cal_pairs, cal_out);
        if (run->parsed())
            return cmd_run(run_config, run_scene, run_profile, run_character, run_bank, run_query,
                           run_trace);
        if (verify->parsed())
            return cmd_verify(ver_trials, ver_mars_trials, ver_dims, ver_delta, ver_hist);
        if (sweep->parsed()) return cmd_sweep(sw_config, sw_param, sw_values, sw_scenes, sw_out);
        if (dump->parsed()) return cmd_dump(dp_config, dp_profiles, dp_prompts, dp_out, dp_index);
    } catch (const lens::ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lens::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lens::DegenerateInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
