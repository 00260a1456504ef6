#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "lens/pipeline.hpp"
#include "test_util.hpp"

using namespace lens;

namespace {

RunConfig small_cfg() {
    RunConfig cfg = default_config();
    cfg.decoder.dim = 16;
    cfg.decoder.num_layers = 2;
    cfg.decoder.num_heads = 2;
    cfg.decoder.vocab_size = 64;
    cfg.decoder.ffn_mult = 2;
    cfg.decoder.weight_seed = 9;
    cfg.steer_layers = default_steer_layers(cfg.decoder.num_layers);
    cfg.max_new_tokens = 3;
    return cfg;
}

struct Fixture {
    RunConfig cfg = small_cfg();
    Decoder dec{cfg.decoder};
    std::vector<int> system_ids{1, 2, 3};
    std::vector<int> query_ids{4, 5};
    SteeringBank bank;
    PlantedScene scene;

    Fixture() {
        std::vector<CalibrationPair> pairs{{"a", {1, 2}, {3, 4}}, {"b", {5, 6}, {7, 8}}};
        bank = calibrate(dec, pairs, cfg.steer_layers);
        Vec anchor = anchor_from_rows(dec.embed_tokens(system_ids));
        Vec context = anchor_from_rows(dec.embed_tokens(query_ids));
        SeededRng rng(55);
        scene = generate_scene(rng, anchor, context, 8, 3, 0.25, 2.0);
    }

    ExperimentInput input() const {
        ExperimentInput in;
        in.scene = &scene;
        in.system_ids = system_ids;
        in.query_ids = query_ids;
        in.bank = &bank;
        return in;
    }
};

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("config: empty text yields the documented defaults") {
    RunConfig cfg = parse_config("");
    CHECK(cfg.seed == 2026);
    CHECK(cfg.decoder.dim == 128);
    CHECK(cfg.decoder.num_layers == 8);
    CHECK(cfg.decoder.num_heads == 4);
    CHECK(cfg.decoder.vocab_size == 512);
    CHECK(cfg.decoder.ffn_mult == 4);
    CHECK(cfg.decoder.weight_seed == 7);
    CHECK(cfg.q == 0.25);
    CHECK(cfg.gamma == 0.8);
    CHECK(cfg.eta == 0.06);
    CHECK(cfg.lambda == 0.15);
    CHECK(cfg.tau_vis == 0.4);
    CHECK(cfg.steer_layers == std::vector<int>{6, 7});
    CHECK(cfg.eps_degenerate == 1e-8);
    CHECK(cfg.max_new_tokens == 8);
    CHECK(cfg.ctp);
    CHECK(cfg.ofm);
    CHECK(cfg.mars);
    CHECK(cfg.reinject);
    CHECK_FALSE(cfg.ofm_embed_only);
    CHECK_FALSE(cfg.reinject_gate_on_steered);
    CHECK(serialize_config(cfg) == serialize_config(default_config()));
}

TEST_CASE("config: steering layers scale with depth") {
    CHECK(default_steer_layers(8) == std::vector<int>{6, 7});
    CHECK(default_steer_layers(1) == std::vector<int>{0});
    CHECK(default_steer_layers(2) == std::vector<int>{1});
    CHECK(default_steer_layers(32) == std::vector<int>{25, 26, 27, 28, 29, 30, 31});
}

TEST_CASE("config: comments, blanks and inline comments parse") {
    RunConfig cfg = parse_config(
        "# a comment line\n"
        "\n"
        "q = 0.5   # trailing comment\n"
        "  gamma=0.25\n"
        "steer_layers = 0,3,7\n"
        "mars = false\n");
    CHECK(cfg.q == 0.5);
    CHECK(cfg.gamma == 0.25);
    CHECK(cfg.steer_layers == std::vector<int>{0, 3, 7});
    CHECK_FALSE(cfg.mars);
    // Untouched keys keep defaults.
    CHECK(cfg.eta == 0.06);
}

TEST_CASE("config: violations and parse failures carry context") {
    try {
        (void)parse_config("q = 1.5\n");
        FAIL("expected a range violation");
    } catch (const ContractViolation& e) {
        CHECK(std::string(e.what()).find("q") != std::string::npos);
    }

    try {
        (void)parse_config("q = 0.5\nbogus = 1\n");
        FAIL("expected unknown-key rejection");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 2);
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }

    try {
        (void)parse_config("q = 0.5\n\ngamma = fast\n");
        FAIL("expected bad-number rejection");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 3);
    }

    CHECK_THROWS_AS((void)parse_config("no equals sign\n"), ParseError);
    CHECK_THROWS_AS((void)parse_config("= 3\n"), ParseError);
    CHECK_THROWS_AS((void)parse_config("gamma = 1.0\n"), ContractViolation);
    CHECK_THROWS_AS((void)parse_config("steer_layers = 3,3\n"), ContractViolation);
    CHECK_THROWS_AS((void)parse_config("steer_layers = 9\n"), ContractViolation);
    CHECK_THROWS_AS((void)parse_config("dim = 30\n"), ContractViolation);
    CHECK_THROWS_AS((void)parse_config("mars = maybe\n"), ParseError);
}

TEST_CASE("config: serialize/parse round-trips byte-exactly") {
    RunConfig defaults = default_config();
    std::string text = serialize_config(defaults);
    CHECK(serialize_config(parse_config(text)) == text);

    RunConfig custom = defaults;
    custom.seed = 99;
    custom.q = 0.1;
    custom.gamma = 0.05;
    custom.eta = 0.5;
    custom.lambda = 1.25;
    custom.tau_vis = 0.33;
    custom.steer_layers = {0, 3, 7};
    custom.max_new_tokens = 2;
    custom.mars = false;
    custom.reinject_gate_on_steered = true;
    std::string custom_text = serialize_config(custom);
    CHECK(serialize_config(parse_config(custom_text)) == custom_text);

    std::string path = testutil::scratch_path("roundtrip.cfg");
    save_config(custom, path);
    RunConfig loaded = load_config(path);
    CHECK(serialize_config(loaded) == custom_text);
}

TEST_CASE("experiment: identical inputs give identical outputs and traces") {
    Fixture fx;
    ExperimentResult a = run_experiment(fx.dec, fx.cfg, fx.input());
    ExperimentResult b = run_experiment(fx.dec, fx.cfg, fx.input());

    CHECK(a.generated == b.generated);
    CHECK(a.last_final_hidden == b.last_final_hidden);  // bitwise
    CHECK(trace_to_jsonl(a.trace) == trace_to_jsonl(b.trace));
    CHECK(a.role_resonance == b.role_resonance);
    CHECK(a.grounding_score == b.grounding_score);
}

TEST_CASE("experiment: trace shape and prune summary") {
    Fixture fx;
    ExperimentResult res = run_experiment(fx.dec, fx.cfg, fx.input());
    REQUIRE(static_cast<int>(res.generated.size()) == fx.cfg.max_new_tokens);
    CHECK(res.trace.records.size() ==
          static_cast<size_t>(fx.cfg.max_new_tokens) * fx.cfg.steer_layers.size());

    std::vector<std::string> lines = split_lines(trace_to_jsonl(res.trace));
    REQUIRE(lines.size() == 1 + res.trace.records.size());

    nlohmann::json head = nlohmann::json::parse(lines[0]);
    CHECK(head["step"] == 0);
    CHECK(head["layer"] == -1);
    REQUIRE(head.contains("prune"));
    CHECK(head["prune"]["total"] == 8);
    // ceil(0.25 * 8) = 2 survivors at the default keep fraction.
    CHECK(head["prune"]["retained"] == 2);
    CHECK(head["prune"]["tau_q"].is_number());

    size_t idx = 1;
    for (int step = 1; step <= fx.cfg.max_new_tokens; ++step)
        for (int layer : fx.cfg.steer_layers) {
            nlohmann::json rec = nlohmann::json::parse(lines[idx++]);
            CHECK(rec["step"] == step);
            CHECK(rec["layer"] == layer);
            CHECK(rec.contains("applied"));
            CHECK(rec["omega"].is_number());
            CHECK(rec["alpha"].is_number());
        }

    CHECK(res.role_resonance >= -1.0);
    CHECK(res.role_resonance <= 1.0);
    CHECK(res.grounding_score >= 0.0);
    CHECK(res.grounding_score <= 1.0);

    std::string path = testutil::scratch_path("trace.jsonl");
    save_trace(res.trace, path);
    CHECK(testutil::read_bytes(path) == trace_to_jsonl(res.trace));
}

TEST_CASE("experiment: text-only runs skip pruning and grounding") {
    Fixture fx;
    ExperimentInput in = fx.input();
    in.scene = nullptr;
    ExperimentResult res = run_experiment(fx.dec, fx.cfg, in);
    CHECK(static_cast<int>(res.generated.size()) == fx.cfg.max_new_tokens);
    CHECK(res.trace.prune.total == 0);
    CHECK(res.trace.prune.retained.empty());
    CHECK(res.grounding_score == 0.0);
}

TEST_CASE("experiment: disabled pruning keeps every visual token") {
    Fixture fx;
    RunConfig cfg = fx.cfg;
    cfg.ctp = false;
    ExperimentResult res = run_experiment(fx.dec, cfg, fx.input());
    CHECK(res.trace.prune.total == 8);
    CHECK(res.trace.prune.retained.size() == 8);
}

TEST_CASE("experiment: records appear for steer layers even with all stages off") {
    Fixture fx;
    RunConfig cfg = fx.cfg;
    cfg.ctp = cfg.ofm = cfg.mars = cfg.reinject = false;
    ExperimentResult res = run_experiment(fx.dec, cfg, fx.input());
    REQUIRE(res.trace.records.size() ==
            static_cast<size_t>(cfg.max_new_tokens) * cfg.steer_layers.size());
    for (const TraceRecord& r : res.trace.records) {
        CHECK_FALSE(r.applied);
        CHECK(r.alpha == 0.0);
    }
}

TEST_CASE("experiment: contracts") {
    Fixture fx;
    ExperimentInput in = fx.input();
    in.system_ids.clear();
    CHECK_THROWS_AS((void)run_experiment(fx.dec, fx.cfg, in), ContractViolation);

    ExperimentInput no_bank = fx.input();
    no_bank.bank = nullptr;
    CHECK_THROWS_AS((void)run_experiment(fx.dec, fx.cfg, no_bank), ContractViolation);

    RunConfig bad = fx.cfg;
    bad.q = 0.0;
    CHECK_THROWS_AS((void)run_experiment(fx.dec, bad, fx.input()), ContractViolation);
}

TEST_CASE("tasks: same (seed, index) builds the identical task") {
    RunConfig cfg = small_cfg();
    Decoder dec(cfg.decoder);
    TaskSpec spec;
    spec.k_tokens = 6;
    spec.signal_count = 2;
    spec.profile_len = 3;
    spec.query_len = 2;
    spec.calib_pairs = 2;
    spec.calib_query_len = 2;

    SyntheticTask a = make_synthetic_task(dec, 2026, 0, spec, cfg.steer_layers);
    SyntheticTask b = make_synthetic_task(dec, 2026, 0, spec, cfg.steer_layers);
    SyntheticTask c = make_synthetic_task(dec, 2026, 1, spec, cfg.steer_layers);

    CHECK(a.profile.token_ids == b.profile.token_ids);
    CHECK(a.query_ids == b.query_ids);
    CHECK(a.scene.tokens.data == b.scene.tokens.data);  // bitwise
    CHECK(a.scene.is_signal == b.scene.is_signal);
    REQUIRE(a.bank.vectors.size() == b.bank.vectors.size());
    for (size_t i = 0; i < a.bank.vectors.size(); ++i)
        CHECK(a.bank.vectors[i] == b.bank.vectors[i]);
    CHECK(a.anchor == b.anchor);

    CHECK(a.scene.tokens.data != c.scene.tokens.data);

    ExperimentInput in;
    in.scene = &a.scene;
    in.system_ids = a.profile.token_ids;
    in.query_ids = a.query_ids;
    in.bank = &a.bank;
    ExperimentResult res = run_experiment(dec, cfg, in);
    CHECK(res.role_resonance >= -1.0);
    CHECK(res.role_resonance <= 1.0);
    CHECK(res.grounding_score >= 0.0);
    CHECK(res.grounding_score <= 1.0);
}

TEST_CASE("selectors: baselines share the quota and stay deterministic") {
    SeededRng rng(7);
    Matrix tokens(10, 8);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 8; ++c) tokens.at(r, c) = rng.gaussian();
    Vec anchor(8), query(8);
    for (double& v : anchor) v = rng.gaussian();
    for (double& v : query) v = rng.gaussian();

    SeededRng sel_rng(11);
    std::vector<int> reso = select_baseline(Selector::Resonance, tokens, anchor, query, 0.3, sel_rng);
    CHECK(reso == select_top_q(resonance_scores(tokens, anchor), 0.3));

    SeededRng r1(13), r2(13);
    std::vector<int> rand1 = select_baseline(Selector::Random, tokens, anchor, query, 0.3, r1);
    std::vector<int> rand2 = select_baseline(Selector::Random, tokens, anchor, query, 0.3, r2);
    CHECK(rand1 == rand2);
    CHECK(rand1.size() == 3);
    CHECK(std::is_sorted(rand1.begin(), rand1.end()));
    for (int idx : rand1) {
        CHECK(idx >= 0);
        CHECK(idx < 10);
    }

    SeededRng r3(17);
    std::vector<int> qrel = select_baseline(Selector::QueryRelevance, tokens, anchor, query, 0.3, r3);
    CHECK(qrel == select_top_q(resonance_scores(tokens, query), 0.3));

    CHECK_THROWS_AS(
        (void)select_baseline(Selector::Resonance, tokens, anchor, query, 0.0, sel_rng),
        ContractViolation);
}

TEST_CASE("selectors: norm baseline keeps the loudest rows") {
    Matrix tokens(5, 4);
    tokens.at(0, 0) = 10.0;  // loudest
    tokens.at(1, 1) = 1.0;
    tokens.at(2, 2) = 5.0;  // second loudest
    tokens.at(3, 3) = 1.0;
    tokens.at(4, 0) = 0.5;
    Vec anchor{1.0, 0.0, 0.0, 0.0};
    Vec query{0.0, 1.0, 0.0, 0.0};
    SeededRng rng(19);
    std::vector<int> picked = select_baseline(Selector::Norm, tokens, anchor, query, 0.4, rng);
    CHECK(picked == std::vector<int>{0, 2});
}

TEST_CASE("selectors: role-specific gain on a hand-checkable case") {
    Matrix tokens(2, 2);
    tokens.at(0, 0) = 1.0;
    tokens.at(1, 1) = 1.0;
    Vec anchor{1.0, 0.0};
    Vec query{0.0, 1.0};

    std::vector<int> first{0};
    CHECK(role_specific_gain(tokens, first, anchor, query) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<int> both{0, 1};
    CHECK(role_specific_gain(tokens, both, anchor, query) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<int> none;
    CHECK_THROWS_AS((void)role_specific_gain(tokens, none, anchor, query), ContractViolation);
    std::vector<int> oob{5};
    CHECK_THROWS_AS((void)role_specific_gain(tokens, oob, anchor, query), ContractViolation);
}

TEST_CASE("sweep: rows come out sorted with one line per (value, scene)") {
    RunConfig base = small_cfg();
    base.max_new_tokens = 2;
    Decoder dec(base.decoder);
    std::vector<double> values{0.9, 0.3};

    std::string csv = sweep_csv(dec, base, "gamma", values, 1);
    std::vector<std::string> lines = split_lines(csv);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "value,role_resonance,grounding_score");

    double prev = -1.0;
    for (size_t i = 1; i < lines.size(); ++i) {
        double v = std::strtod(lines[i].c_str(), nullptr);
        CHECK(v > prev);
        prev = v;
        // Three comma-separated numeric fields.
        CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 2);
    }
    CHECK(prev == 0.9);

    CHECK_THROWS_AS((void)sweep_csv(dec, base, "zeta", values, 1), ContractViolation);
    std::vector<double> bad{1.0};  // out of range for gamma
    CHECK_THROWS_AS((void)sweep_csv(dec, base, "gamma", bad, 1), ContractViolation);
    CHECK_THROWS_AS((void)sweep_csv(dec, base, "gamma", {}, 1), ContractViolation);
}

TEST_CASE("state dump: reproducible files with a faithful index") {
    RunConfig cfg = small_cfg();
    cfg.max_new_tokens = 2;
    Decoder dec(cfg.decoder);
    std::vector<CharacterProfile> roles{{"role-a", {1, 2, 3}}, {"role-b", {4, 5}}};

    std::string states_a = testutil::scratch_path("states_a.bin");
    std::string index_a = testutil::scratch_path("index_a.jsonl");
    dump_hidden_states(dec, cfg, roles, 3, states_a, index_a);

    Matrix m = load_state_dump(states_a);
    CHECK(m.rows == 6);
    CHECK(m.cols == cfg.decoder.dim);

    std::vector<std::string> index_lines = split_lines(testutil::read_bytes(index_a));
    REQUIRE(index_lines.size() == 6);
    for (int p = 0; p < 3; ++p)
        for (int r = 0; r < 2; ++r) {
            nlohmann::json j = nlohmann::json::parse(index_lines[static_cast<size_t>(p * 2 + r)]);
            CHECK(j["row"] == p * 2 + r);
            CHECK(j["prompt_id"] == p);
            CHECK(j["role_id"] == r);
            CHECK(j["role_name"] == roles[static_cast<size_t>(r)].name);
        }

    std::string states_b = testutil::scratch_path("states_b.bin");
    std::string index_b = testutil::scratch_path("index_b.jsonl");
    dump_hidden_states(dec, cfg, roles, 3, states_b, index_b);
    CHECK(testutil::read_bytes(states_a) == testutil::read_bytes(states_b));
    CHECK(testutil::read_bytes(index_a) == testutil::read_bytes(index_b));

    CHECK_THROWS_AS(dump_hidden_states(dec, cfg, {}, 3, states_b, index_b), ContractViolation);
    CHECK_THROWS_AS(dump_hidden_states(dec, cfg, roles, 0, states_b, index_b), ContractViolation);
}

TEST_CASE("state dump: malformed files are rejected") {
    RunConfig cfg = small_cfg();
    cfg.max_new_tokens = 1;
    cfg.mars = false;  // skip calibration; this test only exercises the file format
    Decoder dec(cfg.decoder);
    std::vector<CharacterProfile> roles{{"solo", {1}}};
    std::string states = testutil::scratch_path("states_err.bin");
    std::string index = testutil::scratch_path("index_err.jsonl");
    dump_hidden_states(dec, cfg, roles, 1, states, index);

    std::string good = testutil::read_bytes(states);
    std::string trailing = testutil::write_scratch("states_trail.bin", good + "x");
    CHECK_THROWS_AS((void)load_state_dump(trailing), ParseError);

    std::string bad = good;
    size_t pos = bad.find("f32le");
    REQUIRE(pos != std::string::npos);
    bad.replace(pos, 5, "f64le");
    std::string dtype = testutil::write_scratch("states_dtype.bin", bad);
    CHECK_THROWS_AS((void)load_state_dump(dtype), ParseError);

    std::string truncated = testutil::write_scratch("states_trunc.bin", good.substr(0, good.size() - 3));
    CHECK_THROWS_AS((void)load_state_dump(truncated), ParseError);
}
