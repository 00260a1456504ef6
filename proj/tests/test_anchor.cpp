#include <doctest.h>

#include <algorithm>

#include "lens/anchor.hpp"
#include "lens/decoder.hpp"
#include "test_util.hpp"

using namespace lens;

TEST_CASE("anchor: single row is returned as-is") {
    Matrix rows(1, 3);
    rows.set_row(0, Vec{0.5, -1.0, 2.0});
    Vec a = anchor_from_rows(rows);
    CHECK(a == Vec{0.5, -1.0, 2.0});
}

TEST_CASE("anchor: mean matches a hand computation") {
    SeededRng g(4);
    Matrix rows(50, 16);
    for (int r = 0; r < 50; ++r) rows.set_row(r, sample_isotropic(g, 16));
    Vec a = anchor_from_rows(rows);
    for (int c = 0; c < 16; ++c) {
        double s = 0.0;
        for (int r = 0; r < 50; ++r) s += rows.at(r, c);
        CHECK(a[c] == doctest::Approx(s / 50.0).epsilon(1e-12));
    }
}

TEST_CASE("anchor: order of profile tokens does not matter") {
    DecoderConfig cfg;
    cfg.dim = 32;
    cfg.num_layers = 1;
    cfg.num_heads = 1;
    cfg.vocab_size = 64;
    Decoder dec(cfg);

    CharacterProfile p{"hero", {3, 9, 27, 45, 60}};
    Vec a = build_anchor(dec, p);
    CharacterProfile shuffled{"hero", {60, 27, 3, 45, 9}};
    Vec b = build_anchor(dec, shuffled);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("anchor: degenerate profiles are rejected") {
    Matrix empty(0, 4);
    CHECK_THROWS_AS((void)anchor_from_rows(empty), ContractViolation);

    Matrix cancel(2, 2);
    cancel.set_row(0, Vec{1.0, -2.0});
    cancel.set_row(1, Vec{-1.0, 2.0});
    CHECK_THROWS_AS((void)anchor_from_rows(cancel), DegenerateInput);

    DecoderConfig cfg;
    cfg.dim = 8;
    cfg.num_layers = 1;
    cfg.num_heads = 1;
    cfg.vocab_size = 8;
    Decoder dec(cfg);
    CharacterProfile none{"empty", {}};
    CHECK_THROWS_AS((void)build_anchor(dec, none), ContractViolation);
}

TEST_CASE("profiles: well-formed file round-trips") {
    std::string path = testutil::write_scratch(
        "profiles_ok.jsonl",
        "{\"name\": \"scout\", \"token_ids\": [1, 2, 3]}\n"
        "\n"
        "{\"name\": \"sage\", \"token_ids\": [7]}\n");
    auto profiles = load_profiles(path);
    REQUIRE(profiles.size() == 2);
    CHECK(profiles[0].name == "scout");
    CHECK(profiles[0].token_ids == std::vector<int>{1, 2, 3});
    CHECK(profiles[1].name == "sage");
    CHECK(profiles[1].token_ids == std::vector<int>{7});
}

TEST_CASE("profiles: malformed lines carry their line number") {
    std::string path = testutil::write_scratch(
        "profiles_bad.jsonl",
        "{\"name\": \"ok\", \"token_ids\": []}\n"
        "{not json}\n");
    try {
        (void)load_profiles(path);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line_number == 2);
    }

    std::string missing = testutil::write_scratch(
        "profiles_missing.jsonl", "{\"token_ids\": [1]}\n");
    CHECK_THROWS_AS((void)load_profiles(missing), ParseError);

    std::string nonint = testutil::write_scratch(
        "profiles_nonint.jsonl", "{\"name\": \"x\", \"token_ids\": [1.5]}\n");
    CHECK_THROWS_AS((void)load_profiles(nonint), ParseError);

    CHECK_THROWS_AS((void)load_profiles(testutil::scratch_path("no_such_file.jsonl")), ParseError);
}
