#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "lens/verify.hpp"

using namespace lens;

TEST_CASE("scale invariance check: passes with a tiny statistic") {
    auto reports = verify_prop1(SeededRng(1), 2000, 16);
    REQUIRE(reports.size() == 1);
    const auto& r = reports[0];
    CHECK(r.relation == "<=");
    CHECK(r.trials == 2000);
    CHECK(r.statistic <= 1e-9);
    CHECK(r.passed);
}

TEST_CASE("projection checks: retention near 2/d and strong amplification") {
    std::vector<double> amps;
    auto reports = verify_prop2(SeededRng(2), 3000, 64, 0.25, &amps);
    REQUIRE(reports.size() == 2);

    const auto& retention = reports[0];
    CHECK(retention.relation == "within-rel");
    CHECK(retention.bound == doctest::Approx(2.0 / 64.0).epsilon(1e-12));
    CHECK(std::abs(retention.statistic / retention.bound - 1.0) <= 0.05);
    CHECK(retention.passed);

    const auto& amp = reports[1];
    CHECK(amp.relation == ">=");
    // 0.8 * (d/2) * (1 - delta) = 0.8 * 32 * 0.75
    CHECK(amp.bound == doctest::Approx(19.2).epsilon(1e-12));
    CHECK(amp.statistic >= amp.bound);
    CHECK(amp.passed);

    CHECK(amps.size() == 3000);
    for (double a : amps) CHECK(std::isfinite(a));
}

TEST_CASE("projection checks: the d == 2 edge keeps everything in the plane") {
    auto reports = verify_prop2(SeededRng(3), 1500, 2, 0.0);
    REQUIRE(reports.size() == 2);
    // The projector is the identity at d == 2: retention 1, ratio bound 2/d = 1.
    CHECK(reports[0].statistic == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(reports[0].passed);
    CHECK(reports[1].passed);
}

TEST_CASE("schedule optimality check: closed form tracks the grid search") {
    auto reports = verify_mars_optimality(SeededRng(4), 200);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].relation == "<=");
    CHECK(reports[0].bound == 1e-4);
    CHECK(reports[0].statistic <= 1e-4);
    CHECK(reports[0].passed);
}

TEST_CASE("reports serialize to self-contained JSON lines") {
    std::vector<double> amps;
    auto reports = verify_prop2(SeededRng(5), 200, 8, 0.25, &amps);
    for (const auto& r : reports) {
        nlohmann::json j = nlohmann::json::parse(report_to_json(r));
        CHECK(j["check"] == r.check_name);
        CHECK(j["trials"].get<long>() == r.trials);
        CHECK(j["statistic"].get<double>() == r.statistic);
        CHECK(j["relation"] == r.relation);
        CHECK(j["bound"].get<double>() == r.bound);
        CHECK(j["tolerance"].get<double>() == r.tolerance);
        CHECK(j["passed"].get<bool>() == r.passed);
        for (const auto& [key, value] : r.details) {
            REQUIRE(j.contains(key));
            CHECK(j[key].get<double>() == value);
        }
    }
}

TEST_CASE("verification contracts") {
    CHECK_THROWS_AS((void)verify_prop1(SeededRng(6), 0, 16), ContractViolation);
    CHECK_THROWS_AS((void)verify_prop1(SeededRng(6), 100, 1), ContractViolation);
    CHECK_THROWS_AS((void)verify_prop2(SeededRng(6), 100, 1, 0.25), ContractViolation);
    CHECK_THROWS_AS((void)verify_prop2(SeededRng(6), 100, 16, 1.5), ContractViolation);
    CHECK_THROWS_AS((void)verify_mars_optimality(SeededRng(6), 0), ContractViolation);
}

TEST_CASE("verification runs are reproducible") {
    auto a = verify_prop2(SeededRng(7), 500, 32, 0.25);
    auto b = verify_prop2(SeededRng(7), 500, 32, 0.25);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].statistic == b[i].statistic);  // bitwise
        CHECK(a[i].passed == b[i].passed);
    }
}
