#include "lens/verify.hpp"

#include <cmath>
#include <numbers>
#include <json.hpp>

#include "lens/mars.hpp"

namespace lens {

namespace {

bool evaluate(const std::string& relation, double statistic, double bound, double tolerance) {
    if (relation == "<=") return statistic <= bound + tolerance;
    if (relation == ">=") return statistic >= bound - tolerance;
    if (relation == "within-rel") return std::abs(statistic - bound) <= tolerance * std::abs(bound);
    throw ContractViolation("verification report: unknown relation");
}

VerificationReport make_report(std::string name, long trials, double statistic,
                               std::string relation, double bound, double tolerance) {
    VerificationReport r;
    r.check_name = std::move(name);
    r.trials = trials;
    r.statistic = statistic;
    r.relation = std::move(relation);
    r.bound = bound;
    r.tolerance = tolerance;
    r.passed = evaluate(r.relation, statistic, bound, tolerance);
    return r;
}

Vec unit(Vec v) {
    double n = norm(v);
    if (n == 0.0) throw DegenerateInput("verify: zero-norm sample");
    for (double& x : v) x /= n;
    return v;
}

}  // namespace

std::string report_to_json(const VerificationReport& r) {
    nlohmann::ordered_json j;
    j["check"] = r.check_name;
    j["trials"] = r.trials;
    j["statistic"] = r.statistic;
    j["relation"] = r.relation;
    j["bound"] = r.bound;
    j["tolerance"] = r.tolerance;
    j["passed"] = r.passed;
    for (const auto& [k, v] : r.details) j[k] = v;
    return j.dump();
}

std::vector<VerificationReport> verify_prop1(SeededRng gen, long trials, int d) {
    if (trials < 1) throw ContractViolation("verify: trials must be >= 1");
    if (d < 2) throw ContractViolation("verify: dim must be >= 2");

    double max_dev = 0.0;
    for (long t = 0; t < trials; ++t) {
        SeededRng rng = gen.substream(static_cast<uint64_t>(t));
        Vec role = sample_isotropic(rng, d);
        Vec noise = sample_isotropic(rng, d);
        // Exact orthogonal split, as in the decomposition the claim speaks about.
        Vec rhat = unit(role);
        double c = dot(noise, rhat);
        for (int i = 0; i < d; ++i) noise[i] -= c * rhat[i];

        double alpha = 1.0 - rng.uniform();  // (0, 1]
        double before = dot(role, role) / dot(noise, noise);

        Vec sr(d), sn(d);
        for (int i = 0; i < d; ++i) {
            sr[i] = alpha * role[i];
            sn[i] = alpha * noise[i];
        }
        double after = dot(sr, sr) / dot(sn, sn);
        max_dev = std::max(max_dev, std::abs(after / before - 1.0));
    }

    VerificationReport r = make_report("snr-scale-invariance", trials, max_dev, "<=", 1e-9, 0.0);
    r.details.emplace_back("dim", static_cast<double>(d));
    return {r};
}

std::vector<VerificationReport> verify_prop2(SeededRng gen, long trials, int d, double delta,
                                             std::vector<double>* log10_amps) {
    if (trials < 1) throw ContractViolation("verify: trials must be >= 1");
    if (d < 2) throw ContractViolation("verify: dim must be >= 2");
    if (delta < 0.0 || delta > 1.0) throw ContractViolation("verify: delta must be in [0, 1]");

    double sum_pn = 0.0, sum_n = 0.0;
    double sum_pr = 0.0, sum_r = 0.0, sum_pnu = 0.0, sum_nu = 0.0;

    for (long t = 0; t < trials; ++t) {
        SeededRng rng = gen.substream(static_cast<uint64_t>(t));

        SubspaceBasis basis;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Vec e = sample_isotropic(rng, d);
            Vec h = sample_isotropic(rng, d);
            basis = orthonormalize_pair(e, h);
            if (basis.rank == 2) break;
        }
        if (basis.rank != 2) throw DegenerateInput("verify: degenerate random span");

        Vec n = sample_isotropic(rng, d);
        Vec pn = project_onto_span(n, basis);
        sum_pn += dot(pn, pn);
        sum_n += dot(n, n);

        // Planted unit-norm role vector; at d == 2 the span is the whole space
        // and the out-of-span share is necessarily zero.
        double theta = rng.uniform() * 2.0 * std::numbers::pi;
        Vec role(d);
        for (int i = 0; i < d; ++i)
            role[i] = std::cos(theta) * basis.u1[i] + std::sin(theta) * basis.u2[i];
        if (d >= 3 && delta > 0.0) {
            Vec w;
            for (int attempt = 0; attempt < 16; ++attempt) {
                w = sample_isotropic(rng, d);
                Vec pw = project_onto_span(w, basis);
                for (int i = 0; i < d; ++i) w[i] -= pw[i];
                double nw = norm(w);
                if (nw > 1e-12) {
                    for (double& x : w) x /= nw;
                    break;
                }
                if (attempt == 15) throw DegenerateInput("verify: no orthogonal direction");
            }
            double in_span = std::sqrt(1.0 - delta), out_span = std::sqrt(delta);
            for (int i = 0; i < d; ++i) role[i] = in_span * role[i] + out_span * w[i];
        }

        Vec nu = unit(n);  // unit noise gives per-token SNR exactly 1
        Vec pr = project_onto_span(role, basis);
        Vec pnu = project_onto_span(nu, basis);
        double e_pr = dot(pr, pr), e_pnu = dot(pnu, pnu);
        sum_pr += e_pr;
        sum_r += dot(role, role);
        sum_pnu += e_pnu;
        sum_nu += 1.0;
        if (log10_amps) log10_amps->push_back(std::log10(e_pr / e_pnu));
    }

    const double retention = sum_pn / sum_n;
    // Expected-SNR form: signal energy over mean projected noise energy. The
    // per-token ratio has no finite mean, so the bound is stated for this
    // statistic.
    const double amplification = (sum_pr / sum_pnu) / (sum_r / sum_nu);
    const double mean_gain = (static_cast<double>(d) / 2.0) * (1.0 - delta);

    VerificationReport noise_law = make_report("rank2-noise-retention(d=" + std::to_string(d) + ")",
                                               trials, retention, "within-rel",
                                               2.0 / static_cast<double>(d), 0.05);
    noise_law.details.emplace_back("dim", static_cast<double>(d));

    VerificationReport amp = make_report("rank2-snr-amplification(d=" + std::to_string(d) + ")",
                                         trials, amplification, ">=", 0.8 * mean_gain, 0.0);
    amp.details.emplace_back("dim", static_cast<double>(d));
    amp.details.emplace_back("delta", delta);
    amp.details.emplace_back("expected_mean", mean_gain);

    return {noise_law, amp};
}

std::vector<VerificationReport> verify_mars_optimality(SeededRng gen, long trials) {
    if (trials < 1) throw ContractViolation("verify: trials must be >= 1");

    double max_gap = 0.0;
    for (long t = 0; t < trials; ++t) {
        SeededRng rng = gen.substream(static_cast<uint64_t>(t));
        double lambda = rng.uniform();
        double mu = 5.0 * (1.0 - rng.uniform());  // (0, 5]
        double omega = rng.uniform();
        double closed = lambda == 0.0 ? 0.0 : steering_intensity(omega, lambda, lambda / mu);
        double oracle = risk_optimum_oracle(lambda, mu, omega);
        max_gap = std::max(max_gap, std::abs(closed - oracle));
    }

    return {make_report("steering-schedule-optimality", trials, max_gap, "<=", 1e-4, 0.0)};
}

}  // namespace lens
