#include "lens/mars.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "io_util.hpp"

namespace lens {

const Vec* SteeringBank::find(int layer) const {
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i] == layer) return &vectors[i];
    return nullptr;
}

namespace {

// Post-attention residuals of the last prompt token, one per layer, from a
// plain uninstrumented pass.
std::vector<Vec> capture_last_token(const Decoder& dec, std::span<const int> ids) {
    if (ids.empty()) throw ContractViolation("calibrate: empty prompt");
    SequenceState st = make_state(dec, nullptr, {}, ids);
    prefill(dec, st);
    StepResult res = decode_step(dec, st, InterventionHooks{});
    return std::move(res.post_attention);
}

}  // namespace

SteeringBank calibrate(const Decoder& dec, std::vector<CalibrationPair> pairs,
                       std::vector<int> layer_set) {
    if (pairs.empty()) throw ContractViolation("calibrate: need at least one pair");
    std::sort(layer_set.begin(), layer_set.end());
    layer_set.erase(std::unique(layer_set.begin(), layer_set.end()), layer_set.end());
    for (int l : layer_set)
        if (l < 0 || l >= dec.config().num_layers)
            throw ContractViolation("calibrate: layer out of range");

    // Fixed accumulation order makes the bank independent of input ordering.
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const CalibrationPair& a, const CalibrationPair& b) {
                         return a.pair_id < b.pair_id;
                     });

    SteeringBank bank;
    bank.layers = layer_set;
    bank.dim = dec.config().dim;
    bank.num_pairs = static_cast<int>(pairs.size());
    bank.vectors.assign(layer_set.size(), Vec(bank.dim, 0.0));

    for (const auto& p : pairs) {
        std::vector<Vec> role = capture_last_token(dec, p.role);
        std::vector<Vec> neutral = capture_last_token(dec, p.neutral);
        for (size_t i = 0; i < layer_set.size(); ++i) {
            const Vec& r = role[layer_set[i]];
            const Vec& n = neutral[layer_set[i]];
            for (int c = 0; c < bank.dim; ++c) bank.vectors[i][c] += r[c] - n[c];
        }
    }
    const double inv = 1.0 / static_cast<double>(pairs.size());
    for (auto& v : bank.vectors) {
        for (double& x : v) x *= inv;
        ensure_finite(v, "steering vector");
    }
    return bank;
}

double visual_reliance(const AttentionCapture& capture, std::span<const int> visual_index_set) {
    if (capture.head_rows.empty()) throw ContractViolation("visual_reliance: no head rows");
    if (visual_index_set.empty()) return 0.0;

    double total = 0.0;
    for (const Vec& row : capture.head_rows) {
        double sum = 0.0;
        for (double p : row) sum += p;
        if (std::abs(sum - 1.0) > 1e-4)
            throw CaptureIntegrityError("visual_reliance: attention row does not sum to 1");
        for (int idx : visual_index_set) {
            if (idx < 0 || idx >= static_cast<int>(row.size()))
                throw ContractViolation("visual_reliance: visual index out of range");
            total += row[idx];
        }
    }
    double omega = total / static_cast<double>(capture.head_rows.size());
    return std::clamp(omega, 0.0, 1.0);
}

double steering_intensity(double omega, double lambda, double tau_vis) {
    if (omega < 0.0 || omega > 1.0)
        throw ContractViolation("steering_intensity: omega must be in [0, 1]");
    if (lambda < 0.0) throw ContractViolation("steering_intensity: lambda must be >= 0");
    if (!(tau_vis > 0.0)) throw ContractViolation("steering_intensity: tau_vis must be > 0");
    return lambda * std::max(0.0, 1.0 - omega / tau_vis);
}

Vec apply_steering(std::span<const double> h, std::span<const double> v, double alpha) {
    if (h.size() != v.size()) throw ContractViolation("apply_steering: dimension mismatch");
    Vec out(h.begin(), h.end());
    if (alpha == 0.0) return out;
    for (size_t i = 0; i < out.size(); ++i) out[i] += alpha * v[i];
    ensure_finite(out, "steered state");
    return out;
}

double risk_optimum_oracle(double lambda, double mu, double omega) {
    if (lambda < 0.0) throw ContractViolation("risk_optimum_oracle: lambda must be >= 0");
    if (!(mu > 0.0)) throw ContractViolation("risk_optimum_oracle: mu must be > 0");
    if (omega < 0.0 || omega > 1.0)
        throw ContractViolation("risk_optimum_oracle: omega must be in [0, 1]");

    auto risk = [&](double a) { return 0.5 * (lambda - a) * (lambda - a) + mu * a * omega; };

    const double hi = 2.0 * lambda + 1.0;
    const double step = 1e-5;
    const long n = static_cast<long>(std::ceil(hi / step));
    double best_a = 0.0, best_j = risk(0.0);
    for (long i = 1; i <= n; ++i) {
        double a = std::min(hi, static_cast<double>(i) * step);
        double j = risk(a);
        if (j < best_j) {
            best_j = j;
            best_a = a;
        }
    }
    // Fine pass around the coarse winner.
    double lo = std::max(0.0, best_a - step);
    double up = std::min(hi, best_a + step);
    const int refine = 4000;
    for (int i = 0; i <= refine; ++i) {
        double a = lo + (up - lo) * static_cast<double>(i) / refine;
        double j = risk(a);
        if (j < best_j) {
            best_j = j;
            best_a = a;
        }
    }
    return best_a;
}

void save_bank(const SteeringBank& bank, const std::string& path) {
    nlohmann::ordered_json header;
    header["layers"] = bank.layers;
    header["dim"] = bank.dim;
    header["pairs"] = bank.num_pairs;
    header["dtype"] = "f32le";
    std::string out = header.dump();
    out.push_back('\n');
    for (const Vec& v : bank.vectors) detail::append_f32le(out, v);
    detail::write_file(path, out);
}

SteeringBank load_bank(const std::string& path) {
    std::string content = detail::read_file(path);
    size_t offset = 0;
    nlohmann::json header = nlohmann::json::parse(detail::header_line(content, offset, "bank"),
                                                  nullptr, false);
    if (header.is_discarded() || !header.is_object())
        throw ParseError("bank: invalid header JSON", 1);
    for (const char* key : {"layers", "dim", "pairs", "dtype"})
        if (!header.contains(key)) throw ParseError(std::string("bank: header missing ") + key, 1);
    if (header["dtype"] != "f32le") throw ParseError("bank: unsupported dtype", 1);

    SteeringBank bank;
    bank.layers = header["layers"].get<std::vector<int>>();
    bank.dim = header["dim"].get<int>();
    bank.num_pairs = header["pairs"].get<int>();
    if (bank.dim < 1) throw ParseError("bank: dim must be >= 1", 1);
    if (!std::is_sorted(bank.layers.begin(), bank.layers.end()))
        throw ParseError("bank: layers must be ascending", 1);

    for (size_t i = 0; i < bank.layers.size(); ++i)
        bank.vectors.push_back(detail::parse_f32le(content, bank.dim, offset, "bank"));
    if (offset != content.size()) throw ParseError("bank: trailing bytes after payload");
    return bank;
}

std::vector<CalibrationPair> load_calibration_pairs(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open: " + path);
    std::vector<CalibrationPair> out;
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("pairs: invalid JSON", line_no);
        if (!j.is_object() || !j.contains("pair_id") || !j.contains("role") ||
            !j.contains("neutral"))
            throw ParseError("pairs: expected {\"pair_id\", \"role\", \"neutral\"}", line_no);
        CalibrationPair p;
        if (!j["pair_id"].is_string()) throw ParseError("pairs: pair_id must be a string", line_no);
        p.pair_id = j["pair_id"].get<std::string>();
        for (const char* key : {"role", "neutral"}) {
            if (!j[key].is_array()) throw ParseError("pairs: prompts must be arrays", line_no);
            auto& dst = std::string(key) == "role" ? p.role : p.neutral;
            for (const auto& t : j[key]) {
                if (!t.is_number_integer())
                    throw ParseError("pairs: token ids must be integers", line_no);
                dst.push_back(t.get<int>());
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace lens
