#include "lens/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lens {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

void Matrix::set_row(int r, std::span<const double> v) {
    if (static_cast<int>(v.size()) != cols)
        throw ContractViolation("matrix row assignment: width mismatch");
    std::copy(v.begin(), v.end(), row(r));
}

SeededRng::SeededRng(uint64_t seed, uint64_t stream_id)
    : seed_(seed),
      stream_(stream_id),
      engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream_id ^ 0xD1B54A32D192ED03ULL))) {}

uint64_t SeededRng::next_u64() { return engine_(); }

double SeededRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

SeededRng SeededRng::substream(uint64_t stream_id) const {
    return SeededRng(seed_, splitmix64(stream_ ^ splitmix64(stream_id + 0x9E3779B97F4A7C15ULL)));
}

void ensure_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw DegenerateInput(std::string(what) + ": non-finite entry");
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ContractViolation("dot: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vec matvec(const Matrix& m, std::span<const double> x) {
    if (static_cast<int>(x.size()) != m.cols) throw ContractViolation("matvec: dimension mismatch");
    Vec out(m.rows, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c) s += row[c] * x[c];
        out[r] = s;
    }
    return out;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double na = norm(a);
    double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine_similarity: zero-norm input");
    double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

SubspaceBasis orthonormalize_pair(std::span<const double> e, std::span<const double> h,
                                  double eps) {
    if (e.size() != h.size()) throw ContractViolation("orthonormalize_pair: dimension mismatch");
    if (e.empty()) throw ContractViolation("orthonormalize_pair: empty input");
    ensure_finite(e, "orthonormalize_pair anchor");
    ensure_finite(h, "orthonormalize_pair context");

    double ne = norm(e);
    if (ne <= eps) throw DegenerateInput("orthonormalize_pair: anchor norm below eps");

    SubspaceBasis basis;
    basis.dim = static_cast<int>(e.size());
    basis.u1.resize(e.size());
    for (size_t i = 0; i < e.size(); ++i) basis.u1[i] = e[i] / ne;

    Vec res(h.begin(), h.end());
    double proj = dot(res, basis.u1);
    for (size_t i = 0; i < res.size(); ++i) res[i] -= proj * basis.u1[i];

    double nr = norm(res);
    if (nr <= eps) {
        basis.rank = 1;
        return basis;
    }
    basis.rank = 2;
    basis.u2.resize(res.size());
    for (size_t i = 0; i < res.size(); ++i) basis.u2[i] = res[i] / nr;
    return basis;
}

Vec project_onto_span(std::span<const double> x, const SubspaceBasis& basis) {
    if (static_cast<int>(x.size()) != basis.dim)
        throw ContractViolation("project_onto_span: dimension mismatch");
    if (basis.rank < 1 || basis.rank > 2)
        throw ContractViolation("project_onto_span: basis rank must be 1 or 2");

    double c1 = dot(x, basis.u1);
    Vec out(x.size(), 0.0);
    for (size_t i = 0; i < x.size(); ++i) out[i] = c1 * basis.u1[i];
    if (basis.rank == 2) {
        double c2 = dot(x, basis.u2);
        for (size_t i = 0; i < x.size(); ++i) out[i] += c2 * basis.u2[i];
    }
    return out;
}

Vec sample_isotropic(SeededRng& gen, int dim, double scale) {
    if (dim < 1) throw ContractViolation("sample_isotropic: dim must be >= 1");
    if (!(scale > 0.0)) throw ContractViolation("sample_isotropic: scale must be > 0");
    double s = scale / std::sqrt(static_cast<double>(dim));
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = s * gen.gaussian();
    ensure_finite(v, "sample_isotropic");
    return v;
}

Vec softmax_row(std::span<const double> logits) {
    if (logits.empty()) throw ContractViolation("softmax_row: empty input");
    ensure_finite(logits, "softmax_row");
    double m = *std::max_element(logits.begin(), logits.end());
    Vec out(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (double& x : out) x /= z;
    return out;
}

}  // namespace lens
