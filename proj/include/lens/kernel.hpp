#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lens/errors.hpp"

namespace lens {

// All internal arithmetic is 64-bit. 32-bit floats appear only at file-dump
// boundaries (see the io helpers of the individual modules).
using Vec = std::vector<double>;

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    Vec row_vec(int r) const { return Vec(row(r), row(r) + cols); }
    void set_row(int r, std::span<const double> v);
};

// Orthonormal basis of span(e, h). rank is 1 when h is (numerically) parallel
// to e, otherwise 2. u2 is empty in the rank-1 case.
struct SubspaceBasis {
    int dim = 0;
    int rank = 0;
    Vec u1;
    Vec u2;
};

// Deterministic stream of uniforms / Gaussians. Identical (seed, stream_id)
// yields the identical sequence on every platform: mt19937_64 is fully
// specified by the standard, uniforms are built from the top 53 bits, and
// Gaussians use an explicit Box-Muller transform (libm calls agree far below
// the 1e-9 contract).
class SeededRng {
  public:
    explicit SeededRng(uint64_t seed, uint64_t stream_id = 0);

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

    uint64_t next_u64();
    double uniform();   // [0, 1)
    double gaussian();  // standard normal

    // Independent generator for a sub-task. Derivation is pure, so spawning
    // never disturbs this stream.
    SeededRng substream(uint64_t stream_id) const;

  private:
    uint64_t seed_;
    uint64_t stream_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

void ensure_finite(std::span<const double> v, const char* what);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

Vec matvec(const Matrix& m, std::span<const double> x);

// x * sigmoid(x). Also the gate in the re-injection path.
double silu(double x);

// cos(a, b), clamped to [-1, 1]. Throws DegenerateInput when either norm is 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Gram-Schmidt over (e, h): u1 = e/|e|, u2 = normalized (h - <h,u1>u1).
// |e| <= eps is an error; a residual with norm <= eps collapses to rank 1.
SubspaceBasis orthonormalize_pair(std::span<const double> e, std::span<const double> h,
                                  double eps = 1e-8);

// P x for P = U U^T, computed as U (U^T x); the dense d x d projector is never
// materialized.
Vec project_onto_span(std::span<const double> x, const SubspaceBasis& basis);

// Entries iid N(0, scale^2/d) so that E|x|^2 = scale^2.
Vec sample_isotropic(SeededRng& gen, int dim, double scale = 1.0);

// Numerically stable softmax (max subtraction). Empty input is an error.
Vec softmax_row(std::span<const double> logits);

}  // namespace lens
