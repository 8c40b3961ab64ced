#include "slic/core.hpp"

#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slic {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : key_(mix64(mix64(seed + kGolden) ^ mix64(stream_id ^ 0xD2B74407B1CE6E93ULL))) {}

std::uint64_t RngStream::hash_name(std::string_view stream_name) {
    // FNV-1a 64
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : stream_name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

RngStream RngStream::named(std::uint64_t seed, std::string_view stream_name) {
    return RngStream(seed, hash_name(stream_name));
}

std::uint64_t RngStream::next_u64() {
    return mix64(key_ ^ (kGolden * ++counter_));
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + uniform() * (hi - lo);
}

double RngStream::normal() {
    // Box-Muller, cosine branch only; u1 in (0, 1] keeps the log finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

bool RngStream::bernoulli(double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("bernoulli: p outside [0, 1]");
    return uniform() < p;
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("below: n must be >= 1");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine_distance: dimension mismatch");
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) throw std::domain_error("cosine_distance: zero-norm input");
    double d = 1.0 - uv / (std::sqrt(uu) * std::sqrt(vv));
    if (d < 0.0) d = 0.0;
    if (d > 2.0) d = 2.0;
    return d;
}

Vec l2_normalize(std::span<const double> v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    double norm = std::sqrt(ss);
    if (norm <= kNormEps) throw std::domain_error("l2_normalize: norm below 1e-12");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
    return out;
}

Matrix l2_normalize_rows(const Matrix& m, std::string_view what) {
    Matrix out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        double ss = 0.0;
        const double* r = m.row(i);
        for (int j = 0; j < m.cols(); ++j) ss += r[j] * r[j];
        double norm = std::sqrt(ss);
        if (norm <= kNormEps)
            throw std::domain_error("row " + std::to_string(i) + " of " + std::string(what) +
                                    " has zero norm");
        double inv = 1.0 / norm;
        double* o = out.row(i);
        for (int j = 0; j < m.cols(); ++j) o[j] = r[j] * inv;
    }
    return out;
}

Matrix pairwise_cosine_distances(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw std::invalid_argument("pairwise_cosine_distances: column mismatch");
    Matrix an = l2_normalize_rows(a, "A");
    Matrix bn = l2_normalize_rows(b, "B");

    const int m = a.rows(), n = b.rows(), d = a.cols();
    Matrix out(m, n);
    constexpr int kBlock = 64;

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i0 = 0; i0 < m; i0 += kBlock) {
        const int i1 = std::min(i0 + kBlock, m);
        for (int j0 = 0; j0 < n; j0 += kBlock) {
            const int j1 = std::min(j0 + kBlock, n);
            for (int i = i0; i < i1; ++i) {
                const double* ai = an.row(i);
                double* oi = out.row(i);
                for (int j = j0; j < j1; ++j) {
                    const double* bj = bn.row(j);
                    double dot = 0.0;
                    for (int k = 0; k < d; ++k) dot += ai[k] * bj[k];
                    double dist = 1.0 - dot;
                    if (dist < 0.0) dist = 0.0;
                    if (dist > 2.0) dist = 2.0;
                    oi[j] = dist;
                }
            }
        }
    }
    return out;
}

} // namespace slic
