#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slic {

using Vec = std::vector<double>;

// File/format failures: bad magic, truncation, shape mismatch against a manifest.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-major dense matrix of 64-bit floats.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative shape");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

    std::span<const double> row_span(int i) const { return {row(i), static_cast<std::size_t>(cols_)}; }
    std::span<double> row_span(int i) { return {row(i), static_cast<std::size_t>(cols_)}; }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Counter-based deterministic RNG. A stream is fully determined by
// (seed, stream_id); consumers that need isolation derive their own stream id
// so adding a draw in one place never shifts another stream's sequence.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    // stream_id from a stable 64-bit hash of the name ("sampling", "augment", ...).
    static RngStream named(std::uint64_t seed, std::string_view stream_name);
    static std::uint64_t hash_name(std::string_view stream_name);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller; consumes exactly two u64 draws.
    double normal();
    double normal(double mean, double stddev);

    bool bernoulli(double p);

    // Unbiased integer in [0, n); n >= 1.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates in place.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// d(u, v) = 1 - u.v / (|u||v|), clamped to [0, 2] against round-off.
// Throws std::domain_error on a zero-norm input.
double cosine_distance(std::span<const double> u, std::span<const double> v);

// Unit-norm copy; throws std::domain_error when |v| <= 1e-12.
Vec l2_normalize(std::span<const double> v);

// Every row scaled to unit norm; throws std::domain_error naming the first
// zero-norm row. `what` labels the matrix in error messages.
Matrix l2_normalize_rows(const Matrix& m, std::string_view what = "matrix");

// out[i][j] = cosine_distance(a_i, b_j), block-tiled over normalized rows.
// Matches the scalar loop within 1e-12 per entry.
Matrix pairwise_cosine_distances(const Matrix& a, const Matrix& b);

constexpr double kNormEps = 1e-12;

} // namespace slic
