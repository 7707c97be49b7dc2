#pragma once

// Dense row-major double matrix plus the error types and the seeded RNG
// shared by the whole library. Everything numeric in this project runs on
// 64-bit doubles; the layout is plain enough that kernels can work on raw
// pointers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace post {

// Error family. The CLI maps these onto exit codes: usage -> 2,
// data -> 3, numeric -> 4.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& r : rows) {
            if (r.size() != m.cols_) throw DataError("Matrix::from_rows: ragged initializer");
            std::size_t j = 0;
            for (double v : r) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return a_.size(); }
    bool empty() const { return a_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }
    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }
    double* row(std::size_t i) { return a_.data() + i * cols_; }
    const double* row(std::size_t i) const { return a_.data() + i * cols_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double v) { std::fill(a_.begin(), a_.end(), v); }

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

// Seeded RNG with an explicit Box-Muller normal so streams do not depend on
// the standard library's distribution internals.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() {  // [0, 1)
        return (eng_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(two_pi * u2);
        have_spare_ = true;
        return r * std::cos(two_pi * u2);
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) throw UsageError("Rng::uniform_int: empty range");
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(eng_() % span);
    }

    std::uint64_t raw() { return eng_(); }

  private:
    // splitmix64; tiny, fast, and fully specified here.
    struct SplitMix {
        std::uint64_t s;
        explicit SplitMix(std::uint64_t seed) : s(seed) {}
        std::uint64_t operator()() {
            std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            return z ^ (z >> 31);
        }
    };
    SplitMix eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);
bool all_finite(const Matrix& m);

}  // namespace post
