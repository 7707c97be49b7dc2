#include "post/probability.hpp"

#include <cmath>
#include <string>

namespace post {

Matrix sinusoidal_table(std::size_t n, std::size_t d_model) {
    if (n < 1) throw DataError("sinusoidal_table: need at least one position");
    if (d_model < 2 || d_model % 2 != 0)
        throw DataError("sinusoidal_table: d_model must be even and >= 2");
    Matrix t(n, d_model);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < d_model / 2; ++d) {
            const double freq =
                std::pow(10000.0, -(2.0 * static_cast<double>(d)) / static_cast<double>(d_model));
            const double arg = static_cast<double>(i) * freq;
            t(i, 2 * d) = std::sin(arg);
            t(i, 2 * d + 1) = std::cos(arg);
        }
    }
    return t;
}

Matrix row_softmax(const Matrix& logits) {
    if (logits.rows() == 0 || logits.cols() == 0) throw DataError("row_softmax: empty input");
    if (!all_finite(logits)) throw DataError("row_softmax: non-finite logits");
    Matrix out(logits.rows(), logits.cols());
    kernels::row_softmax(logits, out);
    return out;
}

Matrix row_softmax(const Matrix& logits, const std::vector<double>& temperature) {
    if (temperature.size() != logits.rows())
        throw DataError("row_softmax: one temperature per row required");
    for (std::size_t i = 0; i < temperature.size(); ++i)
        if (!(temperature[i] > 0.0) || temperature[i] > 1.0)
            throw DataError("row_softmax: temperature outside (0, 1] at row " + std::to_string(i));
    Matrix scaled(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double inv = 1.0 / temperature[i];
        for (std::size_t j = 0; j < logits.cols(); ++j) scaled(i, j) = logits(i, j) * inv;
    }
    return row_softmax(scaled);
}

double sym_kl(const std::vector<double>& p, const std::vector<double>& q, double eps) {
    if (p.size() != q.size() || p.empty())
        throw DataError("sym_kl: vectors must be non-empty and equal length");
    double acc = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double pj = p[j] > eps ? p[j] : eps;
        const double qj = q[j] > eps ? q[j] : eps;
        acc += (pj - qj) * (std::log(pj) - std::log(qj));
    }
    return acc;
}

Matrix sym_kl_rows(const Matrix& p, const Matrix& q, double eps) {
    if (!p.same_shape(q)) throw DataError("sym_kl_rows: shape mismatch");
    if (p.rows() == 0 || p.cols() == 0) throw DataError("sym_kl_rows: empty input");
    Matrix out(p.rows(), 1);
    kernels::sym_kl_rows(p, q, out, eps);
    return out;
}

Matrix rescale_rows(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw DataError("rescale_rows: empty input");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (m(i, j) < 0.0)
                throw DataError("rescale_rows: negative entry at row " + std::to_string(i));
            sum += m(i, j);
        }
        if (!(sum > 0.0))
            throw DataError("rescale_rows: row " + std::to_string(i) + " has no mass");
    }
    Matrix out(m.rows(), m.cols());
    kernels::rescale_rows(m, out);
    return out;
}

}  // namespace post
