#include "post/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "post/probability.hpp"

namespace post {

namespace {

// softmax over a column vector of negated inputs.
Matrix neg_softmax_col(const Matrix& v) {
    // row_softmax normalizes along rows; lay the negated column out as one row.
    Matrix row(1, v.rows());
    for (std::size_t i = 0; i < v.rows(); ++i) row(0, i) = -v(i, 0);
    Matrix sm = row_softmax(row);
    Matrix out(v.rows(), 1);
    for (std::size_t i = 0; i < v.rows(); ++i) out(i, 0) = sm(0, i);
    return out;
}

void check_window_pair(const Matrix& recon, const Matrix& window) {
    if (!recon.same_shape(window))
        throw DataError("score: reconstruction/window shape mismatch");
    if (recon.rows() == 0) throw DataError("score: empty window");
}

}  // namespace

Matrix score_timewise_parts(const Matrix& assdis_t, const Matrix& recon, const Matrix& window) {
    check_window_pair(recon, window);
    if (assdis_t.rows() != window.rows() || assdis_t.cols() != 1)
        throw DataError("score: temporal discrepancy must be one value per time step");
    const Matrix sm = neg_softmax_col(assdis_t);
    Matrix out(window.rows(), 1);
    for (std::size_t i = 0; i < window.rows(); ++i) {
        double err = 0.0;
        for (std::size_t j = 0; j < window.cols(); ++j) {
            const double d = recon(i, j) - window(i, j);
            err += d * d;
        }
        out(i, 0) = sm(i, 0) * err;
    }
    return out;
}

Matrix score_timewise(ModelState& state, const Matrix& window) {
    if (window.rows() != state.cfg.window || window.cols() != state.cfg.d0)
        throw DataError("score_timewise: window shape does not match the model");
    const ForwardOut fo = model_infer(window, state);
    return score_timewise_parts(fo.assdis_t, fo.recon, window);
}

SpatialStats fit_spatial_stats(ModelState& state, const std::vector<Matrix>& windows) {
    if (windows.size() < 2)
        throw DataError("fit_spatial_stats: at least 2 training windows required");
    if (state.cfg.disable_saga)
        throw UsageError("fit_spatial_stats: spatial path is disabled in this model");
    const std::size_t d0 = state.cfg.d0;
    Matrix mean(d0, 1), sq(d0, 1);
    for (const Matrix& w : windows) {
        const ForwardOut fo = model_infer(w, state);
        for (std::size_t j = 0; j < d0; ++j) {
            mean(j, 0) += fo.assdis_s(j, 0);
            sq(j, 0) += fo.assdis_s(j, 0) * fo.assdis_s(j, 0);
        }
    }
    const double n = static_cast<double>(windows.size());
    SpatialStats stats;
    stats.mean = Matrix(d0, 1);
    stats.std = Matrix(d0, 1);
    for (std::size_t j = 0; j < d0; ++j) {
        stats.mean(j, 0) = mean(j, 0) / n;
        const double var = std::max(0.0, sq(j, 0) / n - stats.mean(j, 0) * stats.mean(j, 0));
        stats.std(j, 0) = std::max(kEpsFloor, std::sqrt(var));
    }
    stats.from_train = true;
    return stats;
}

Matrix score_spatiotemporal_parts(const Matrix& assdis_t, const Matrix& assdis_s,
                                  const Matrix& recon, const Matrix& window,
                                  const SpatialStats& stats, SpatialActivation act) {
    check_window_pair(recon, window);
    const std::size_t n = window.rows(), d0 = window.cols();
    if (assdis_t.rows() != n || assdis_t.cols() != 1)
        throw DataError("score: temporal discrepancy must be one value per time step");
    if (assdis_s.rows() != d0 || assdis_s.cols() != 1)
        throw DataError("score: spatial discrepancy must be one value per channel");
    if (!stats.from_train)
        throw UsageError("score: spatial statistics must come from the training split");
    if (stats.mean.rows() != d0 || stats.std.rows() != d0)
        throw DataError("score: spatial statistics channel count mismatch");

    const Matrix sm = neg_softmax_col(assdis_t);

    // Centered spatial discrepancy, negated before the activation.
    Matrix neg_z(1, d0);
    for (std::size_t j = 0; j < d0; ++j)
        neg_z(0, j) = -(assdis_s(j, 0) - stats.mean(j, 0)) / stats.std(j, 0);
    Matrix spatial(1, d0);
    if (act == SpatialActivation::Sigmoid) {
        for (std::size_t j = 0; j < d0; ++j) spatial(0, j) = 1.0 / (1.0 + std::exp(-neg_z(0, j)));
    } else {
        spatial = row_softmax(neg_z);
    }

    Matrix out(n, d0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d0; ++j) {
            const double d = recon(i, j) - window(i, j);
            out(i, j) = sm(i, 0) * spatial(0, j) * d * d;
        }
    return out;
}

Matrix score_spatiotemporal(ModelState& state, const Matrix& window, const SpatialStats& stats,
                            SpatialActivation act) {
    if (window.rows() != state.cfg.window || window.cols() != state.cfg.d0)
        throw DataError("score_spatiotemporal: window shape does not match the model");
    if (state.cfg.disable_saga)
        throw UsageError("score_spatiotemporal: spatial path is disabled in this model");
    const ForwardOut fo = model_infer(window, state);
    return score_spatiotemporal_parts(fo.assdis_t, fo.assdis_s, fo.recon, window, stats, act);
}

double calibrate_threshold(const std::vector<double>& scores, double r) {
    if (scores.empty()) throw DataError("calibrate_threshold: empty score collection");
    if (!(r > 0.0 && r < 100.0))
        throw UsageError("calibrate_threshold: anomaly proportion must be in (0, 100)");
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const double q = (100.0 - r) / 100.0;
    // Linear interpolation between order statistics at rank q * (n - 1).
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<int> detect(const std::vector<double>& scores, double threshold) {
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold ? 1 : 0;
    return out;
}

}  // namespace post
