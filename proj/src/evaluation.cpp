#include "post/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "post/scoring.hpp"

namespace post {

namespace {

void check_binary(const std::vector<int>& v, const char* what) {
    for (int x : v)
        if (x != 0 && x != 1) throw DataError(std::string(what) + ": entries must be 0 or 1");
}

void check_binary(const Matrix& m, const char* what) {
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.data()[i] != 0.0 && m.data()[i] != 1.0)
            throw DataError(std::string(what) + ": entries must be 0 or 1");
}

Prf from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    Prf r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

void accumulate(const std::vector<int>& pred, const std::vector<int>& gt, std::size_t& tp,
                std::size_t& fp, std::size_t& fn) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && gt[i]) ++tp;
        else if (pred[i] && !gt[i]) ++fp;
        else if (!pred[i] && gt[i]) ++fn;
    }
}

double average_precision(std::vector<PrPoint> points) {
    std::stable_sort(points.begin(), points.end(),
                     [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });
    double ap = 0.0, prev_recall = 0.0;
    for (const PrPoint& p : points) {
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    return ap;
}

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw DataError("pr_curve: empty ratio grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0 && grid[i] < 100.0))
            throw DataError("pr_curve: ratios must lie in (0, 100)");
        if (i && grid[i] <= grid[i - 1])
            throw DataError("pr_curve: ratio grid must be strictly increasing");
    }
}

}  // namespace

std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size()) throw DataError("point_adjust: length mismatch");
    check_binary(pred, "point_adjust");
    check_binary(gt, "point_adjust");
    std::vector<int> out = pred;
    std::size_t i = 0;
    while (i < gt.size()) {
        if (!gt[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < gt.size() && gt[j]) ++j;  // [i, j) is a maximal anomaly run
        bool hit = false;
        for (std::size_t k = i; k < j && !hit; ++k) hit = pred[k] != 0;
        if (hit)
            for (std::size_t k = i; k < j; ++k) out[k] = 1;
        i = j;
    }
    return out;
}

Matrix channelwise_adjust(const Matrix& pred, const Matrix& gt) {
    if (!pred.same_shape(gt)) throw DataError("channelwise_adjust: shape mismatch");
    check_binary(pred, "channelwise_adjust");
    check_binary(gt, "channelwise_adjust");
    Matrix out(pred.rows(), pred.cols());
    std::vector<int> pc(pred.rows()), gc(pred.rows());
    for (std::size_t j = 0; j < pred.cols(); ++j) {
        for (std::size_t i = 0; i < pred.rows(); ++i) {
            pc[i] = static_cast<int>(pred(i, j));
            gc[i] = static_cast<int>(gt(i, j));
        }
        const std::vector<int> adj = point_adjust(pc, gc);
        for (std::size_t i = 0; i < pred.rows(); ++i) out(i, j) = adj[i];
    }
    return out;
}

Prf prf(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size()) throw DataError("prf: length mismatch");
    check_binary(pred, "prf");
    check_binary(gt, "prf");
    std::size_t tp = 0, fp = 0, fn = 0;
    accumulate(pred, gt, tp, fp, fn);
    return from_counts(tp, fp, fn);
}

Prf prf_matrix(const Matrix& pred, const Matrix& gt) {
    if (!pred.same_shape(gt)) throw DataError("prf: shape mismatch");
    check_binary(pred, "prf");
    check_binary(gt, "prf");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data()[i] != 0.0, g = gt.data()[i] != 0.0;
        if (p && g) ++tp;
        else if (p && !g) ++fp;
        else if (!p && g) ++fn;
    }
    return from_counts(tp, fp, fn);
}

std::vector<double> default_ratio_grid(std::size_t count) {
    if (count < 2) throw UsageError("default_ratio_grid: at least 2 points required");
    const double lo = std::log10(1e-5), hi = std::log10(30.0);
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i)
        grid[i] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) /
                                     static_cast<double>(count - 1));
    return grid;
}

PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& gt,
                 const std::vector<double>& ratio_grid) {
    if (scores.size() != gt.size()) throw DataError("pr_curve: scores/labels length mismatch");
    check_binary(gt, "pr_curve");
    check_grid(ratio_grid);
    PrCurve curve;
    for (double ratio : ratio_grid) {
        PrPoint pt;
        pt.ratio = ratio;
        pt.threshold = calibrate_threshold(scores, ratio);
        const std::vector<int> adj = point_adjust(detect(scores, pt.threshold), gt);
        const Prf m = prf(adj, gt);
        pt.precision = m.precision;
        pt.recall = m.recall;
        curve.points.push_back(pt);
    }
    curve.ap = average_precision(curve.points);
    return curve;
}

PrCurve pr_curve_channelwise(const Matrix& scores, const Matrix& gt,
                             const std::vector<double>& ratio_grid) {
    if (!scores.same_shape(gt)) throw DataError("pr_curve: scores/labels shape mismatch");
    check_binary(gt, "pr_curve");
    check_grid(ratio_grid);
    const std::vector<double> flat(scores.data(), scores.data() + scores.size());
    PrCurve curve;
    for (double ratio : ratio_grid) {
        PrPoint pt;
        pt.ratio = ratio;
        pt.threshold = calibrate_threshold(flat, ratio);
        Matrix pred(scores.rows(), scores.cols());
        for (std::size_t i = 0; i < scores.size(); ++i)
            pred.data()[i] = scores.data()[i] > pt.threshold ? 1.0 : 0.0;
        const Prf m = prf_matrix(channelwise_adjust(pred, gt), gt);
        pt.precision = m.precision;
        pt.recall = m.recall;
        curve.points.push_back(pt);
    }
    curve.ap = average_precision(curve.points);
    return curve;
}

}  // namespace post
