#pragma once

// Point-adjusted detection metrics: segment credit assignment (time-wise and
// per-channel), precision/recall/F1 with explicit zero conventions, and PR
// curves with average precision over a threshold-ratio grid.

#include <cstddef>
#include <vector>

#include "post/matrix.hpp"

namespace post {

// Segment credit: every maximal contiguous ground-truth anomaly run that
// contains at least one predicted positive becomes fully positive in the
// output; predictions outside such runs are returned unchanged.
std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& gt);

// point_adjust applied to each channel column independently. Entries must be
// exactly 0 or 1.
Matrix channelwise_adjust(const Matrix& pred, const Matrix& gt);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

// Pointwise counting. Zero conventions: precision 0 without predicted
// positives, recall 0 without actual positives, f1 0 when p + r == 0.
Prf prf(const std::vector<int>& pred, const std::vector<int>& gt);

// Counts accumulated over every cell of the matrices.
Prf prf_matrix(const Matrix& pred, const Matrix& gt);

struct PrPoint {
    double ratio = 0.0;      // threshold ratio, percent
    double threshold = 0.0;  // calibrated score threshold
    double precision = 0.0;
    double recall = 0.0;
};

struct PrCurve {
    std::vector<PrPoint> points;
    double ap = 0.0;  // sum over the recall-sorted curve of (R_k - R_{k-1}) * P_k
};

// Log-spaced threshold ratios from 1e-5 percent to 30 percent.
std::vector<double> default_ratio_grid(std::size_t count = 50);

// For each ratio: threshold on the evaluated scores, strict-greater detection,
// point adjustment, then (P, R). The grid must be non-empty and strictly
// increasing within (0, 100).
PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& gt,
                 const std::vector<double>& ratio_grid);

// Channel-wise variant: one threshold over all score cells per ratio,
// per-channel adjustment, counts accumulated across channels.
PrCurve pr_curve_channelwise(const Matrix& scores, const Matrix& gt,
                             const std::vector<double>& ratio_grid);

}  // namespace post
