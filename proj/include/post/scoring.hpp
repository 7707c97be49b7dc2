#pragma once

// Anomaly criteria on top of a trained model: the time-wise score (temporal
// discrepancy softmax times reconstruction error), the joint spatio-temporal
// score matrix, and percentile threshold calibration.

#include <cstddef>
#include <vector>

#include "post/matrix.hpp"
#include "post/model.hpp"

namespace post {

// Per-channel running statistics of the spatial discrepancy over the training
// set. from_train guards against calibrating on anything else.
struct SpatialStats {
    Matrix mean;  // (d0 x 1)
    Matrix std;   // (d0 x 1), clamped at kEpsFloor
    bool from_train = false;
};

// How the centered spatial discrepancy is turned into a per-channel factor.
// Sigmoid is the default; ChannelSoftmax exists to demonstrate the score
// compression it causes (each factor ~1/d0 under near-uniform discrepancies).
enum class SpatialActivation { Sigmoid, ChannelSoftmax };

// softmax(-assdis_t) elementwise-times per-step squared reconstruction error.
// Pure assembly from precomputed pieces; shapes (n x 1), (n x d0), (n x d0).
Matrix score_timewise_parts(const Matrix& assdis_t, const Matrix& recon, const Matrix& window);

// Runs the model on the window and assembles the time-wise score (n x 1).
Matrix score_timewise(ModelState& state, const Matrix& window);

// Per-channel mean and population standard deviation of the spatial
// discrepancy across training windows (at least 2 required).
SpatialStats fit_spatial_stats(ModelState& state, const std::vector<Matrix>& windows);

// Joint score: softmax(-assdis_t) (n) outer logistic(-zscore(assdis_s)) (d0),
// elementwise-times squared residuals; (n x d0), entries >= 0. Pure assembly.
Matrix score_spatiotemporal_parts(const Matrix& assdis_t, const Matrix& assdis_s,
                                  const Matrix& recon, const Matrix& window,
                                  const SpatialStats& stats,
                                  SpatialActivation act = SpatialActivation::Sigmoid);

// Runs the model on the window and assembles the joint score (n x d0).
Matrix score_spatiotemporal(ModelState& state, const Matrix& window, const SpatialStats& stats,
                            SpatialActivation act = SpatialActivation::Sigmoid);

// (100 - r)-th percentile of the scores with linear interpolation between
// order statistics; 0 < r < 100. Detection is score strictly greater than
// the threshold, so all-equal scores yield zero detections.
double calibrate_threshold(const std::vector<double>& scores, double r);

// scores[i] > threshold, as 0/1.
std::vector<int> detect(const std::vector<double>& scores, double threshold);

}  // namespace post
