#pragma once

// Dataset plumbing: manifest files, CSV and raw binary matrix formats, label
// loading with validation, train-statistics normalization with a leakage
// guard, and non-overlapping windowing.

#include <cstddef>
#include <string>
#include <vector>

#include "post/matrix.hpp"

namespace post {

// Describes one dataset on disk. Paths are stored relative to the manifest
// file and resolved on load. channel_labels is optional (empty when absent).
struct DatasetManifest {
    std::string name;
    std::size_t channels = 0;
    std::size_t window = 100;
    double val_fraction = 0.2;  // temporal tail of the training series
    std::string train;          // series files: .csv or .bin
    std::string test;
    std::string labels;          // time-wise binary vector for the test series
    std::string channel_labels;  // optional time x channel binary matrix
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& m);

// CSV numeric table. A first line that fails to parse as numbers is treated
// as a header and skipped. Ragged rows and non-numeric cells are rejected
// with the offending position named.
Matrix load_csv_matrix(const std::string& path);
void save_csv_matrix(const std::string& path, const Matrix& m);

// Raw binary matrix: magic "PMAT", u32 version, u64 rows, u64 cols,
// row-major float64 payload. Bit-exact round trip.
Matrix load_bin_matrix(const std::string& path);
void save_bin_matrix(const std::string& path, const Matrix& m);

// Dispatch on extension: .csv or .bin.
Matrix load_matrix(const std::string& path);
void save_matrix(const std::string& path, const Matrix& m);

// Binary label loaders; every entry must be exactly 0 or 1.
std::vector<int> load_labels_vector(const std::string& path);
Matrix load_labels_matrix(const std::string& path);

// Per-channel z-score statistics. from_train tags provenance; normalize
// refuses statistics that were not computed on the training split.
struct NormStats {
    Matrix mean;  // (1 x d0)
    Matrix std;   // (1 x d0), clamped at kEpsFloor
    bool from_train = false;
};

NormStats compute_norm_stats(const Matrix& train_series);
Matrix normalize(const Matrix& series, const NormStats& stats);

// Non-overlapping windows of n rows; the tail shorter than n is dropped.
struct WindowSet {
    std::vector<Matrix> windows;
    std::vector<std::size_t> starts;  // absolute row index of each window
    std::size_t dropped_tail = 0;     // rows not covered by any window
};

WindowSet make_windows(const Matrix& series, std::size_t n);

// Reassembles the covered prefix of the original series (tests + dumps).
Matrix unwindow(const WindowSet& ws, std::size_t d0);

// Temporal split: first (1 - fraction) of the rows, then the tail.
struct SeriesSplit {
    Matrix head;
    Matrix tail;
};

SeriesSplit split_tail(const Matrix& series, double fraction);

}  // namespace post
