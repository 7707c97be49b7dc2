#pragma once

// Shared probability/association primitives: the sinusoidal position table,
// row-wise softmax, symmetric KL, and row rescaling. These are pure functions
// with argument validation; the hot paths inside the model go through the
// kernels directly.

#include <vector>

#include "post/kernels.hpp"
#include "post/matrix.hpp"

namespace post {

inline constexpr double kEpsFloor = kernels::kEpsFloor;

// Sinusoidal table: row i, columns (2d, 2d+1) hold sin and cos of
// i / 10000^(2d / d_model). d_model must be even and >= 2.
Matrix sinusoidal_table(std::size_t n, std::size_t d_model);

// Row-wise softmax with the per-row max subtracted before exponentiation.
Matrix row_softmax(const Matrix& logits);

// Tempered variant: row i uses logits(i,:) / temperature[i]; temperatures
// must lie in (0, 1].
Matrix row_softmax(const Matrix& logits, const std::vector<double>& temperature);

// Symmetric KL between two discrete distributions, entries clamped at eps
// before the logs. Zero when p == q.
double sym_kl(const std::vector<double>& p, const std::vector<double>& q,
              double eps = kEpsFloor);

// Row-wise symmetric KL between two row-stochastic matrices; returns an
// (n x 1) column of divergences.
Matrix sym_kl_rows(const Matrix& p, const Matrix& q, double eps = kEpsFloor);

// Normalize each row to sum 1. Entries must be nonnegative with a strictly
// positive row sum.
Matrix rescale_rows(const Matrix& m);

}  // namespace post
