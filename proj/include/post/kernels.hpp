#pragma once

// Numeric kernels behind the library. Each kernel has an OpenMP-parallel
// entry point (namespace kernels) and a serial reference twin (namespace
// kernels::serial). Both call the same per-row/per-entry helper, so their
// outputs are bitwise identical; the unit tests assert exactly that and the
// bench_kernels tool times one against the other.
//
// Parallelism is over rows (or entries for elementwise maps): every output
// element is produced by exactly one thread with the same serial inner loop,
// which keeps results independent of the thread count.

#include <cstddef>
#include <functional>

#include "post/matrix.hpp"

namespace post::kernels {

inline constexpr double kEpsFloor = 1e-8;  // probability floor before logs

struct ProxStatus {
    int iters = 0;          // max iterations used by any entry
    double residual = 0.0;  // worst final fixed-point residual
    bool diverged = false;  // residual grew 3 consecutive iterations
    std::size_t index = 0;  // flat index of the diverging entry
};

// C = A * B
void matmul_nn(const Matrix& A, const Matrix& B, Matrix& C);
// C = A * B^T
void matmul_nt(const Matrix& A, const Matrix& B, Matrix& C);
// C = A^T * B
void matmul_tn(const Matrix& A, const Matrix& B, Matrix& C);

// out(i,:) = softmax(in(i,:)) with the per-row max subtracted first.
void row_softmax(const Matrix& in, Matrix& out);

// out(i,0) = sum_j (P(i,j)-Q(i,j)) * (log max(P(i,j),eps) - log max(Q(i,j),eps)),
// the symmetric KL divergence between row distributions.
void sym_kl_rows(const Matrix& P, const Matrix& Q, Matrix& out, double eps = kEpsFloor);

// out(i,:) = in(i,:) / sum_j in(i,j). Caller must reject zero/negative sums.
void rescale_rows(const Matrix& in, Matrix& out);

// out(i,j) = rescale_rows of (1/(sqrt(2*pi)*sigma_i)) * exp(-(j-i)^2 / (2*sigma_i^2)).
void gaussian_prior_rows(const double* sigma, std::size_t n, Matrix& out);

// Elementwise fixed point z <- g - lambda * s(z) * (1 - s(z)), s = logistic,
// run on every entry of g in place.
ProxStatus prox_sigmoid_l1(Matrix& g, double lambda, int max_iters, double tol);

namespace serial {
void matmul_nn(const Matrix& A, const Matrix& B, Matrix& C);
void matmul_nt(const Matrix& A, const Matrix& B, Matrix& C);
void matmul_tn(const Matrix& A, const Matrix& B, Matrix& C);
void row_softmax(const Matrix& in, Matrix& out);
void sym_kl_rows(const Matrix& P, const Matrix& Q, Matrix& out, double eps = kEpsFloor);
void rescale_rows(const Matrix& in, Matrix& out);
void gaussian_prior_rows(const double* sigma, std::size_t n, Matrix& out);
ProxStatus prox_sigmoid_l1(Matrix& g, double lambda, int max_iters, double tol);
}  // namespace serial

// Elementwise maps used by the autograd ops. The loop body is identical in
// both variants, so parallel output matches serial output bitwise.
template <class F>
void ew_unary(const Matrix& in, Matrix& out, F f) {
    const double* src = in.data();
    double* dst = out.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static) if (n >= 16384)
    for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = f(src[i]);
}

template <class F>
void ew_binary(const Matrix& a, const Matrix& b, Matrix& out, F f) {
    const double* pa = a.data();
    const double* pb = b.data();
    double* dst = out.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for schedule(static) if (n >= 16384)
    for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = f(pa[i], pb[i]);
}

}  // namespace post::kernels
