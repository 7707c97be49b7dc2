#include "post/kernels.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace post::kernels {

namespace {

// Per-row helpers. Serial and parallel entry points both run these, one row
// per call, which is what makes the two variants bitwise identical.

inline void matmul_nn_row(const Matrix& A, const Matrix& B, Matrix& C, std::size_t i) {
    const std::size_t k_dim = A.cols(), n = B.cols();
    double* c = C.row(i);
    std::memset(c, 0, n * sizeof(double));
    const double* a = A.row(i);
    for (std::size_t k = 0; k < k_dim; ++k) {
        const double aik = a[k];
        if (aik == 0.0) continue;
        const double* b = B.row(k);
        for (std::size_t j = 0; j < n; ++j) c[j] += aik * b[j];
    }
}

inline void matmul_nt_row(const Matrix& A, const Matrix& B, Matrix& C, std::size_t i) {
    const std::size_t k_dim = A.cols(), n = B.rows();
    const double* a = A.row(i);
    double* c = C.row(i);
    for (std::size_t j = 0; j < n; ++j) {
        const double* b = B.row(j);
        double acc = 0.0;
        for (std::size_t k = 0; k < k_dim; ++k) acc += a[k] * b[k];
        c[j] = acc;
    }
}

// Row i of C = A^T * B is built from column i of A; the helper walks A rows.
inline void matmul_tn_row(const Matrix& A, const Matrix& B, Matrix& C, std::size_t i) {
    const std::size_t m = A.rows(), n = B.cols();
    double* c = C.row(i);
    std::memset(c, 0, n * sizeof(double));
    for (std::size_t k = 0; k < m; ++k) {
        const double aki = A(k, i);
        if (aki == 0.0) continue;
        const double* b = B.row(k);
        for (std::size_t j = 0; j < n; ++j) c[j] += aki * b[j];
    }
}

inline void softmax_row(const Matrix& in, Matrix& out, std::size_t i) {
    const std::size_t n = in.cols();
    const double* x = in.row(i);
    double* y = out.row(i);
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j)
        if (x[j] > mx) mx = x[j];
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

inline void sym_kl_row(const Matrix& P, const Matrix& Q, Matrix& out, double eps, std::size_t i) {
    const std::size_t n = P.cols();
    const double* p = P.row(i);
    const double* q = Q.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double pj = p[j] > eps ? p[j] : eps;
        const double qj = q[j] > eps ? q[j] : eps;
        acc += (pj - qj) * (std::log(pj) - std::log(qj));
    }
    out(i, 0) = acc;
}

inline void rescale_row(const Matrix& in, Matrix& out, std::size_t i) {
    const std::size_t n = in.cols();
    const double* x = in.row(i);
    double* y = out.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += x[j];
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) y[j] = x[j] * inv;
}

inline void gaussian_prior_row(const double* sigma, std::size_t n, Matrix& out, std::size_t i) {
    const double sqrt_two_pi = 2.5066282746310005024;
    const double s = sigma[i];
    const double coef = 1.0 / (sqrt_two_pi * s);
    const double inv2s2 = 1.0 / (2.0 * s * s);
    double* y = out.row(i);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = static_cast<double>(j) - static_cast<double>(i);
        y[j] = coef * std::exp(-d * d * inv2s2);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One entry of the proximal fixed point. Returns iterations used; flags
// divergence when the residual grows three iterations in a row.
inline int prox_entry(double& g, double lambda, int max_iters, double tol, bool& diverged,
                      double& final_res) {
    double z = g;
    double prev_res = std::numeric_limits<double>::infinity();
    int grow = 0;
    int it = 0;
    double res = 0.0;
    for (; it < max_iters; ++it) {
        const double s = logistic(z);
        const double zn = g - lambda * s * (1.0 - s);
        res = std::fabs(zn - z);
        z = zn;
        if (res > prev_res) {
            if (++grow >= 3) {
                diverged = true;
                break;
            }
        } else {
            grow = 0;
        }
        prev_res = res;
        if (res < tol) {
            ++it;
            break;
        }
    }
    g = z;
    final_res = res;
    return it;
}

}  // namespace

// ---- parallel entry points ----

void matmul_nn(const Matrix& A, const Matrix& B, Matrix& C) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(A.rows());
#pragma omp parallel for schedule(static) if (m > 1 && A.size() * B.cols() >= 32768)
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_nn_row(A, B, C, static_cast<std::size_t>(i));
}

void matmul_nt(const Matrix& A, const Matrix& B, Matrix& C) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(A.rows());
#pragma omp parallel for schedule(static) if (m > 1 && A.size() * B.rows() >= 32768)
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_nt_row(A, B, C, static_cast<std::size_t>(i));
}

void matmul_tn(const Matrix& A, const Matrix& B, Matrix& C) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(A.cols());
#pragma omp parallel for schedule(static) if (m > 1 && A.size() * B.cols() >= 32768)
    for (std::ptrdiff_t i = 0; i < m; ++i) matmul_tn_row(A, B, C, static_cast<std::size_t>(i));
}

void row_softmax(const Matrix& in, Matrix& out) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(in.rows());
#pragma omp parallel for schedule(static) if (in.size() >= 16384)
    for (std::ptrdiff_t i = 0; i < m; ++i) softmax_row(in, out, static_cast<std::size_t>(i));
}

void sym_kl_rows(const Matrix& P, const Matrix& Q, Matrix& out, double eps) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(P.rows());
#pragma omp parallel for schedule(static) if (P.size() >= 16384)
    for (std::ptrdiff_t i = 0; i < m; ++i) sym_kl_row(P, Q, out, eps, static_cast<std::size_t>(i));
}

void rescale_rows(const Matrix& in, Matrix& out) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(in.rows());
#pragma omp parallel for schedule(static) if (in.size() >= 16384)
    for (std::ptrdiff_t i = 0; i < m; ++i) rescale_row(in, out, static_cast<std::size_t>(i));
}

void gaussian_prior_rows(const double* sigma, std::size_t n, Matrix& out) {
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n >= 128)
    for (std::ptrdiff_t i = 0; i < m; ++i)
        gaussian_prior_row(sigma, n, out, static_cast<std::size_t>(i));
}

ProxStatus prox_sigmoid_l1(Matrix& g, double lambda, int max_iters, double tol) {
    ProxStatus st;
    double* p = g.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(g.size());
    int worst_it = 0;
    double worst_res = 0.0;
#pragma omp parallel for schedule(static) reduction(max : worst_it, worst_res) \
    if (n >= 4096)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        bool div = false;
        double res = 0.0;
        const int it = prox_entry(p[i], lambda, max_iters, tol, div, res);
        if (it > worst_it) worst_it = it;
        if (res > worst_res) worst_res = res;
        if (div) {
#pragma omp critical
            {
                if (!st.diverged) {
                    st.diverged = true;
                    st.index = static_cast<std::size_t>(i);
                }
            }
        }
    }
    st.iters = worst_it;
    st.residual = worst_res;
    return st;
}

// ---- serial reference twins ----

namespace serial {

void matmul_nn(const Matrix& A, const Matrix& B, Matrix& C) {
    for (std::size_t i = 0; i < A.rows(); ++i) matmul_nn_row(A, B, C, i);
}
void matmul_nt(const Matrix& A, const Matrix& B, Matrix& C) {
    for (std::size_t i = 0; i < A.rows(); ++i) matmul_nt_row(A, B, C, i);
}
void matmul_tn(const Matrix& A, const Matrix& B, Matrix& C) {
    for (std::size_t i = 0; i < A.cols(); ++i) matmul_tn_row(A, B, C, i);
}
void row_softmax(const Matrix& in, Matrix& out) {
    for (std::size_t i = 0; i < in.rows(); ++i) softmax_row(in, out, i);
}
void sym_kl_rows(const Matrix& P, const Matrix& Q, Matrix& out, double eps) {
    for (std::size_t i = 0; i < P.rows(); ++i) sym_kl_row(P, Q, out, eps, i);
}
void rescale_rows(const Matrix& in, Matrix& out) {
    for (std::size_t i = 0; i < in.rows(); ++i) rescale_row(in, out, i);
}
void gaussian_prior_rows(const double* sigma, std::size_t n, Matrix& out) {
    for (std::size_t i = 0; i < n; ++i) gaussian_prior_row(sigma, n, out, i);
}
ProxStatus prox_sigmoid_l1(Matrix& g, double lambda, int max_iters, double tol) {
    ProxStatus st;
    double* p = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool div = false;
        double res = 0.0;
        const int it = prox_entry(p[i], lambda, max_iters, tol, div, res);
        if (it > st.iters) st.iters = it;
        if (res > st.residual) st.residual = res;
        if (div && !st.diverged) {
            st.diverged = true;
            st.index = i;
        }
    }
    return st;
}

}  // namespace serial

}  // namespace post::kernels
