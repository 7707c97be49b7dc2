#include "post/structreg.hpp"

#include <cmath>
#include <string>

#include "post/kernels.hpp"

namespace post {

Matrix laplacian(const Matrix& w) {
    if (w.rows() != w.cols() || w.rows() == 0) throw DataError("laplacian: square matrix required");
    const std::size_t n = w.rows();
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (w(i, j) < 0.0) throw DataError("laplacian: negative weight");
            d += w(i, j);
        }
        if (!(d > 0.0)) throw DataError("laplacian: zero-degree node " + std::to_string(i));
        inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
    }
    Matrix delta(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double deg_i = 1.0 / (inv_sqrt_deg[i] * inv_sqrt_deg[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const double num = (i == j ? deg_i : 0.0) - w(i, j);
            delta(i, j) = num * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    return delta;
}

double smoothness_loss(const Matrix& window, const std::vector<Matrix>& weights_per_layer) {
    if (weights_per_layer.empty()) throw DataError("smoothness_loss: no layers");
    const std::size_t d0 = window.cols();
    // Channel Gram matrix: C(i,j) = <channel_i, channel_j> over the window.
    Matrix c(d0, d0);
    kernels::matmul_tn(window, window, c);
    double acc = 0.0;
    for (const Matrix& w : weights_per_layer) {
        if (w.rows() != d0 || w.cols() != d0)
            throw DataError("smoothness_loss: weight matrix does not match channel count");
        const Matrix delta = laplacian(w);
        for (std::size_t i = 0; i < d0; ++i)
            for (std::size_t j = 0; j < d0; ++j) acc += c(i, j) * delta(i, j);
    }
    return acc / static_cast<double>(weights_per_layer.size());
}

ProxResult prox_sigmoid_l1(const Matrix& logits, double lambda, int max_iters, double tol) {
    if (lambda < 0.0) throw DataError("prox_sigmoid_l1: lambda must be nonnegative");
    if (max_iters < 1) throw DataError("prox_sigmoid_l1: max_iters must be positive");
    if (!all_finite(logits)) throw NumericError("prox_sigmoid_l1: non-finite input logits");
    ProxResult r{logits, 0, 0.0};
    const auto st = kernels::prox_sigmoid_l1(r.logits, lambda, max_iters, tol);
    r.iters = st.iters;
    r.residual = st.residual;
    if (st.diverged)
        throw NumericError("prox_sigmoid_l1: diverging fixed point at flat index " +
                           std::to_string(st.index));
    if (st.residual >= 10.0 * tol)
        throw NumericError("prox_sigmoid_l1: fixed point did not converge, residual " +
                           std::to_string(st.residual));
    return r;
}

namespace graph_ops {

ag::Node* laplacian(ag::Tape& t, ag::Node* weights) {
    ag::Node* deg = t.row_sum(weights);
    ag::Node* inv_sqrt = t.reciprocal(t.sqrt(deg));
    ag::Node* diff = t.sub(t.diag(deg), weights);
    return t.rows_scale(t.cols_scale(diff, inv_sqrt), inv_sqrt);
}

ag::Node* smoothness_loss(ag::Tape& t, const Matrix& window,
                          const std::vector<ag::Node*>& weights_per_layer) {
    Matrix c(window.cols(), window.cols());
    kernels::matmul_tn(window, window, c);
    ag::Node* gram = t.constant(std::move(c));
    ag::Node* acc = nullptr;
    for (ag::Node* w : weights_per_layer) {
        ag::Node* term = t.sum_all(t.mul(gram, laplacian(t, w)));
        acc = acc ? t.add(acc, term) : term;
    }
    return t.affine(acc, 1.0 / static_cast<double>(weights_per_layer.size()), 0.0);
}

}  // namespace graph_ops

}  // namespace post
