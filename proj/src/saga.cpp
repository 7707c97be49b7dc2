#include "post/saga.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "post/kernels.hpp"
#include "post/probability.hpp"

namespace post {

SagaGraph saga_graph(ag::Tape& t, ag::Node* x, ag::Node* g_logits, SagaParams& params) {
    const std::size_t n = ag::val(x).rows();
    const std::size_t d = ag::val(x).cols();
    const std::size_t d0 = params.w_h.value.cols();
    if (params.w_h.value.rows() != d) throw DataError("saga: W_H does not match input width");
    if (params.theta.value.rows() != 2 * n || params.theta.value.cols() != 1)
        throw DataError("saga: theta must be a 2n vector");
    if (params.w_s.value.rows() != d0 || params.w_s.value.cols() != d)
        throw DataError("saga: W_S shape mismatch");
    if (params.w_tau.value.rows() != n || params.w_tau.value.cols() != 1)
        throw DataError("saga: W_tau must be an n vector");
    if (ag::val(g_logits).rows() != d0 || ag::val(g_logits).cols() != d0)
        throw DataError("saga: graph logits must be d0 x d0");

    SagaGraph g;
    // Channel profiles: row i is channel i's time course under the projection.
    ag::Node* profiles = t.transpose(t.matmul(x, t.param(params.w_h)));  // (d0 x n)
    ag::Node* theta = t.param(params.theta);
    ag::Node* u = t.matmul(profiles, t.slice_rows(theta, 0, n));   // (d0 x 1)
    ag::Node* v = t.matmul(profiles, t.slice_rows(theta, n, n));   // (d0 x 1)
    ag::Node* e = t.leaky_relu(t.add(t.broadcast_col(u, d0), t.broadcast_row(v, d0)), 0.2);
    g.a = t.row_softmax(e);
    ag::check_finite(g.a, "saga.A");

    ag::Node* g_tilde = t.logistic(g_logits);
    ag::Node* weighted = t.mul(g_tilde, g.a);
    ag::Node* partition = t.row_sum(weighted);
    for (std::size_t i = 0; i < d0; ++i)
        if (!(ag::val(partition)(i, 0) > 0.0))
            throw NumericError("saga: zero partition factor in posterior row " +
                               std::to_string(i));
    g.a_post = t.rows_scale(weighted, t.reciprocal(partition));
    ag::check_finite(g.a_post, "saga.A_post");

    g.x_s = t.matmul(t.transpose(t.matmul(g.a_post, profiles)), t.param(params.w_s));
    ag::check_finite(g.x_s, "saga.X_s");

    g.tau = t.logistic(t.matmul(profiles, t.param(params.w_tau)));  // (d0 x 1)
    ag::check_finite(g.tau, "saga.tau");
    g.g_hat = t.row_softmax(t.rows_scale(g_logits, t.reciprocal(g.tau)));
    ag::check_finite(g.g_hat, "saga.G_hat");
    return g;
}

SagaOut saga_forward(const Matrix& x, const Matrix& g_logits, SagaParams& params) {
    if (!all_finite(x)) throw NumericError("non-finite values in tensor saga.X");
    ag::Tape t;
    SagaGraph g = saga_graph(t, t.constant(x), t.constant(g_logits), params);
    SagaOut out;
    out.x_s = ag::val(g.x_s);
    out.a = ag::val(g.a);
    out.a_post = ag::val(g.a_post);
    out.g_hat = ag::val(g.g_hat);
    const Matrix& tau = ag::val(g.tau);
    out.tau.assign(tau.data(), tau.data() + tau.size());
    return out;
}

Matrix assdis_s(const std::vector<Matrix>& g_hat, const std::vector<Matrix>& a) {
    if (g_hat.empty() || g_hat.size() != a.size())
        throw DataError("assdis_s: layer count mismatch");
    const std::size_t d0 = g_hat[0].rows();
    Matrix acc(d0, 1);
    for (std::size_t l = 0; l < g_hat.size(); ++l) {
        const Matrix kl = sym_kl_rows(g_hat[l], a[l]);
        for (std::size_t i = 0; i < d0; ++i) acc(i, 0) += kl(i, 0);
    }
    const double inv_l = 1.0 / static_cast<double>(g_hat.size());
    for (std::size_t i = 0; i < d0; ++i) acc(i, 0) *= inv_l;
    return acc;
}

ag::Node* assdis_s_graph(ag::Tape& t, const std::vector<ag::Node*>& g_hat,
                         const std::vector<ag::Node*>& a) {
    if (g_hat.empty() || g_hat.size() != a.size())
        throw DataError("assdis_s: layer count mismatch");
    ag::Node* acc = nullptr;
    for (std::size_t l = 0; l < g_hat.size(); ++l) {
        ag::Node* kl = t.sym_kl_rows(g_hat[l], a[l], kernels::kEpsFloor);
        acc = acc ? t.add(acc, kl) : kl;
    }
    return t.affine(acc, 1.0 / static_cast<double>(g_hat.size()), 0.0);
}

Matrix knn_init(const Matrix& train_series, std::size_t k, double c0) {
    const std::size_t t_len = train_series.rows();
    const std::size_t d0 = train_series.cols();
    if (d0 < 2) throw DataError("knn_init: need at least 2 channels");
    if (k < 1 || k >= d0) throw DataError("knn_init: k must satisfy 1 <= k < channel count");
    if (t_len < 2) throw DataError("knn_init: training series too short");

    std::vector<double> mean(d0, 0.0), var(d0, 0.0);
    for (std::size_t j = 0; j < d0; ++j) {
        for (std::size_t i = 0; i < t_len; ++i) mean[j] += train_series(i, j);
        mean[j] /= static_cast<double>(t_len);
        for (std::size_t i = 0; i < t_len; ++i) {
            const double c = train_series(i, j) - mean[j];
            var[j] += c * c;
        }
    }

    // Absolute Pearson correlation; constant channels get similarity 0.
    Matrix sim(d0, d0);
    for (std::size_t a = 0; a < d0; ++a)
        for (std::size_t b = a + 1; b < d0; ++b) {
            double cov = 0.0;
            for (std::size_t i = 0; i < t_len; ++i)
                cov += (train_series(i, a) - mean[a]) * (train_series(i, b) - mean[b]);
            const double denom = std::sqrt(var[a] * var[b]);
            const double corr = denom > 0.0 ? std::fabs(cov / denom) : 0.0;
            sim(a, b) = sim(b, a) = corr;
        }

    Matrix g(d0, d0, -c0);
    for (std::size_t i = 0; i < d0; ++i) {
        g(i, i) = c0;  // self-loop always kept
        std::vector<std::size_t> order;
        for (std::size_t j = 0; j < d0; ++j)
            if (j != i) order.push_back(j);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return sim(i, a) > sim(i, b); });
        for (std::size_t r = 0; r < k; ++r) g(i, order[r]) = c0;
    }
    return g;
}

Matrix identity_init(std::size_t d0, double c0) {
    if (d0 < 1) throw DataError("identity_init: empty graph");
    Matrix g(d0, d0, -c0);
    for (std::size_t i = 0; i < d0; ++i) g(i, i) = c0;
    return g;
}

}  // namespace post
