#pragma once

// Spatial (channel-to-channel) attention with a learned graph prior. The
// observation association comes from additive attention over channel time
// profiles; the learned graph logits reweight it into a posterior for the
// forward path and, tempered per channel, form the prior side of the spatial
// association discrepancy. No positional encoding enters this path.

#include <cstddef>
#include <vector>

#include "post/autograd.hpp"
#include "post/matrix.hpp"

namespace post {

struct SagaParams {
    ag::Param w_h;    // (d x d0) channel profile projection
    ag::Param theta;  // (2n x 1) additive attention parameter
    ag::Param w_s;    // (d0 x d) output projection
    ag::Param w_tau;  // (n x 1) temperature projection
};

struct SagaGraph {
    ag::Node* x_s = nullptr;     // sublayer output before residual/norm, (n x d)
    ag::Node* a = nullptr;       // observation association, (d0 x d0) row-stochastic
    ag::Node* a_post = nullptr;  // graph-reweighted posterior association, (d0 x d0)
    ag::Node* g_hat = nullptr;   // tempered prior rows softmax(G_i:/tau_i), (d0 x d0)
    ag::Node* tau = nullptr;     // per-channel temperatures in (0,1), (d0 x 1)
};

// Builds the SAGA sublayer on the tape. `g_logits` is the layer's graph
// logit matrix (bound param or detached copy).
SagaGraph saga_graph(ag::Tape& t, ag::Node* x, ag::Node* g_logits, SagaParams& params);

struct SagaOut {
    Matrix x_s, a, a_post, g_hat;
    std::vector<double> tau;
};

// Value-only wrapper over saga_graph.
SagaOut saga_forward(const Matrix& x, const Matrix& g_logits, SagaParams& params);

// Spatial association discrepancy: per-channel symmetric KL between the
// tempered prior rows and the observation rows, averaged over layers.
Matrix assdis_s(const std::vector<Matrix>& g_hat, const std::vector<Matrix>& a);
ag::Node* assdis_s_graph(ag::Tape& t, const std::vector<ag::Node*>& g_hat,
                         const std::vector<ag::Node*>& a);

// Graph logit initialization from channel similarity: the k most similar
// channels (absolute Pearson correlation over the training series) and the
// self-loop get logit +c0, everything else -c0. Constant channels correlate
// with nothing but keep their self-loop.
Matrix knn_init(const Matrix& train_series, std::size_t k, double c0 = 2.0);

// Ablation variant: +c0 on the diagonal, -c0 elsewhere.
Matrix identity_init(std::size_t d0, double c0 = 2.0);

}  // namespace post
