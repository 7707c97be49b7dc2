#pragma once

// Graph-structure regularization: the normalized Laplacian of the learned
// adjacency, the channel smoothness penalty, and the sigmoid-weighted l1
// proximal operator used to sparsify graph logits after each graph update.

#include <vector>

#include "post/autograd.hpp"
#include "post/matrix.hpp"

namespace post {

struct ProxResult {
    Matrix logits;    // sparsified copy of the input
    int iters;        // worst-case iterations used by any entry
    double residual;  // worst final fixed-point residual
};

// Normalized Laplacian D^{-1/2} (D - W) D^{-1/2} of an entrywise-(0,1)
// weight matrix; D is the diagonal of row sums.
Matrix laplacian(const Matrix& weights);

// (1/L) * sum_l trace(W^T Delta_l W) for a window of shape (n x d0), summed
// over per-layer edge weight matrices (each d0 x d0).
double smoothness_loss(const Matrix& window, const std::vector<Matrix>& weights_per_layer);

// Proximal map of lambda * sum_ij logistic(z_ij) at g: elementwise fixed
// point z = g - lambda * s(z) (1 - s(z)). Shrinks every logit; aborts with
// NumericError on divergence or a residual above 10 * tol.
ProxResult prox_sigmoid_l1(const Matrix& logits, double lambda, int max_iters = 20,
                           double tol = 1e-8);

namespace graph_ops {
// Autograd compositions used by the trainer.
ag::Node* laplacian(ag::Tape& t, ag::Node* weights);
ag::Node* smoothness_loss(ag::Tape& t, const Matrix& window,
                          const std::vector<ag::Node*>& weights_per_layer);
}  // namespace graph_ops

}  // namespace post
