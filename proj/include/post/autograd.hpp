#pragma once

// Reverse-mode differentiation on a per-step tape. The model forward builds a
// graph of matrix ops; backward walks it in reverse creation order and
// accumulates gradients into Param buffers. Gradients only flow into leaves
// whose Param is marked trainable, so a training phase freezes parameters by
// flipping that flag before building its graph; frozen parameters end the
// phase with an untouched (all-zero) gradient buffer.
//
// The tape is not a public extension point of the library; it exists so the
// trainer can differentiate the losses it owns.

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "post/matrix.hpp"

namespace post::ag {

struct Param {
    std::string name;
    Matrix value;
    Matrix grad;  // persistent accumulator, zeroed by the optimizer
    Matrix m, v;  // Adam first/second moments
    long step = 0;
    bool trainable = true;
};

struct Node {
    const Matrix* val = nullptr;  // points at `owned` or at param->value
    Matrix owned;
    Matrix grad;  // used when param == nullptr
    Param* param = nullptr;
    bool requires_grad = false;
    std::function<void()> back;  // accumulates this node's grad into parents
};

class Tape {
  public:
    Node* leaf(Matrix value, bool requires_grad = false);
    Node* constant(Matrix value) { return leaf(std::move(value), false); }
    Node* param(Param& p);
    Node* detach(Node* x);

    Node* add(Node* a, Node* b);
    Node* sub(Node* a, Node* b);
    Node* mul(Node* a, Node* b);                 // elementwise
    Node* affine(Node* x, double a, double b);   // a*x + b elementwise
    Node* matmul(Node* a, Node* b);              // A * B
    Node* matmul_nt(Node* a, Node* b);           // A * B^T
    Node* matmul_tn(Node* a, Node* b);           // A^T * B
    Node* transpose(Node* x);
    Node* row_softmax(Node* x);
    Node* logistic(Node* x);
    Node* exp(Node* x);
    Node* log_floor(Node* x, double eps);
    Node* sqrt(Node* x);
    Node* reciprocal(Node* x);
    Node* leaky_relu(Node* x, double slope);
    Node* relu(Node* x);
    Node* gelu(Node* x);
    Node* rows_scale(Node* x, Node* v);          // y(i,j) = x(i,j) * v(i,0)
    Node* cols_scale(Node* x, Node* v);          // y(i,j) = x(i,j) * v(j,0)
    Node* broadcast_col(Node* v, std::size_t cols);   // y(i,j) = v(i,0)
    Node* broadcast_row(Node* v, std::size_t rows);   // y(i,j) = v(j,0)
    Node* row_sum(Node* x);                      // (n x 1)
    Node* sum_all(Node* x);                      // (1 x 1)
    Node* mean_all(Node* x);                     // (1 x 1)
    Node* concat_cols(const std::vector<Node*>& xs);
    Node* diag(Node* v);                         // (n x n) from (n x 1)
    Node* slice_rows(Node* x, std::size_t start, std::size_t count);

    // Composition helpers.
    Node* row_mean(Node* x);                          // (n x 1)
    Node* col_mean_vec(Node* x);                      // (cols x 1)
    Node* sym_kl_rows(Node* p, Node* q, double eps);  // (n x 1)
    Node* sym_kl_vec(Node* p, Node* q, double eps);   // (1 x 1) for column vectors
    Node* scalar(double v);

    // Seeds d(loss)=1 and propagates. loss must be 1x1. With release=true,
    // each node's value and gradient buffers are dropped once its backward
    // step has run (parameter buffers are never touched); values read off the
    // tape afterwards are then invalid, so callers must extract them first.
    void backward(Node* loss, bool release = false);

    std::size_t nodes() const { return nodes_.size(); }

  private:
    Node* fresh(std::size_t rows, std::size_t cols);
    static void accum(Node* n, const Matrix& delta);
    static Matrix& grad_buffer(Node* n);
    static bool wants_grad(const Node* n) { return n->requires_grad; }

    std::deque<Node> nodes_;  // deque keeps pointers stable
};

const Matrix& val(const Node* n);
double scalar_value(const Node* n);
void check_finite(const Node* n, const std::string& tensor_name);

}  // namespace post::ag
