#include "post/autograd.hpp"

#include <cmath>

#include "post/kernels.hpp"

namespace post::ag {

namespace {
void require(bool ok, const char* what) {
    if (!ok) throw DataError(std::string("autograd: ") + what);
}
}  // namespace

const Matrix& val(const Node* n) { return *n->val; }

double scalar_value(const Node* n) {
    require(n->val->size() == 1, "scalar_value on non-scalar");
    return (*n->val)(0, 0);
}

void check_finite(const Node* n, const std::string& tensor_name) {
    if (!all_finite(*n->val))
        throw NumericError("non-finite values in tensor " + tensor_name);
}

Node* Tape::fresh(std::size_t rows, std::size_t cols) {
    nodes_.emplace_back();
    Node* n = &nodes_.back();
    n->owned = Matrix(rows, cols);
    n->val = &n->owned;
    return n;
}

Node* Tape::leaf(Matrix value, bool requires_grad) {
    nodes_.emplace_back();
    Node* n = &nodes_.back();
    n->owned = std::move(value);
    n->val = &n->owned;
    n->requires_grad = requires_grad;
    return n;
}

Node* Tape::param(Param& p) {
    nodes_.emplace_back();
    Node* n = &nodes_.back();
    n->val = &p.value;
    n->param = &p;
    n->requires_grad = p.trainable;
    return n;
}

Node* Tape::detach(Node* x) {
    nodes_.emplace_back();
    Node* n = &nodes_.back();
    n->owned = *x->val;  // value copy, no parents, no gradient flow
    n->val = &n->owned;
    return n;
}

Matrix& Tape::grad_buffer(Node* n) { return n->param ? n->param->grad : n->grad; }

void Tape::accum(Node* n, const Matrix& delta) {
    if (!n->requires_grad) return;
    Matrix& g = grad_buffer(n);
    if (g.size() == 0) g = Matrix(n->val->rows(), n->val->cols());
    require(g.same_shape(delta), "gradient shape mismatch");
    double* dst = g.data();
    const double* src = delta.data();
    for (std::size_t i = 0; i < delta.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Node* loss, bool release) {
    require(loss->val->size() == 1, "backward target must be scalar");
    if (!loss->requires_grad) return;
    Matrix seed(1, 1);
    seed(0, 0) = 1.0;
    accum(loss, seed);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (n.requires_grad && n.back) {
            Matrix& g = grad_buffer(&n);
            if (g.size() != 0) n.back();  // empty grad: not on the path to the loss
        }
        if (release && !n.param) {
            // All consumers of n sit later on the tape and have already run,
            // and n.back itself just ran; nothing reads these buffers again.
            n.grad = Matrix();
            n.owned = Matrix();
            n.back = nullptr;
        }
    }
}

// ---- ops ----

Node* Tape::add(Node* a, Node* b) {
    require(a->val->same_shape(*b->val), "add shape mismatch");
    Node* out = fresh(a->val->rows(), a->val->cols());
    kernels::ew_binary(*a->val, *b->val, out->owned, [](double x, double y) { return x + y; });
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad)
        out->back = [out, a, b] {
            accum(a, grad_buffer(out));
            accum(b, grad_buffer(out));
        };
    return out;
}

Node* Tape::sub(Node* a, Node* b) {
    require(a->val->same_shape(*b->val), "sub shape mismatch");
    Node* out = fresh(a->val->rows(), a->val->cols());
    kernels::ew_binary(*a->val, *b->val, out->owned, [](double x, double y) { return x - y; });
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad)
        out->back = [out, a, b] {
            const Matrix& g = grad_buffer(out);
            accum(a, g);
            Matrix neg(g.rows(), g.cols());
            kernels::ew_unary(g, neg, [](double x) { return -x; });
            accum(b, neg);
        };
    return out;
}

Node* Tape::mul(Node* a, Node* b) {
    require(a->val->same_shape(*b->val), "mul shape mismatch");
    Node* out = fresh(a->val->rows(), a->val->cols());
    kernels::ew_binary(*a->val, *b->val, out->owned, [](double x, double y) { return x * y; });
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad)
        out->back = [out, a, b] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *b->val, t, [](double x, double y) { return x * y; });
            accum(a, t);
            kernels::ew_binary(g, *a->val, t, [](double x, double y) { return x * y; });
            accum(b, t);
        };
    return out;
}

Node* Tape::affine(Node* x, double a, double b) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned, [a, b](double v) { return a * v + b; });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, a] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_unary(g, t, [a](double v) { return a * v; });
            accum(x, t);
        };
    return out;
}

Node* Tape::matmul(Node* a, Node* b) {
    require(a->val->cols() == b->val->rows(), "matmul inner dimension mismatch");
    Node* out = fresh(a->val->rows(), b->val->cols());
    kernels::matmul_nn(*a->val, *b->val, out->owned);
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad)
        out->back = [out, a, b] {
            const Matrix& g = grad_buffer(out);
            if (a->requires_grad) {
                Matrix da(a->val->rows(), a->val->cols());
                kernels::matmul_nt(g, *b->val, da);
                accum(a, da);
            }
            if (b->requires_grad) {
                Matrix db(b->val->rows(), b->val->cols());
                kernels::matmul_tn(*a->val, g, db);
                accum(b, db);
            }
        };
    return out;
}

Node* Tape::matmul_nt(Node* a, Node* b) {
    require(a->val->cols() == b->val->cols(), "matmul_nt inner dimension mismatch");
    Node* out = fresh(a->val->rows(), b->val->rows());
    kernels::matmul_nt(*a->val, *b->val, out->owned);
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad)
        out->back = [out, a, b] {
            const Matrix& g = grad_buffer(out);
            if (a->requires_grad) {
                Matrix da(a->val->rows(), a->val->cols());
                kernels::matmul_nn(g, *b->val, da);
                accum(a, da);
            }
            if (b->requires_grad) {
                Matrix db(b->val->rows(), b->val->cols());
                kernels::matmul_tn(g, *a->val, db);
                accum(b, db);
            }
        };
    return out;
}

Node* Tape::matmul_tn(Node* a, Node* b) {
    require(a->val->rows() == b->val->rows(), "matmul_tn inner dimension mismatch");
    Node* out = fresh(a->val->cols(), b->val->cols());
    kernels::matmul_tn(*a->val, *b->val, out->owned);
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad)
        out->back = [out, a, b] {
            const Matrix& g = grad_buffer(out);
            if (a->requires_grad) {
                Matrix da(a->val->rows(), a->val->cols());
                kernels::matmul_nt(*b->val, g, da);
                accum(a, da);
            }
            if (b->requires_grad) {
                Matrix db(b->val->rows(), b->val->cols());
                kernels::matmul_nn(*a->val, g, db);
                accum(b, db);
            }
        };
    return out;
}

Node* Tape::transpose(Node* x) {
    const std::size_t r = x->val->rows(), c = x->val->cols();
    Node* out = fresh(c, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out->owned(j, i) = (*x->val)(i, j);
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, r, c] {
            const Matrix& g = grad_buffer(out);
            Matrix t(r, c);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) t(i, j) = g(j, i);
            accum(x, t);
        };
    return out;
}

Node* Tape::row_softmax(Node* x) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::row_softmax(*x->val, out->owned);
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x] {
            const Matrix& g = grad_buffer(out);
            const Matrix& y = *out->val;
            Matrix t(y.rows(), y.cols());
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j)
                    t(i, j) = y(i, j) * (g(i, j) - dot);
            }
            accum(x, t);
        };
    return out;
}

Node* Tape::logistic(Node* x) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *out->val, t,
                               [](double gv, double y) { return gv * y * (1.0 - y); });
            accum(x, t);
        };
    return out;
}

Node* Tape::exp(Node* x) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned, [](double v) { return std::exp(v); });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *out->val, t, [](double gv, double y) { return gv * y; });
            accum(x, t);
        };
    return out;
}

Node* Tape::log_floor(Node* x, double eps) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned,
                      [eps](double v) { return std::log(v > eps ? v : eps); });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, eps] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *x->val, t,
                               [eps](double gv, double v) { return v > eps ? gv / v : 0.0; });
            accum(x, t);
        };
    return out;
}

Node* Tape::sqrt(Node* x) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned, [](double v) { return std::sqrt(v); });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *out->val, t,
                               [](double gv, double y) { return gv / (2.0 * y); });
            accum(x, t);
        };
    return out;
}

Node* Tape::reciprocal(Node* x) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned, [](double v) { return 1.0 / v; });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *out->val, t,
                               [](double gv, double y) { return -gv * y * y; });
            accum(x, t);
        };
    return out;
}

Node* Tape::leaky_relu(Node* x, double slope) {
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned,
                      [slope](double v) { return v > 0.0 ? v : slope * v; });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, slope] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *x->val, t,
                               [slope](double gv, double v) { return v > 0.0 ? gv : slope * gv; });
            accum(x, t);
        };
    return out;
}

Node* Tape::relu(Node* x) { return leaky_relu(x, 0.0); }

Node* Tape::gelu(Node* x) {
    const double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 0.39894228040143267794;
    Node* out = fresh(x->val->rows(), x->val->cols());
    kernels::ew_unary(*x->val, out->owned, [inv_sqrt2](double v) {
        return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    });
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, inv_sqrt2, inv_sqrt_2pi] {
            const Matrix& g = grad_buffer(out);
            Matrix t(g.rows(), g.cols());
            kernels::ew_binary(g, *x->val, t, [inv_sqrt2, inv_sqrt_2pi](double gv, double v) {
                const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                return gv * (cdf + v * pdf);
            });
            accum(x, t);
        };
    return out;
}

Node* Tape::rows_scale(Node* x, Node* v) {
    require(v->val->cols() == 1 && v->val->rows() == x->val->rows(),
            "rows_scale expects (rows x 1) scale vector");
    Node* out = fresh(x->val->rows(), x->val->cols());
    for (std::size_t i = 0; i < x->val->rows(); ++i) {
        const double s = (*v->val)(i, 0);
        for (std::size_t j = 0; j < x->val->cols(); ++j)
            out->owned(i, j) = (*x->val)(i, j) * s;
    }
    out->requires_grad = x->requires_grad || v->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, v] {
            const Matrix& g = grad_buffer(out);
            if (x->requires_grad) {
                Matrix t(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double s = (*v->val)(i, 0);
                    for (std::size_t j = 0; j < g.cols(); ++j) t(i, j) = g(i, j) * s;
                }
                accum(x, t);
            }
            if (v->requires_grad) {
                Matrix dv(g.rows(), 1);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < g.cols(); ++j) acc += g(i, j) * (*x->val)(i, j);
                    dv(i, 0) = acc;
                }
                accum(v, dv);
            }
        };
    return out;
}

Node* Tape::cols_scale(Node* x, Node* v) {
    require(v->val->cols() == 1 && v->val->rows() == x->val->cols(),
            "cols_scale expects (cols x 1) scale vector");
    Node* out = fresh(x->val->rows(), x->val->cols());
    for (std::size_t i = 0; i < x->val->rows(); ++i)
        for (std::size_t j = 0; j < x->val->cols(); ++j)
            out->owned(i, j) = (*x->val)(i, j) * (*v->val)(j, 0);
    out->requires_grad = x->requires_grad || v->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, v] {
            const Matrix& g = grad_buffer(out);
            if (x->requires_grad) {
                Matrix t(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j)
                        t(i, j) = g(i, j) * (*v->val)(j, 0);
                accum(x, t);
            }
            if (v->requires_grad) {
                Matrix dv(g.cols(), 1);
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.rows(); ++i) acc += g(i, j) * (*x->val)(i, j);
                    dv(j, 0) = acc;
                }
                accum(v, dv);
            }
        };
    return out;
}

Node* Tape::broadcast_col(Node* v, std::size_t cols) {
    require(v->val->cols() == 1, "broadcast_col expects a column vector");
    Node* out = fresh(v->val->rows(), cols);
    for (std::size_t i = 0; i < v->val->rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) out->owned(i, j) = (*v->val)(i, 0);
    out->requires_grad = v->requires_grad;
    if (out->requires_grad)
        out->back = [out, v] {
            const Matrix& g = grad_buffer(out);
            Matrix dv(g.rows(), 1);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < g.cols(); ++j) acc += g(i, j);
                dv(i, 0) = acc;
            }
            accum(v, dv);
        };
    return out;
}

Node* Tape::broadcast_row(Node* v, std::size_t rows) {
    require(v->val->cols() == 1, "broadcast_row expects a column vector");
    Node* out = fresh(rows, v->val->rows());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < v->val->rows(); ++j) out->owned(i, j) = (*v->val)(j, 0);
    out->requires_grad = v->requires_grad;
    if (out->requires_grad)
        out->back = [out, v] {
            const Matrix& g = grad_buffer(out);
            Matrix dv(g.cols(), 1);
            for (std::size_t j = 0; j < g.cols(); ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.rows(); ++i) acc += g(i, j);
                dv(j, 0) = acc;
            }
            accum(v, dv);
        };
    return out;
}

Node* Tape::row_sum(Node* x) {
    Node* out = fresh(x->val->rows(), 1);
    for (std::size_t i = 0; i < x->val->rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < x->val->cols(); ++j) acc += (*x->val)(i, j);
        out->owned(i, 0) = acc;
    }
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x] {
            const Matrix& g = grad_buffer(out);
            Matrix t(x->val->rows(), x->val->cols());
            for (std::size_t i = 0; i < t.rows(); ++i)
                for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = g(i, 0);
            accum(x, t);
        };
    return out;
}

Node* Tape::sum_all(Node* x) {
    Node* out = fresh(1, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < x->val->size(); ++i) acc += x->val->data()[i];
    out->owned(0, 0) = acc;
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x] {
            const double g = grad_buffer(out)(0, 0);
            Matrix t(x->val->rows(), x->val->cols(), g);
            accum(x, t);
        };
    return out;
}

Node* Tape::mean_all(Node* x) {
    return affine(sum_all(x), 1.0 / static_cast<double>(x->val->size()), 0.0);
}

Node* Tape::concat_cols(const std::vector<Node*>& xs) {
    require(!xs.empty(), "concat_cols of nothing");
    const std::size_t r = xs[0]->val->rows();
    std::size_t c = 0;
    for (Node* x : xs) {
        require(x->val->rows() == r, "concat_cols row mismatch");
        c += x->val->cols();
    }
    Node* out = fresh(r, c);
    std::size_t off = 0;
    for (Node* x : xs) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < x->val->cols(); ++j)
                out->owned(i, off + j) = (*x->val)(i, j);
        off += x->val->cols();
    }
    for (Node* x : xs) out->requires_grad = out->requires_grad || x->requires_grad;
    if (out->requires_grad) {
        std::vector<Node*> parts = xs;
        out->back = [out, parts] {
            const Matrix& g = grad_buffer(out);
            std::size_t off2 = 0;
            for (Node* x : parts) {
                if (x->requires_grad) {
                    Matrix t(x->val->rows(), x->val->cols());
                    for (std::size_t i = 0; i < t.rows(); ++i)
                        for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = g(i, off2 + j);
                    accum(x, t);
                }
                off2 += x->val->cols();
            }
        };
    }
    return out;
}

Node* Tape::diag(Node* v) {
    require(v->val->cols() == 1, "diag expects a column vector");
    const std::size_t n = v->val->rows();
    Node* out = fresh(n, n);
    for (std::size_t i = 0; i < n; ++i) out->owned(i, i) = (*v->val)(i, 0);
    out->requires_grad = v->requires_grad;
    if (out->requires_grad)
        out->back = [out, v, n] {
            const Matrix& g = grad_buffer(out);
            Matrix dv(n, 1);
            for (std::size_t i = 0; i < n; ++i) dv(i, 0) = g(i, i);
            accum(v, dv);
        };
    return out;
}

Node* Tape::slice_rows(Node* x, std::size_t start, std::size_t count) {
    require(start + count <= x->val->rows(), "slice_rows out of range");
    const std::size_t c = x->val->cols();
    Node* out = fresh(count, c);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < c; ++j) out->owned(i, j) = (*x->val)(start + i, j);
    out->requires_grad = x->requires_grad;
    if (out->requires_grad)
        out->back = [out, x, start, count, c] {
            const Matrix& g = grad_buffer(out);
            Matrix t(x->val->rows(), x->val->cols());
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < c; ++j) t(start + i, j) = g(i, j);
            accum(x, t);
        };
    return out;
}

// ---- composition helpers ----

Node* Tape::row_mean(Node* x) {
    return affine(row_sum(x), 1.0 / static_cast<double>(x->val->cols()), 0.0);
}

Node* Tape::col_mean_vec(Node* x) {
    return affine(row_sum(transpose(x)), 1.0 / static_cast<double>(x->val->rows()), 0.0);
}

Node* Tape::sym_kl_rows(Node* p, Node* q, double eps) {
    Node* diff = sub(p, q);
    Node* logs = sub(log_floor(p, eps), log_floor(q, eps));
    return row_sum(mul(diff, logs));
}

Node* Tape::sym_kl_vec(Node* p, Node* q, double eps) {
    Node* diff = sub(p, q);
    Node* logs = sub(log_floor(p, eps), log_floor(q, eps));
    return sum_all(mul(diff, logs));
}

Node* Tape::scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

}  // namespace post::ag
