#pragma once

// Temporal self-attention with a learnable Gaussian prior over key positions.
// Positional information is added only to the query/key/bandwidth branches
// (the value branch sees the raw input), each head learns a per-position
// bandwidth for its prior, and the prior/observation pair feeds the temporal
// association discrepancy.

#include <cstddef>
#include <vector>

#include "post/autograd.hpp"
#include "post/matrix.hpp"

namespace post {

inline constexpr double kSigmaMin = 0.1;  // bandwidth squash lower bound; upper bound is n/2

struct TasaParams {
    std::vector<ag::Param> w_q, w_k, w_v;  // per head, (d x d_head)
    std::vector<ag::Param> w_sigma;        // per head, (d x 1)
    ag::Param w_o;                         // (heads*d_head x d)

    std::size_t heads() const { return w_q.size(); }
    std::size_t d_model() const { return w_q.empty() ? 0 : w_q[0].value.rows(); }
    std::size_t d_head() const { return w_q.empty() ? 0 : w_q[0].value.cols(); }
};

// Gaussian prior association: row i is the rescaled Gaussian kernel
// (1/(sqrt(2 pi) sigma_i)) exp(-(j-i)^2 / (2 sigma_i^2)) over columns j.
Matrix gaussian_prior(const std::vector<double>& sigma, std::size_t n);

struct TasaGraph {
    ag::Node* x_t = nullptr;          // sublayer output before residual/norm, (n x d)
    std::vector<ag::Node*> s;         // per head observation association, (n x n)
    std::vector<ag::Node*> p;         // per head prior association, (n x n)
    std::vector<ag::Node*> sigma;     // per head bandwidths, (n x 1)
};

// Builds the TASA sublayer on the tape. `table` carries the positional
// offsets for the query/key/bandwidth branches; pass nullptr when positions
// were already added to the input upstream.
TasaGraph tasa_graph(ag::Tape& t, ag::Node* x, TasaParams& params, ag::Node* table);

struct TasaOut {
    Matrix x_t;
    std::vector<Matrix> s, p;
    std::vector<Matrix> sigma;
};

// Value-only wrapper over tasa_graph (runs a local tape, no gradients).
TasaOut tasa_forward(const Matrix& x, TasaParams& params, const Matrix& table);

// Temporal association discrepancy: per-position symmetric KL between prior
// and observation, averaged over heads within a layer and then over layers.
// Index order is [layer][head].
Matrix assdis_t(const std::vector<std::vector<Matrix>>& p,
                const std::vector<std::vector<Matrix>>& s);
ag::Node* assdis_t_graph(ag::Tape& t, const std::vector<std::vector<ag::Node*>>& p,
                         const std::vector<std::vector<ag::Node*>>& s);

// Head-diversity triplet penalty. s_bar[l][b][h] is the row-mean observation
// distribution of head h in layer l for batch instance b; partner[b] is the
// contrasting instance b'. Mean over (l, b, h) of the hinge
// [margin + min_{h' != h} KLsym(s_bar_lbh, s_bar_lbh') - KLsym(s_bar_lbh, s_bar_lb'h)]+.
double triplet_reg(const std::vector<std::vector<std::vector<Matrix>>>& s_bar, double margin,
                   const std::vector<std::size_t>& partner);
ag::Node* triplet_reg_graph(ag::Tape& t,
                            const std::vector<std::vector<std::vector<ag::Node*>>>& s_bar,
                            double margin, const std::vector<std::size_t>& partner);

}  // namespace post
