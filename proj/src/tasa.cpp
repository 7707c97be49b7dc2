#include "post/tasa.hpp"

#include <cmath>
#include <string>

#include "post/kernels.hpp"
#include "post/probability.hpp"

namespace post {

Matrix gaussian_prior(const std::vector<double>& sigma, std::size_t n) {
    if (sigma.size() != n) throw DataError("gaussian_prior: one bandwidth per position required");
    for (std::size_t i = 0; i < n; ++i)
        if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i]))
            throw DataError("gaussian_prior: bandwidth must be positive at row " +
                            std::to_string(i));
    Matrix out(n, n);
    kernels::gaussian_prior_rows(sigma.data(), n, out);
    return out;
}

namespace {

// Squared position distance table, constant per window length.
Matrix dist2_table(std::size_t n) {
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = static_cast<double>(j) - static_cast<double>(i);
            d(i, j) = diff * diff;
        }
    return d;
}

// Prior rows from learned bandwidths: the per-row density coefficient
// 1/sigma_i is kept for parity with the closed form; it cancels in the row
// rescale up to rounding.
ag::Node* prior_from_sigma(ag::Tape& t, ag::Node* sigma, ag::Node* dist2) {
    ag::Node* inv_sigma = t.reciprocal(sigma);
    ag::Node* half_inv_s2 = t.affine(t.mul(inv_sigma, inv_sigma), 0.5, 0.0);
    ag::Node* kernel = t.exp(t.affine(t.rows_scale(dist2, half_inv_s2), -1.0, 0.0));
    ag::Node* raw = t.rows_scale(kernel, inv_sigma);
    return t.rows_scale(raw, t.reciprocal(t.row_sum(raw)));
}

}  // namespace

TasaGraph tasa_graph(ag::Tape& t, ag::Node* x, TasaParams& params, ag::Node* table) {
    const std::size_t n = ag::val(x).rows();
    const std::size_t d = ag::val(x).cols();
    const std::size_t heads = params.heads();
    if (heads == 0) throw DataError("tasa: no attention heads");
    if (params.d_model() != d) throw DataError("tasa: input width does not match projections");
    if (d % heads != 0 || params.d_head() != d / heads)
        throw DataError("tasa: head width must be d_model / heads");
    if (table && (ag::val(table).rows() != n || ag::val(table).cols() != d))
        throw DataError("tasa: positional table shape mismatch");

    const double sigma_max = static_cast<double>(n) / 2.0;
    const double inv_sqrt_dq = 1.0 / std::sqrt(static_cast<double>(params.d_head()));

    ag::Node* x_hat = table ? t.add(x, table) : x;
    ag::Node* dist2 = t.constant(dist2_table(n));

    TasaGraph g;
    std::vector<ag::Node*> head_out(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        ag::Node* q = t.matmul(x_hat, t.param(params.w_q[h]));
        ag::Node* k = t.matmul(x_hat, t.param(params.w_k[h]));
        ag::Node* v = t.matmul(x, t.param(params.w_v[h]));
        ag::Node* s = t.row_softmax(t.affine(t.matmul_nt(q, k), inv_sqrt_dq, 0.0));
        ag::check_finite(s, "tasa.S[head " + std::to_string(h) + "]");

        ag::Node* squash = t.logistic(t.matmul(x_hat, t.param(params.w_sigma[h])));
        ag::Node* sigma = t.affine(squash, sigma_max - kSigmaMin, kSigmaMin);
        ag::Node* p = prior_from_sigma(t, sigma, dist2);
        ag::check_finite(p, "tasa.P[head " + std::to_string(h) + "]");

        head_out[h] = t.matmul(s, v);
        g.s.push_back(s);
        g.p.push_back(p);
        g.sigma.push_back(sigma);
    }
    g.x_t = t.matmul(t.concat_cols(head_out), t.param(params.w_o));
    ag::check_finite(g.x_t, "tasa.X_t");
    return g;
}

TasaOut tasa_forward(const Matrix& x, TasaParams& params, const Matrix& table) {
    if (!all_finite(x)) throw NumericError("non-finite values in tensor tasa.X");
    ag::Tape t;
    ag::Node* xn = t.constant(x);
    ag::Node* tn = table.size() ? t.constant(table) : nullptr;
    TasaGraph g = tasa_graph(t, xn, params, tn);
    TasaOut out;
    out.x_t = ag::val(g.x_t);
    for (std::size_t h = 0; h < params.heads(); ++h) {
        out.s.push_back(ag::val(g.s[h]));
        out.p.push_back(ag::val(g.p[h]));
        out.sigma.push_back(ag::val(g.sigma[h]));
    }
    return out;
}

Matrix assdis_t(const std::vector<std::vector<Matrix>>& p,
                const std::vector<std::vector<Matrix>>& s) {
    if (p.empty() || p.size() != s.size()) throw DataError("assdis_t: layer count mismatch");
    const std::size_t n = p[0][0].rows();
    Matrix acc(n, 1);
    for (std::size_t l = 0; l < p.size(); ++l) {
        if (p[l].empty() || p[l].size() != s[l].size())
            throw DataError("assdis_t: head count mismatch at layer " + std::to_string(l));
        Matrix layer(n, 1);
        for (std::size_t h = 0; h < p[l].size(); ++h) {
            const Matrix kl = sym_kl_rows(p[l][h], s[l][h]);
            for (std::size_t i = 0; i < n; ++i) layer(i, 0) += kl(i, 0);
        }
        const double inv_h = 1.0 / static_cast<double>(p[l].size());
        for (std::size_t i = 0; i < n; ++i) acc(i, 0) += layer(i, 0) * inv_h;
    }
    const double inv_l = 1.0 / static_cast<double>(p.size());
    for (std::size_t i = 0; i < n; ++i) acc(i, 0) *= inv_l;
    return acc;
}

ag::Node* assdis_t_graph(ag::Tape& t, const std::vector<std::vector<ag::Node*>>& p,
                         const std::vector<std::vector<ag::Node*>>& s) {
    if (p.empty() || p.size() != s.size()) throw DataError("assdis_t: layer count mismatch");
    ag::Node* acc = nullptr;
    for (std::size_t l = 0; l < p.size(); ++l) {
        ag::Node* layer = nullptr;
        for (std::size_t h = 0; h < p[l].size(); ++h) {
            ag::Node* kl = t.sym_kl_rows(p[l][h], s[l][h], kernels::kEpsFloor);
            layer = layer ? t.add(layer, kl) : kl;
        }
        layer = t.affine(layer, 1.0 / static_cast<double>(p[l].size()), 0.0);
        acc = acc ? t.add(acc, layer) : layer;
    }
    return t.affine(acc, 1.0 / static_cast<double>(p.size()), 0.0);
}

namespace {

void check_triplet_args(std::size_t layers, std::size_t batch, std::size_t heads,
                        const std::vector<std::size_t>& partner) {
    if (layers == 0 || batch == 0) throw DataError("triplet_reg: empty input");
    if (batch < 2) throw DataError("triplet_reg: batch of at least 2 required");
    if (heads < 2) throw DataError("triplet_reg: at least 2 heads required");
    if (partner.size() != batch) throw DataError("triplet_reg: one partner index per instance");
    for (std::size_t b = 0; b < batch; ++b)
        if (partner[b] >= batch || partner[b] == b)
            throw DataError("triplet_reg: partner must be a distinct batch index");
}

}  // namespace

double triplet_reg(const std::vector<std::vector<std::vector<Matrix>>>& s_bar, double margin,
                   const std::vector<std::size_t>& partner) {
    const std::size_t layers = s_bar.size();
    const std::size_t batch = layers ? s_bar[0].size() : 0;
    const std::size_t heads = batch ? s_bar[0][0].size() : 0;
    check_triplet_args(layers, batch, heads, partner);

    auto as_vec = [](const Matrix& m) {
        return std::vector<double>(m.data(), m.data() + m.size());
    };
    double acc = 0.0;
    std::size_t terms = 0;
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t h = 0; h < heads; ++h) {
                double kl_min = 0.0;
                bool first = true;
                for (std::size_t h2 = 0; h2 < heads; ++h2) {
                    if (h2 == h) continue;
                    const double kl =
                        sym_kl(as_vec(s_bar[l][b][h]), as_vec(s_bar[l][b][h2]));
                    if (first || kl < kl_min) kl_min = kl;
                    first = false;
                }
                const double kl_cross =
                    sym_kl(as_vec(s_bar[l][b][h]), as_vec(s_bar[l][partner[b]][h]));
                const double hinge = margin + kl_min - kl_cross;
                acc += hinge > 0.0 ? hinge : 0.0;
                ++terms;
            }
    return acc / static_cast<double>(terms);
}

ag::Node* triplet_reg_graph(ag::Tape& t,
                            const std::vector<std::vector<std::vector<ag::Node*>>>& s_bar,
                            double margin, const std::vector<std::size_t>& partner) {
    const std::size_t layers = s_bar.size();
    const std::size_t batch = layers ? s_bar[0].size() : 0;
    const std::size_t heads = batch ? s_bar[0][0].size() : 0;
    check_triplet_args(layers, batch, heads, partner);

    ag::Node* acc = nullptr;
    std::size_t terms = 0;
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t h = 0; h < heads; ++h) {
                // The nearest contrasting head is selected by value; gradient
                // then flows through the selected branch only.
                ag::Node* kl_min = nullptr;
                for (std::size_t h2 = 0; h2 < heads; ++h2) {
                    if (h2 == h) continue;
                    ag::Node* kl =
                        t.sym_kl_vec(s_bar[l][b][h], s_bar[l][b][h2], kernels::kEpsFloor);
                    if (!kl_min || ag::scalar_value(kl) < ag::scalar_value(kl_min)) kl_min = kl;
                }
                ag::Node* kl_cross =
                    t.sym_kl_vec(s_bar[l][b][h], s_bar[l][partner[b]][h], kernels::kEpsFloor);
                ag::Node* hinge =
                    t.relu(t.affine(t.sub(kl_min, kl_cross), 1.0, margin));
                acc = acc ? t.add(acc, hinge) : hinge;
                ++terms;
            }
    return t.affine(acc, 1.0 / static_cast<double>(terms), 0.0);
}

}  // namespace post
