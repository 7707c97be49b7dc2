#include "post/model.hpp"

#include <cmath>

#include "post/probability.hpp"

namespace post {

namespace {

constexpr double kLnEps = 1e-5;

Matrix xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    return random_normal(rows, cols, rng, scale);
}

ag::Param make_param(std::string name, Matrix value) {
    ag::Param p;
    p.name = std::move(name);
    p.value = std::move(value);
    return p;
}

// LayerNorm over the feature axis with learnable gain/offset vectors.
ag::Node* layernorm(ag::Tape& t, ag::Node* x, ag::Param& gain, ag::Param& offset) {
    const std::size_t d = ag::val(x).cols();
    const std::size_t n = ag::val(x).rows();
    ag::Node* mu = t.row_mean(x);
    ag::Node* centered = t.sub(x, t.broadcast_col(mu, d));
    ag::Node* var = t.row_mean(t.mul(centered, centered));
    ag::Node* inv_std = t.reciprocal(t.sqrt(t.affine(var, 1.0, kLnEps)));
    ag::Node* unit = t.rows_scale(centered, inv_std);
    return t.add(t.mul(unit, t.broadcast_row(t.param(gain), n)),
                 t.broadcast_row(t.param(offset), n));
}

ag::Node* feed_forward(ag::Tape& t, ag::Node* x, LayerState& layer) {
    const std::size_t n = ag::val(x).rows();
    ag::Node* hidden = t.gelu(t.add(t.matmul(x, t.param(layer.ffn_w1)),
                                    t.broadcast_row(t.param(layer.ffn_b1), n)));
    return t.add(t.matmul(hidden, t.param(layer.ffn_w2)),
                 t.broadcast_row(t.param(layer.ffn_b2), n));
}

}  // namespace

ModelState build_model(const ModelConfig& cfg, Rng& rng) {
    if (cfg.d0 < 1) throw DataError("build_model: channel count required");
    if (cfg.layers < 1) throw DataError("build_model: at least one layer required");
    if (cfg.heads < 1 || cfg.d_model % cfg.heads != 0)
        throw DataError("build_model: d_model must be a multiple of heads");
    if (cfg.window < 1) throw DataError("build_model: window length required");
    if (cfg.d_model < 2 || cfg.d_model % 2 != 0)
        throw DataError("build_model: d_model must be even");

    ModelState st;
    st.cfg = cfg;
    const std::size_t d = cfg.d_model, d0 = cfg.d0, n = cfg.window;
    const std::size_t dq = d / cfg.heads, dff = cfg.d_ff_eff();

    st.embed = make_param("embed", xavier(d0, d, rng));
    st.w_out = make_param("out", xavier(d, d0, rng));
    st.pos_table = sinusoidal_table(n, d);

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        LayerState layer;
        if (!cfg.disable_saga) {
            layer.saga.w_h = make_param(pre + "saga.w_h", xavier(d, d0, rng));
            layer.saga.theta = make_param(pre + "saga.theta", random_normal(2 * n, 1, rng, 0.1));
            layer.saga.w_s = make_param(pre + "saga.w_s", xavier(d0, d, rng));
            layer.saga.w_tau = make_param(pre + "saga.w_tau", random_normal(n, 1, rng, 0.1));
            layer.g = make_param(pre + "g", identity_init(d0));
            layer.ln_saga_g = make_param(pre + "ln_saga.gain", Matrix(d, 1, 1.0));
            layer.ln_saga_b = make_param(pre + "ln_saga.offset", Matrix(d, 1, 0.0));
        }
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            const std::string hp = pre + "tasa.h" + std::to_string(h) + ".";
            layer.tasa.w_q.push_back(make_param(hp + "w_q", xavier(d, dq, rng)));
            layer.tasa.w_k.push_back(make_param(hp + "w_k", xavier(d, dq, rng)));
            layer.tasa.w_v.push_back(make_param(hp + "w_v", xavier(d, dq, rng)));
            layer.tasa.w_sigma.push_back(make_param(hp + "w_sigma", random_normal(d, 1, rng, 0.1)));
        }
        layer.tasa.w_o = make_param(pre + "tasa.w_o", xavier(d, d, rng));
        layer.ln_tasa_g = make_param(pre + "ln_tasa.gain", Matrix(d, 1, 1.0));
        layer.ln_tasa_b = make_param(pre + "ln_tasa.offset", Matrix(d, 1, 0.0));
        layer.ffn_w1 = make_param(pre + "ffn.w1", xavier(d, dff, rng));
        layer.ffn_b1 = make_param(pre + "ffn.b1", Matrix(dff, 1, 0.0));
        layer.ffn_w2 = make_param(pre + "ffn.w2", xavier(dff, d, rng));
        layer.ffn_b2 = make_param(pre + "ffn.b2", Matrix(d, 1, 0.0));
        layer.ln_ffn_g = make_param(pre + "ln_ffn.gain", Matrix(d, 1, 1.0));
        layer.ln_ffn_b = make_param(pre + "ln_ffn.offset", Matrix(d, 1, 0.0));
        st.layers.push_back(std::move(layer));
    }
    return st;
}

std::vector<NamedParam> collect_params(ModelState& state) {
    std::vector<NamedParam> out;
    auto push = [&out](ag::Param& p) { out.push_back({p.name, &p}); };
    push(state.embed);
    push(state.w_out);
    for (LayerState& l : state.layers) {
        if (!state.cfg.disable_saga) {
            push(l.saga.w_h);
            push(l.saga.theta);
            push(l.saga.w_s);
            push(l.saga.w_tau);
            push(l.g);
            push(l.ln_saga_g);
            push(l.ln_saga_b);
        }
        for (std::size_t h = 0; h < l.tasa.heads(); ++h) {
            push(l.tasa.w_q[h]);
            push(l.tasa.w_k[h]);
            push(l.tasa.w_v[h]);
            push(l.tasa.w_sigma[h]);
        }
        push(l.tasa.w_o);
        push(l.ln_tasa_g);
        push(l.ln_tasa_b);
        push(l.ffn_w1);
        push(l.ffn_b1);
        push(l.ffn_w2);
        push(l.ffn_b2);
        push(l.ln_ffn_g);
        push(l.ln_ffn_b);
    }
    return out;
}

std::vector<NamedParam> graph_params(ModelState& state) {
    std::vector<NamedParam> out;
    if (state.cfg.disable_saga) return out;
    for (LayerState& l : state.layers) out.push_back({l.g.name, &l.g});
    return out;
}

ForwardGraph model_forward(ag::Tape& t, const Matrix& window, ModelState& state) {
    const ModelConfig& cfg = state.cfg;
    if (window.rows() != cfg.window || window.cols() != cfg.d0)
        throw DataError("model_forward: window shape does not match model");

    ForwardGraph fg;
    ag::Node* input = t.constant(window);
    ag::Node* x = t.matmul(input, t.param(state.embed));
    ag::Node* table = t.constant(state.pos_table);
    if (cfg.ape_on_input) x = t.add(x, table);

    for (LayerState& layer : state.layers) {
        if (!cfg.disable_saga) {
            SagaGraph sg = saga_graph(t, x, t.param(layer.g), layer.saga);
            x = layernorm(t, t.add(x, sg.x_s), layer.ln_saga_g, layer.ln_saga_b);
            fg.a.push_back(sg.a);
            fg.a_post.push_back(sg.a_post);
            fg.g_hat.push_back(sg.g_hat);
            fg.tau.push_back(sg.tau);
            fg.g_tilde.push_back(t.logistic(t.param(layer.g)));
        }
        TasaGraph tg = tasa_graph(t, x, layer.tasa, cfg.ape_on_input ? nullptr : table);
        x = layernorm(t, t.add(x, tg.x_t), layer.ln_tasa_g, layer.ln_tasa_b);
        fg.s.push_back(tg.s);
        fg.p.push_back(tg.p);
        fg.sigma.push_back(tg.sigma);

        x = layernorm(t, t.add(x, feed_forward(t, x, layer)), layer.ln_ffn_g, layer.ln_ffn_b);
    }
    fg.recon = t.matmul(x, t.param(state.w_out));
    ag::check_finite(fg.recon, "model.recon");
    return fg;
}

ForwardOut model_infer(const Matrix& window, ModelState& state) {
    ag::Tape t;
    ForwardGraph fg = model_forward(t, window, state);
    ForwardOut out;
    out.recon = ag::val(fg.recon);
    out.assdis_t = ag::val(assdis_t_graph(t, fg.p, fg.s));
    if (!state.cfg.disable_saga) out.assdis_s = ag::val(assdis_s_graph(t, fg.g_hat, fg.a));
    out.s.resize(fg.s.size());
    out.p.resize(fg.p.size());
    for (std::size_t l = 0; l < fg.s.size(); ++l) {
        for (ag::Node* n : fg.s[l]) out.s[l].push_back(ag::val(n));
        for (ag::Node* n : fg.p[l]) out.p[l].push_back(ag::val(n));
    }
    for (ag::Node* n : fg.a) out.a.push_back(ag::val(n));
    for (ag::Node* n : fg.g_hat) out.g_hat.push_back(ag::val(n));
    return out;
}

}  // namespace post
