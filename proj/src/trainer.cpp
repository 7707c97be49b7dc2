#include "post/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "post/kernels.hpp"
#include "post/structreg.hpp"

namespace post {

using json = nlohmann::json;

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Graph: return "graph";
        case Phase::Minimize: return "minimize";
        case Phase::Maximize: return "maximize";
    }
    return "?";
}

std::vector<NamedParam> phase_update_set(ModelState& state, Phase phase) {
    std::vector<NamedParam> out;
    if (phase == Phase::Graph) return graph_params(state);
    const bool with_bandwidth = phase == Phase::Maximize;
    for (NamedParam np : collect_params(state)) {
        const bool is_g = np.name.size() >= 2 && np.name.compare(np.name.size() - 2, 2, ".g") == 0;
        const bool is_sigma = np.name.find("w_sigma") != std::string::npos;
        const bool is_tau = np.name.find("w_tau") != std::string::npos;
        if (is_g) continue;
        if (!with_bandwidth && (is_sigma || is_tau)) continue;
        out.push_back(np);
    }
    return out;
}

void set_trainable(ModelState& state, const std::vector<NamedParam>& update_set) {
    for (NamedParam np : collect_params(state)) {
        np.p->trainable = false;
        np.p->grad = Matrix(np.p->value.rows(), np.p->value.cols());
    }
    for (const NamedParam& np : update_set) np.p->trainable = true;
}

namespace {

// Sum of squared entries of (recon - window).
ag::Node* window_rec_loss(ag::Tape& t, ag::Node* recon, const Matrix& window) {
    ag::Node* diff = t.sub(recon, t.constant(window));
    return t.sum_all(t.mul(diff, diff));
}

std::vector<std::size_t> sample_partners(std::size_t batch, Rng& rng) {
    std::vector<std::size_t> partner(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t p = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(batch) - 2));
        if (p >= b) ++p;
        partner[b] = p;
    }
    return partner;
}

std::vector<ag::Node*> detach_all(ag::Tape& t, const std::vector<ag::Node*>& xs) {
    std::vector<ag::Node*> out;
    out.reserve(xs.size());
    for (ag::Node* x : xs) out.push_back(t.detach(x));
    return out;
}

std::vector<std::vector<ag::Node*>> detach_all(ag::Tape& t,
                                               const std::vector<std::vector<ag::Node*>>& xs) {
    std::vector<std::vector<ag::Node*>> out;
    out.reserve(xs.size());
    for (const auto& v : xs) out.push_back(detach_all(t, v));
    return out;
}

struct BatchGraph {
    ag::Node* loss = nullptr;
    PhaseStats stats;
};

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Assembles the phase loss over the batch on one tape.
BatchGraph build_phase_loss(ag::Tape& t, ModelState& state,
                            const std::vector<const Matrix*>& batch, const TrainConfig& cfg,
                            Phase phase, const std::vector<std::size_t>& partner) {
    const bool saga_on = !state.cfg.disable_saga;
    const bool spatial_term = saga_on && !cfg.disable_assdis_s && cfg.beta != 0.0;
    const std::size_t nb = batch.size();

    std::vector<ag::Node*> rec_terms, adt_terms, ads_terms;
    std::vector<std::vector<std::vector<ag::Node*>>> s_bar;  // [layer][window][head]
    Matrix gram_mean;  // mean channel Gram over the batch, for the smoothness term
    std::vector<ag::Node*> g_tilde_nodes;

    for (std::size_t b = 0; b < nb; ++b) {
        const Matrix& w = *batch[b];
        ForwardGraph fg = model_forward(t, w, state);
        rec_terms.push_back(window_rec_loss(t, fg.recon, w));

        if (phase == Phase::Minimize) {
            adt_terms.push_back(t.mean_all(assdis_t_graph(t, detach_all(t, fg.p), fg.s)));
            if (spatial_term)
                ads_terms.push_back(t.mean_all(assdis_s_graph(t, detach_all(t, fg.g_hat), fg.a)));
            if (cfg.xi != 0.0) {
                if (s_bar.empty()) s_bar.resize(fg.s.size());
                for (std::size_t l = 0; l < fg.s.size(); ++l) {
                    std::vector<ag::Node*> heads;
                    for (ag::Node* s : fg.s[l]) heads.push_back(t.col_mean_vec(s));
                    s_bar[l].push_back(std::move(heads));
                }
            }
        } else if (phase == Phase::Maximize) {
            adt_terms.push_back(t.mean_all(assdis_t_graph(t, fg.p, detach_all(t, fg.s))));
            if (spatial_term)
                ads_terms.push_back(t.mean_all(assdis_s_graph(t, fg.g_hat, detach_all(t, fg.a))));
        } else {  // Graph
            if (spatial_term)
                ads_terms.push_back(t.mean_all(assdis_s_graph(t, fg.g_hat, detach_all(t, fg.a))));
            if (saga_on && cfg.gamma != 0.0) {
                Matrix c(w.cols(), w.cols());
                kernels::matmul_tn(w, w, c);
                if (gram_mean.size() == 0) gram_mean = Matrix(w.cols(), w.cols());
                for (std::size_t i = 0; i < c.size(); ++i)
                    gram_mean.data()[i] += c.data()[i] / static_cast<double>(nb);
            }
            if (saga_on && g_tilde_nodes.empty()) g_tilde_nodes = fg.g_tilde;
        }
    }

    BatchGraph bg;
    const double inv_nb = 1.0 / static_cast<double>(nb);
    ag::Node* rec = nullptr;
    for (ag::Node* r : rec_terms) rec = rec ? t.add(rec, r) : r;
    rec = t.affine(rec, inv_nb, 0.0);
    bg.stats.rec = ag::scalar_value(rec);
    ag::Node* loss = rec;

    auto mean_terms = [&](std::vector<ag::Node*>& terms) -> ag::Node* {
        ag::Node* acc = nullptr;
        for (ag::Node* x : terms) acc = acc ? t.add(acc, x) : x;
        return t.affine(acc, inv_nb, 0.0);
    };

    if (!adt_terms.empty()) {
        ag::Node* adt = mean_terms(adt_terms);
        bg.stats.adt = ag::scalar_value(adt);
        const double sign = phase == Phase::Minimize ? -cfg.alpha : cfg.alpha;
        loss = t.add(loss, t.affine(adt, sign, 0.0));
    }
    if (!ads_terms.empty()) {
        ag::Node* ads = mean_terms(ads_terms);
        bg.stats.ads = ag::scalar_value(ads);
        const double sign = phase == Phase::Minimize ? -cfg.beta : cfg.beta;
        loss = t.add(loss, t.affine(ads, sign, 0.0));
    }
    if (phase == Phase::Minimize && cfg.xi != 0.0 && !s_bar.empty()) {
        ag::Node* tr = triplet_reg_graph(t, s_bar, cfg.margin, partner);
        bg.stats.triplet = ag::scalar_value(tr);
        loss = t.add(loss, t.affine(tr, cfg.xi, 0.0));
    }
    if (phase == Phase::Graph && !state.cfg.disable_saga) {
        if (cfg.gamma != 0.0 && gram_mean.size() != 0) {
            ag::Node* sm = nullptr;
            {
                ag::Node* gram = t.constant(gram_mean);
                ag::Node* acc = nullptr;
                for (ag::Node* gt : g_tilde_nodes) {
                    ag::Node* term = t.sum_all(t.mul(gram, graph_ops::laplacian(t, gt)));
                    acc = acc ? t.add(acc, term) : term;
                }
                sm = t.affine(acc, 1.0 / static_cast<double>(g_tilde_nodes.size()), 0.0);
            }
            bg.stats.smooth = ag::scalar_value(sm);
            loss = t.add(loss, t.affine(sm, cfg.gamma, 0.0));
        }
        if (cfg.l1_penalty_mode && cfg.lambda != 0.0) {
            ag::Node* l1 = nullptr;
            for (ag::Node* gt : g_tilde_nodes) {
                ag::Node* s = t.sum_all(gt);  // entries are in (0,1): l1 = sum
                l1 = l1 ? t.add(l1, s) : s;
            }
            loss = t.add(loss, t.affine(l1, cfg.lambda, 0.0));
        }
    }

    bg.loss = loss;
    bg.stats.total = ag::scalar_value(loss);
    return bg;
}

void adam_step(ag::Param& p, double lr, double clip_scale) {
    if (p.m.size() == 0) {
        p.m = Matrix(p.value.rows(), p.value.cols());
        p.v = Matrix(p.value.rows(), p.value.cols());
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    p.step += 1;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(p.step));
    double* val = p.value.data();
    double* g = p.grad.data();
    double* m = p.m.data();
    double* v = p.v.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double gi = g[i] * clip_scale;
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double grad_global_norm(const std::vector<NamedParam>& set) {
    double acc = 0.0;
    for (const NamedParam& np : set)
        for (std::size_t i = 0; i < np.p->grad.size(); ++i) {
            const double g = np.p->grad.data()[i];
            acc += g * g;
        }
    return std::sqrt(acc);
}

}  // namespace

PhaseStats run_phase(ModelState& state, const std::vector<const Matrix*>& batch,
                     const TrainConfig& cfg, Phase phase, Rng& rng, bool apply_update) {
    if (batch.size() < 2) throw DataError("run_phase: batch of at least 2 windows required");
    const std::vector<NamedParam> update_set = phase_update_set(state, phase);
    set_trainable(state, update_set);

    std::vector<std::size_t> partner;
    if (phase == Phase::Minimize && cfg.xi != 0.0) partner = sample_partners(batch.size(), rng);

    ag::Tape t;
    BatchGraph bg = build_phase_loss(t, state, batch, cfg, phase, partner);
    if (!std::isfinite(bg.stats.total))
        throw NumericError(std::string("non-finite loss in phase ") + phase_name(phase));
    t.backward(bg.loss, /*release=*/true);

    bg.stats.grad_norm = grad_global_norm(update_set);
    if (apply_update) {
        double scale = 1.0;
        if (cfg.clip_norm > 0.0 && bg.stats.grad_norm > cfg.clip_norm) {
            scale = cfg.clip_norm / bg.stats.grad_norm;
            bg.stats.clipped = true;
        }
        const double lr =
            phase == Phase::Graph && cfg.graph_lr > 0.0 ? cfg.graph_lr : cfg.lr;
        for (const NamedParam& np : update_set) adam_step(*np.p, lr, scale);
        if (phase == Phase::Graph && !cfg.l1_penalty_mode && cfg.lambda > 0.0) {
            for (const NamedParam& np : graph_params(state)) {
                ProxResult pr = prox_sigmoid_l1(np.p->value, cfg.lambda, cfg.prox_max_iters,
                                                cfg.prox_tol);
                np.p->value = std::move(pr.logits);
            }
        }
    }
    return bg.stats;
}

void init_graph_logits(ModelState& state, const Matrix& train_series, const TrainConfig& cfg) {
    if (state.cfg.disable_saga) return;
    const Matrix g = cfg.identity_g_init
                         ? identity_init(state.cfg.d0, cfg.c0)
                         : knn_init(train_series, static_cast<std::size_t>(cfg.knn_k), cfg.c0);
    for (const NamedParam& np : graph_params(state)) np.p->value = g;
}

double mean_reconstruction_loss(ModelState& state, const std::vector<Matrix>& windows) {
    if (windows.empty()) return 0.0;
    double acc = 0.0;
    for (const Matrix& w : windows) {
        const ForwardOut fo = model_infer(w, state);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = fo.recon.data()[i] - w.data()[i];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(windows.size());
}

namespace {

struct EpochDiagnostics {
    double mean_adt = 0.0, mean_ads = 0.0, g_l1 = 0.0;
};

EpochDiagnostics epoch_diagnostics(ModelState& state, const std::vector<Matrix>& windows) {
    EpochDiagnostics d;
    std::vector<double> adt, ads;
    for (const Matrix& w : windows) {
        ForwardOut fo = model_infer(w, state);
        double a = 0.0;
        for (std::size_t i = 0; i < fo.assdis_t.size(); ++i) a += fo.assdis_t.data()[i];
        adt.push_back(a / static_cast<double>(fo.assdis_t.size()));
        if (fo.assdis_s.size()) {
            double s = 0.0;
            for (std::size_t i = 0; i < fo.assdis_s.size(); ++i) s += fo.assdis_s.data()[i];
            ads.push_back(s / static_cast<double>(fo.assdis_s.size()));
        }
    }
    d.mean_adt = mean_of(adt);
    d.mean_ads = mean_of(ads);
    for (const NamedParam& np : graph_params(state))
        for (std::size_t i = 0; i < np.p->value.size(); ++i)
            d.g_l1 += 1.0 / (1.0 + std::exp(-np.p->value.data()[i]));
    return d;
}

}  // namespace

TrainLog fit(ModelState& state, const std::vector<Matrix>& train_windows,
             const std::vector<Matrix>& val_windows, const TrainConfig& cfg,
             std::ostream* log_stream) {
    if (cfg.epochs < 0) throw DataError("fit: negative epoch count");
    if (cfg.batch < 2) throw DataError("fit: batch size of at least 2 required");
    if (cfg.inner_iters < 1) throw DataError("fit: inner_iters must be positive");
    TrainLog log;
    if (cfg.epochs == 0) return log;  // nothing to do; state untouched
    if (train_windows.size() < 2) throw DataError("fit: need at least 2 training windows");

    Rng rng(cfg.seed);
    double best_val = std::numeric_limits<double>::infinity();
    int stall = 0;

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Seeded shuffle keeps runs reproducible.
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        std::vector<std::vector<const Matrix*>> batches;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
            std::vector<const Matrix*> b;
            for (std::size_t i = at; i < order.size() && i < at + static_cast<std::size_t>(cfg.batch); ++i)
                b.push_back(&train_windows[order[i]]);
            if (b.size() >= 2)
                batches.push_back(std::move(b));
            else
                log.dropped_windows += b.size();
        }
        if (batches.empty()) throw DataError("fit: no usable batches");

        const bool run_graph_phase = !state.cfg.disable_saga && !cfg.freeze_g;

        std::vector<double> epoch_rec;
        for (const auto& b : batches) {
            if (run_graph_phase) run_phase(state, b, cfg, Phase::Graph, rng, true);
            for (int it = 0; it < cfg.inner_iters; ++it) {
                PhaseStats mn = run_phase(state, b, cfg, Phase::Minimize, rng, true);
                run_phase(state, b, cfg, Phase::Maximize, rng, true);
                epoch_rec.push_back(mn.rec);
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_rec = mean_of(epoch_rec);
        rec.val_rec = mean_reconstruction_loss(state, val_windows);
        const EpochDiagnostics diag = epoch_diagnostics(state, train_windows);
        rec.mean_assdis_t = diag.mean_adt;
        rec.mean_assdis_s = diag.mean_ads;
        rec.g_l1 = diag.g_l1;
        log.epochs.push_back(rec);

        if (log_stream) {
            json j{{"epoch", rec.epoch},
                   {"train_rec", rec.train_rec},
                   {"val_rec", rec.val_rec},
                   {"mean_assdis_t", rec.mean_assdis_t},
                   {"mean_assdis_s", rec.mean_assdis_s},
                   {"g_l1", rec.g_l1}};
            (*log_stream) << j.dump() << "\n";
        }

        if (!val_windows.empty()) {
            if (rec.val_rec < best_val) {
                best_val = rec.val_rec;
                stall = 0;
            } else if (++stall >= cfg.patience) {
                log.early_stopped_epoch = epoch;
                break;
            }
        }
    }
    return log;
}

// ---- verification surface ----

namespace {

ag::Node* build_loss_term(ag::Tape& t, ModelState& state, const std::vector<const Matrix*>& batch,
                          const TrainConfig& cfg, LossTerm term,
                          const std::vector<std::size_t>& partner) {
    const std::size_t nb = batch.size();
    const double inv_nb = 1.0 / static_cast<double>(nb);
    std::vector<ag::Node*> terms;
    std::vector<std::vector<std::vector<ag::Node*>>> s_bar;
    Matrix gram_mean;
    std::vector<ag::Node*> g_tilde_nodes;

    for (std::size_t b = 0; b < nb; ++b) {
        const Matrix& w = *batch[b];
        ForwardGraph fg = model_forward(t, w, state);
        switch (term) {
            case LossTerm::Rec:
                terms.push_back(window_rec_loss(t, fg.recon, w));
                break;
            case LossTerm::AssDisT:
                terms.push_back(t.mean_all(assdis_t_graph(t, fg.p, fg.s)));
                break;
            case LossTerm::AssDisS:
                terms.push_back(t.mean_all(assdis_s_graph(t, fg.g_hat, fg.a)));
                break;
            case LossTerm::Smooth: {
                Matrix c(w.cols(), w.cols());
                kernels::matmul_tn(w, w, c);
                if (gram_mean.size() == 0) gram_mean = Matrix(w.cols(), w.cols());
                for (std::size_t i = 0; i < c.size(); ++i)
                    gram_mean.data()[i] += c.data()[i] * inv_nb;
                if (g_tilde_nodes.empty()) g_tilde_nodes = fg.g_tilde;
                break;
            }
            case LossTerm::Triplet: {
                if (s_bar.empty()) s_bar.resize(fg.s.size());
                for (std::size_t l = 0; l < fg.s.size(); ++l) {
                    std::vector<ag::Node*> heads;
                    for (ag::Node* s : fg.s[l]) heads.push_back(t.col_mean_vec(s));
                    s_bar[l].push_back(std::move(heads));
                }
                break;
            }
        }
    }

    switch (term) {
        case LossTerm::Rec: {
            ag::Node* acc = nullptr;
            for (ag::Node* x : terms) acc = acc ? t.add(acc, x) : x;
            return t.affine(acc, inv_nb, 0.0);
        }
        case LossTerm::AssDisT: {
            ag::Node* acc = nullptr;
            for (ag::Node* x : terms) acc = acc ? t.add(acc, x) : x;
            return t.affine(acc, cfg.alpha * inv_nb, 0.0);
        }
        case LossTerm::AssDisS: {
            ag::Node* acc = nullptr;
            for (ag::Node* x : terms) acc = acc ? t.add(acc, x) : x;
            return t.affine(acc, cfg.beta * inv_nb, 0.0);
        }
        case LossTerm::Smooth: {
            ag::Node* gram = t.constant(gram_mean);
            ag::Node* acc = nullptr;
            for (ag::Node* gt : g_tilde_nodes) {
                ag::Node* sm = t.sum_all(t.mul(gram, graph_ops::laplacian(t, gt)));
                acc = acc ? t.add(acc, sm) : sm;
            }
            return t.affine(acc, cfg.gamma / static_cast<double>(g_tilde_nodes.size()), 0.0);
        }
        case LossTerm::Triplet:
            return t.affine(triplet_reg_graph(t, s_bar, cfg.margin, partner), cfg.xi, 0.0);
    }
    throw DataError("build_loss_term: unknown term");
}

}  // namespace

double loss_term_value(ModelState& state, const std::vector<const Matrix*>& batch,
                       const TrainConfig& cfg, LossTerm term,
                       const std::vector<std::size_t>& partner) {
    set_trainable(state, {});
    ag::Tape t;
    return ag::scalar_value(build_loss_term(t, state, batch, cfg, term, partner));
}

void loss_term_backward(ModelState& state, const std::vector<const Matrix*>& batch,
                        const TrainConfig& cfg, LossTerm term,
                        const std::vector<std::size_t>& partner) {
    set_trainable(state, collect_params(state));
    ag::Tape t;
    ag::Node* loss = build_loss_term(t, state, batch, cfg, term, partner);
    t.backward(loss);
}

// ---- checkpointing ----

namespace {

constexpr char kMagic[8] = {'P', 'O', 'S', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const ModelConfig& m, const TrainConfig& c) {
    return json{{"model",
                 {{"d0", m.d0},
                  {"d_model", m.d_model},
                  {"heads", m.heads},
                  {"layers", m.layers},
                  {"window", m.window},
                  {"d_ff", m.d_ff},
                  {"disable_saga", m.disable_saga},
                  {"ape_on_input", m.ape_on_input}}},
                {"train",
                 {{"alpha", c.alpha},         {"beta", c.beta},
                  {"gamma", c.gamma},         {"xi", c.xi},
                  {"lambda", c.lambda},       {"margin", c.margin},
                  {"lr", c.lr},               {"graph_lr", c.graph_lr},
                  {"clip_norm", c.clip_norm},
                  {"inner_iters", c.inner_iters}, {"epochs", c.epochs},
                  {"batch", c.batch},         {"patience", c.patience},
                  {"prox_max_iters", c.prox_max_iters}, {"prox_tol", c.prox_tol},
                  {"knn_k", c.knn_k},         {"c0", c.c0},
                  {"disable_assdis_s", c.disable_assdis_s}, {"freeze_g", c.freeze_g},
                  {"identity_g_init", c.identity_g_init},
                  {"l1_penalty_mode", c.l1_penalty_mode},
                  {"seed", c.seed}}}};
}

void config_from_json(const json& j, ModelConfig& m, TrainConfig& c) {
    const json& jm = j.at("model");
    m.d0 = jm.at("d0");
    m.d_model = jm.at("d_model");
    m.heads = jm.at("heads");
    m.layers = jm.at("layers");
    m.window = jm.at("window");
    m.d_ff = jm.at("d_ff");
    m.disable_saga = jm.at("disable_saga");
    m.ape_on_input = jm.at("ape_on_input");
    const json& jt = j.at("train");
    c.alpha = jt.at("alpha");
    c.beta = jt.at("beta");
    c.gamma = jt.at("gamma");
    c.xi = jt.at("xi");
    c.lambda = jt.at("lambda");
    c.margin = jt.at("margin");
    c.lr = jt.at("lr");
    c.graph_lr = jt.at("graph_lr");
    c.clip_norm = jt.at("clip_norm");
    c.inner_iters = jt.at("inner_iters");
    c.epochs = jt.at("epochs");
    c.batch = jt.at("batch");
    c.patience = jt.at("patience");
    c.prox_max_iters = jt.at("prox_max_iters");
    c.prox_tol = jt.at("prox_tol");
    c.knn_k = jt.at("knn_k");
    c.c0 = jt.at("c0");
    c.disable_assdis_s = jt.at("disable_assdis_s");
    c.freeze_g = jt.at("freeze_g");
    c.identity_g_init = jt.at("identity_g_init");
    c.l1_penalty_mode = jt.at("l1_penalty_mode");
    c.seed = jt.at("seed");
}

void append_tensor(std::string& payload, json& dir, const std::string& name, const char* kind,
                   const Matrix& m) {
    json entry{{"name", name},
               {"kind", kind},
               {"rows", m.rows()},
               {"cols", m.cols()},
               {"offset", payload.size()}};
    dir.push_back(entry);
    const char* bytes = reinterpret_cast<const char*>(m.data());
    payload.append(bytes, m.size() * sizeof(double));
}

Matrix read_tensor(const std::string& payload, const json& entry) {
    const std::size_t rows = entry.at("rows");
    const std::size_t cols = entry.at("cols");
    const std::size_t offset = entry.at("offset");
    const std::size_t bytes = rows * cols * sizeof(double);
    if (offset + bytes > payload.size())
        throw DataError("checkpoint: tensor payload out of range for " +
                        entry.at("name").get<std::string>());
    Matrix m(rows, cols);
    std::memcpy(m.data(), payload.data() + offset, bytes);
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, ModelState& state, const TrainConfig& cfg) {
    json header = config_to_json(state.cfg, cfg);
    header["version"] = kVersion;
    json dir = json::array();
    std::string payload;
    json steps = json::object();
    for (const NamedParam& np : collect_params(state)) {
        append_tensor(payload, dir, np.name, "value", np.p->value);
        if (np.p->m.size()) {
            append_tensor(payload, dir, np.name, "adam_m", np.p->m);
            append_tensor(payload, dir, np.name, "adam_v", np.p->v);
        }
        steps[np.name] = np.p->step;
    }
    header["tensors"] = dir;
    header["adam_steps"] = steps;
    const std::string head = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("checkpoint: cannot open for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    const std::uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const std::uint64_t hlen = head.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw DataError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("checkpoint: bad magic (not a checkpoint file): " + path);
    std::uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (!f || ver != kVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(ver));
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f || hlen == 0 || hlen > (1ull << 30)) throw DataError("checkpoint: corrupt header length");
    std::string head(hlen, '\0');
    f.read(head.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw DataError("checkpoint: truncated header");
    std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    json header;
    try {
        header = json::parse(head);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: corrupt header json: ") + e.what());
    }

    Checkpoint ck;
    ModelConfig mc;
    config_from_json(header, mc, ck.train);
    Rng rng(0);
    ck.state = build_model(mc, rng);

    std::size_t expected_bytes = 0;
    for (const json& entry : header.at("tensors"))
        expected_bytes += entry.at("rows").get<std::size_t>() *
                          entry.at("cols").get<std::size_t>() * sizeof(double);
    if (payload.size() != expected_bytes)
        throw DataError("checkpoint: corrupt payload (expected " +
                        std::to_string(expected_bytes) + " bytes, found " +
                        std::to_string(payload.size()) + ")");

    std::vector<NamedParam> params = collect_params(ck.state);
    auto find = [&params](const std::string& name) -> ag::Param* {
        for (const NamedParam& np : params)
            if (np.name == name) return np.p;
        return nullptr;
    };
    std::size_t restored = 0;
    for (const json& entry : header.at("tensors")) {
        const std::string name = entry.at("name");
        const std::string kind = entry.at("kind");
        ag::Param* p = find(name);
        if (!p) throw DataError("checkpoint: unknown tensor " + name);
        Matrix m = read_tensor(payload, entry);
        if (kind == "value") {
            if (!m.same_shape(p->value))
                throw DataError("checkpoint: shape mismatch for tensor " + name);
            p->value = std::move(m);
            ++restored;
        } else if (kind == "adam_m") {
            p->m = std::move(m);
        } else if (kind == "adam_v") {
            p->v = std::move(m);
        } else {
            throw DataError("checkpoint: unknown tensor kind " + kind);
        }
    }
    if (restored != params.size())
        throw DataError("checkpoint: missing tensors (restored " + std::to_string(restored) +
                        " of " + std::to_string(params.size()) + ")");
    const json& steps = header.at("adam_steps");
    for (const NamedParam& np : params)
        if (steps.contains(np.name)) np.p->step = steps.at(np.name).get<long>();
    return ck;
}

}  // namespace post
