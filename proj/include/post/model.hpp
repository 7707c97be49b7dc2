#pragma once

// The assembled reconstruction network: input embedding, a stack of layers
// (spatial sublayer -> temporal sublayer -> feed-forward, each wrapped in a
// residual connection and layer normalization), and an output projection back
// to channel space. Also the per-window association bundle the losses and
// anomaly scores are built from.

#include <cstddef>
#include <string>
#include <vector>

#include "post/autograd.hpp"
#include "post/matrix.hpp"
#include "post/saga.hpp"
#include "post/tasa.hpp"

namespace post {

struct ModelConfig {
    std::size_t d0 = 0;        // channels
    std::size_t d_model = 512;
    std::size_t heads = 8;
    std::size_t layers = 3;
    std::size_t window = 100;
    std::size_t d_ff = 0;      // 0 -> 2 * d_model
    bool disable_saga = false;
    bool ape_on_input = false;  // add positions to the embedded input instead
                                // of the query/key/bandwidth branches

    std::size_t d_ff_eff() const { return d_ff ? d_ff : 2 * d_model; }
};

struct LayerState {
    SagaParams saga;
    ag::Param g;  // graph logits (d0 x d0)
    TasaParams tasa;
    ag::Param ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    ag::Param ln_saga_g, ln_saga_b, ln_tasa_g, ln_tasa_b, ln_ffn_g, ln_ffn_b;
};

struct ModelState {
    ModelConfig cfg;
    ag::Param embed;  // (d0 x d_model)
    ag::Param w_out;  // (d_model x d0)
    std::vector<LayerState> layers;
    Matrix pos_table;  // (window x d_model), fixed
};

struct NamedParam {
    std::string name;
    ag::Param* p;
};

ModelState build_model(const ModelConfig& cfg, Rng& rng);

// Deterministic enumeration of every parameter (graph logits included).
std::vector<NamedParam> collect_params(ModelState& state);

// Graph logit parameters only.
std::vector<NamedParam> graph_params(ModelState& state);

struct ForwardGraph {
    ag::Node* recon = nullptr;                  // (n x d0)
    std::vector<std::vector<ag::Node*>> s, p;   // [layer][head] (n x n)
    std::vector<std::vector<ag::Node*>> sigma;  // [layer][head] (n x 1)
    std::vector<ag::Node*> a, a_post, g_hat, tau;  // [layer]
    std::vector<ag::Node*> g_tilde;                // [layer] logistic of graph logits
};

ForwardGraph model_forward(ag::Tape& t, const Matrix& window, ModelState& state);

struct ForwardOut {
    Matrix recon;
    Matrix assdis_t;  // (n x 1)
    Matrix assdis_s;  // (d0 x 1); empty when the spatial path is disabled
    std::vector<std::vector<Matrix>> s, p;
    std::vector<Matrix> a, g_hat;
};

// Value-only forward pass (freezes nothing, reads nothing back into params).
ForwardOut model_infer(const Matrix& window, ModelState& state);

}  // namespace post
