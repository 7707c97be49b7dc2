#pragma once

// Alternating training: an outer graph-logit update with proximal
// sparsification, then an inner loop that alternates two adversarial updates
// of the network weights. Each phase optimizes its own loss over its own
// parameter set; parameters outside a phase's update set are frozen so they
// receive exactly zero gradient from that phase.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "post/model.hpp"

namespace post {

struct TrainConfig {
    double alpha = 0.8;    // temporal discrepancy weight
    double beta = 0.02;    // spatial discrepancy weight
    double gamma = 0.002;  // smoothness weight
    double xi = 1.0;       // head-diversity triplet weight
    double lambda = 0.7;   // proximal sparsification strength
    double margin = 1.0;   // triplet margin
    double lr = 1e-5;
    double graph_lr = 0.0;  // learning rate for the graph logits; <= 0 follows lr
    double clip_norm = 5.0;
    int inner_iters = 5;
    int epochs = 10;
    int batch = 64;
    int patience = 3;  // early stop on validation reconstruction loss
    int prox_max_iters = 20;
    double prox_tol = 1e-8;
    int knn_k = 3;
    double c0 = 2.0;
    bool disable_assdis_s = false;  // keep SAGA but drop the adversarial spatial term
    bool freeze_g = false;          // skip the graph update phase entirely
    bool identity_g_init = false;   // identity graph init instead of kNN
    bool l1_penalty_mode = false;   // plain-gradient l1 baseline instead of prox
    std::uint64_t seed = 1;
};

enum class Phase { Graph, Minimize, Maximize };
enum class LossTerm { Rec, AssDisT, AssDisS, Smooth, Triplet };

const char* phase_name(Phase p);

struct PhaseStats {
    double total = 0.0, rec = 0.0, adt = 0.0, ads = 0.0, smooth = 0.0, triplet = 0.0;
    double grad_norm = 0.0;
    bool clipped = false;
};

struct EpochRecord {
    int epoch = 0;
    double train_rec = 0.0;       // mean over inner-phase minimize steps
    double val_rec = 0.0;         // mean validation reconstruction loss
    double mean_assdis_t = 0.0;   // train-set mean after the epoch
    double mean_assdis_s = 0.0;   // train-set mean after the epoch
    double g_l1 = 0.0;            // sum over layers of ||logistic(G)||_1
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int early_stopped_epoch = -1;  // -1 when training ran to completion
    std::size_t dropped_windows = 0;
};

// Parameters a phase updates; everything else is frozen during that phase.
std::vector<NamedParam> phase_update_set(ModelState& state, Phase phase);

// Marks exactly `update_set` trainable and gives every parameter a zeroed
// gradient buffer.
void set_trainable(ModelState& state, const std::vector<NamedParam>& update_set);

// Builds the phase loss over the batch, backpropagates, and (optionally)
// applies the Adam update with global-norm clipping. `rng` drives the
// triplet partner sampling.
PhaseStats run_phase(ModelState& state, const std::vector<const Matrix*>& batch,
                     const TrainConfig& cfg, Phase phase, Rng& rng, bool apply_update);

// Full training loop: per batch, one graph phase followed by
// inner_iters x (minimize, maximize). Writes one JSON line per
// epoch to `log_stream` when given.
TrainLog fit(ModelState& state, const std::vector<Matrix>& train_windows,
             const std::vector<Matrix>& val_windows, const TrainConfig& cfg,
             std::ostream* log_stream = nullptr);

// Initializes graph logits from the training series (kNN by absolute
// correlation, or identity under the ablation flag).
void init_graph_logits(ModelState& state, const Matrix& train_series, const TrainConfig& cfg);

// Mean reconstruction loss (squared Frobenius per window) over windows.
double mean_reconstruction_loss(ModelState& state, const std::vector<Matrix>& windows);

// ---- verification surface (finite differences, stop-gradient checks) ----

// Value of one coefficient-weighted loss term with no stop-gradients.
// `partner` fixes the triplet pairing so repeated evaluations agree.
double loss_term_value(ModelState& state, const std::vector<const Matrix*>& batch,
                       const TrainConfig& cfg, LossTerm term,
                       const std::vector<std::size_t>& partner);

// Backward of that term with every parameter trainable; gradients land in
// the parameters' grad buffers.
void loss_term_backward(ModelState& state, const std::vector<const Matrix*>& batch,
                        const TrainConfig& cfg, LossTerm term,
                        const std::vector<std::size_t>& partner);

// ---- checkpointing ----

void save_checkpoint(const std::string& path, ModelState& state, const TrainConfig& cfg);

struct Checkpoint {
    ModelState state;
    TrainConfig train;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace post
