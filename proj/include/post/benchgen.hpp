#pragma once

// Synthetic benchmark construction: carve contiguous normal segments out of a
// labeled source series, then plant additive point and level-shift anomalies
// on sparse channel subsets in the segment tails, with exact channel-wise
// labels and a log of every injected event.

#include <cstddef>
#include <string>
#include <vector>

#include "post/matrix.hpp"

namespace post {

struct Segment {
    std::size_t start = 0;  // row in the source series
    Matrix data;
};

// Maximal runs of zero-label steps with at least min_len rows, in order.
std::vector<Segment> extract_normal_segments(const Matrix& series, const std::vector<int>& labels,
                                             std::size_t min_len);

enum class AnomalyKind { Point, Pattern };

// One event to plant: `duration` steps (1 for Point) on `channels`, each
// channel shifted by amplitude * train_std[channel] * sign[channel], placed
// uniformly inside the tail fraction of the segment.
struct InjectSpec {
    AnomalyKind kind = AnomalyKind::Point;
    std::vector<std::size_t> channels;
    double amplitude = 3.0;  // multiple of the per-channel training std
    std::size_t duration = 1;
    double tail_fraction = 0.3;
};

struct InjectEvent {
    std::size_t t0 = 0;  // first perturbed row (segment-relative)
    std::size_t duration = 0;
    std::vector<std::size_t> channels;
    AnomalyKind kind = AnomalyKind::Point;
    double amplitude = 0.0;
    std::vector<double> offsets;  // signed additive offset per channel
};

struct InjectResult {
    Matrix perturbed;
    Matrix mask;  // 1 exactly on perturbed cells
    InjectEvent event;
};

// Plants one event. train_std is (1 x d0). Cells outside the mask are
// bit-identical to the input segment.
InjectResult inject(const Matrix& segment, const InjectSpec& spec, const Matrix& train_std,
                    Rng& rng);

// Sampling recipe and tolerances for generate().
struct GenConfig {
    std::size_t min_segment_len = 100;
    double tail_fraction = 0.3;
    std::vector<double> amplitudes = {1.5, 3.0, 5.0};
    std::size_t max_channels = 3;
    std::size_t pattern_min = 10, pattern_max = 50;
    double point_share = 0.5;  // probability an event is a single-step point
    double rel_tol = 0.10;     // relative tolerance on achieved ratios
    std::uint64_t seed = 1;
};

struct GenTargets {
    double time_pct = 4.35;     // share of anomalous time steps, percent
    double channel_pct = 0.18;  // share of anomalous cells, percent
};

struct GenResult {
    Matrix test;                  // concatenated segments with injections
    std::vector<int> labels_time; // OR over channels per row
    Matrix labels_chan;           // exact perturbed cells
    std::vector<InjectEvent> events;  // t0 rebased to the assembled series
    double achieved_time_pct = 0.0;
    double achieved_chan_pct = 0.0;
};

// Assembles all qualifying normal segments and injects events until the
// ratio targets are met within rel_tol. Zero targets yield a pristine
// benchmark. Unreachable targets raise a DataError naming the achieved
// ratios. Deterministic per seed.
GenResult generate(const Matrix& source_series, const std::vector<int>& source_labels,
                   const Matrix& train_std, const GenTargets& targets, const GenConfig& cfg);

// One line per event: rows, channels, kind, amplitude, offsets.
std::string format_event_log(const std::vector<InjectEvent>& events);

// Smooth multichannel series driven by 3 shared latent sinusoids with a
// random mixing matrix and mild observation noise. Deterministic per seed.
Matrix make_sine_mixture(std::size_t t, std::size_t d0, std::uint64_t seed);

}  // namespace post
