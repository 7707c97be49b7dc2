#include "post/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace post {

std::vector<Segment> extract_normal_segments(const Matrix& series, const std::vector<int>& labels,
                                             std::size_t min_len) {
    if (labels.size() != series.rows())
        throw DataError("extract_normal_segments: labels/series length mismatch");
    if (min_len == 0) throw UsageError("extract_normal_segments: min_len must be positive");
    for (int v : labels)
        if (v != 0 && v != 1)
            throw DataError("extract_normal_segments: labels must be 0 or 1");
    std::vector<Segment> out;
    std::size_t i = 0;
    while (i < labels.size()) {
        if (labels[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < labels.size() && !labels[j]) ++j;
        if (j - i >= min_len) {
            Segment seg;
            seg.start = i;
            seg.data = Matrix(j - i, series.cols());
            for (std::size_t r = i; r < j; ++r)
                for (std::size_t c = 0; c < series.cols(); ++c)
                    seg.data(r - i, c) = series(r, c);
            out.push_back(std::move(seg));
        }
        i = j;
    }
    if (out.empty())
        throw DataError("extract_normal_segments: no normal run of at least " +
                        std::to_string(min_len) + " steps");
    return out;
}

namespace {

void check_spec(const InjectSpec& spec, std::size_t d0) {
    if (spec.amplitude == 0.0) throw DataError("inject: amplitude must be nonzero");
    if (spec.duration == 0) throw DataError("inject: duration must be positive");
    if (spec.kind == AnomalyKind::Point && spec.duration != 1)
        throw DataError("inject: point anomalies have duration 1");
    if (spec.channels.empty()) throw DataError("inject: at least one channel required");
    std::vector<std::size_t> chans = spec.channels;
    std::sort(chans.begin(), chans.end());
    for (std::size_t i = 0; i < chans.size(); ++i) {
        if (chans[i] >= d0)
            throw DataError("inject: channel index " + std::to_string(chans[i]) +
                            " out of range");
        if (i && chans[i] == chans[i - 1]) throw DataError("inject: duplicate channel");
    }
    if (!(spec.tail_fraction > 0.0 && spec.tail_fraction <= 1.0))
        throw DataError("inject: tail fraction must lie in (0, 1]");
}

// Applies one event in place and marks the mask.
void apply_event(Matrix& data, Matrix& mask, const InjectEvent& ev) {
    for (std::size_t t = ev.t0; t < ev.t0 + ev.duration; ++t)
        for (std::size_t c = 0; c < ev.channels.size(); ++c) {
            data(t, ev.channels[c]) += ev.offsets[c];
            mask(t, ev.channels[c]) = 1.0;
        }
}

}  // namespace

InjectResult inject(const Matrix& segment, const InjectSpec& spec, const Matrix& train_std,
                    Rng& rng) {
    check_spec(spec, segment.cols());
    if (train_std.rows() != 1 || train_std.cols() != segment.cols())
        throw DataError("inject: train_std must be one value per channel");
    const std::size_t len = segment.rows();
    const std::size_t tail_len = std::min(
        len, static_cast<std::size_t>(
                 std::ceil(spec.tail_fraction * static_cast<double>(len))));
    if (spec.duration > tail_len)
        throw DataError("inject: event duration " + std::to_string(spec.duration) +
                        " exceeds the tail window of " + std::to_string(tail_len) + " steps");
    const std::size_t lo = len - tail_len;
    const std::size_t hi = len - spec.duration;

    InjectResult res;
    res.perturbed = segment;
    res.mask = Matrix(segment.rows(), segment.cols());
    res.event.t0 = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    res.event.duration = spec.duration;
    res.event.channels = spec.channels;
    res.event.kind = spec.kind;
    res.event.amplitude = spec.amplitude;
    for (std::size_t ch : spec.channels) {
        const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
        res.event.offsets.push_back(spec.amplitude * train_std(0, ch) * sign);
    }
    apply_event(res.perturbed, res.mask, res.event);
    return res;
}

namespace {

struct SegmentSlot {
    std::size_t base = 0;      // start row in the assembled series
    std::size_t len = 0;
    std::size_t tail_lo = 0;   // first row eligible for injection (segment-relative)
    std::size_t cursor = 0;    // next free row in the tail region
};

std::vector<std::size_t> pick_channels(std::size_t count, std::size_t d0, Rng& rng) {
    std::vector<std::size_t> all(d0);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(d0) - 1));
        std::swap(all[i], all[j]);
    }
    std::vector<std::size_t> out(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

GenResult generate(const Matrix& source_series, const std::vector<int>& source_labels,
                   const Matrix& train_std, const GenTargets& targets, const GenConfig& cfg) {
    if (!(targets.time_pct >= 0.0 && targets.time_pct < 100.0))
        throw DataError("generate: time-wise target must lie in [0, 100)");
    if (!(targets.channel_pct >= 0.0 && targets.channel_pct < 100.0))
        throw DataError("generate: channel-wise target must lie in [0, 100)");
    if ((targets.time_pct == 0.0) != (targets.channel_pct == 0.0))
        throw DataError("generate: time-wise and channel-wise targets must be zero together");
    if (cfg.max_channels == 0) throw UsageError("generate: max_channels must be positive");
    if (cfg.pattern_min < 2 || cfg.pattern_max < cfg.pattern_min)
        throw UsageError("generate: pattern duration range must satisfy 2 <= min <= max");
    if (!(cfg.point_share >= 0.0 && cfg.point_share <= 1.0))
        throw UsageError("generate: point_share must lie in [0, 1]");
    if (train_std.rows() != 1 || train_std.cols() != source_series.cols())
        throw DataError("generate: train_std must be one value per channel");

    const std::vector<Segment> segments =
        extract_normal_segments(source_series, source_labels, cfg.min_segment_len);
    const std::size_t d0 = source_series.cols();

    GenResult res;
    std::size_t total = 0;
    for (const Segment& s : segments) total += s.data.rows();
    res.test = Matrix(total, d0);
    std::vector<SegmentSlot> slots;
    std::size_t at = 0;
    for (const Segment& s : segments) {
        for (std::size_t i = 0; i < s.data.rows(); ++i)
            for (std::size_t j = 0; j < d0; ++j) res.test(at + i, j) = s.data(i, j);
        SegmentSlot slot;
        slot.base = at;
        slot.len = s.data.rows();
        const std::size_t tail_len = std::min(
            slot.len, static_cast<std::size_t>(
                          std::ceil(cfg.tail_fraction * static_cast<double>(slot.len))));
        slot.tail_lo = slot.len - tail_len;
        slot.cursor = slot.tail_lo;
        slots.push_back(slot);
        at += s.data.rows();
    }
    res.labels_chan = Matrix(total, d0);
    res.labels_time.assign(total, 0);

    const std::size_t target_steps = static_cast<std::size_t>(
        std::llround(targets.time_pct / 100.0 * static_cast<double>(total)));
    const std::size_t target_cells = static_cast<std::size_t>(std::llround(
        targets.channel_pct / 100.0 * static_cast<double>(total * d0)));

    Rng rng(cfg.seed);
    std::size_t steps = 0, cells = 0;
    const std::size_t chan_cap = std::min(cfg.max_channels, d0);

    while (steps < target_steps) {
        const std::size_t remaining_steps = target_steps - steps;
        // Steer the per-event channel count toward the remaining cell budget.
        const double ratio = cells < target_cells
                                 ? static_cast<double>(target_cells - cells) /
                                       static_cast<double>(remaining_steps)
                                 : 1.0;
        const std::size_t want_channels = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(ratio)), 1, chan_cap);

        const bool point = rng.uniform() < cfg.point_share;
        std::size_t duration =
            point ? 1
                  : static_cast<std::size_t>(
                        rng.uniform_int(static_cast<std::int64_t>(cfg.pattern_min),
                                        static_cast<std::int64_t>(cfg.pattern_max)));
        duration = std::min(duration, remaining_steps);

        // Place in the emptiest tail with room for the event plus a one-step
        // normal gap that keeps events from merging into one labeled run.
        std::size_t best = slots.size();
        std::size_t best_free = 0;
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const std::size_t free = slots[s].len - slots[s].cursor;
            if (free >= duration + 1 && free > best_free) {
                best = s;
                best_free = free;
            }
        }
        if (best == slots.size()) break;  // no tail capacity left

        InjectEvent ev;
        ev.t0 = slots[best].base + slots[best].cursor;
        ev.duration = duration;
        ev.kind = point ? AnomalyKind::Point : AnomalyKind::Pattern;
        ev.channels = pick_channels(want_channels, d0, rng);
        ev.amplitude = cfg.amplitudes[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(cfg.amplitudes.size()) - 1))];
        for (std::size_t ch : ev.channels) {
            const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
            ev.offsets.push_back(ev.amplitude * train_std(0, ch) * sign);
        }
        apply_event(res.test, res.labels_chan, ev);
        for (std::size_t t = ev.t0; t < ev.t0 + ev.duration; ++t) res.labels_time[t] = 1;
        slots[best].cursor += duration + 1;
        steps += duration;
        cells += duration * ev.channels.size();
        res.events.push_back(std::move(ev));
    }

    res.achieved_time_pct = 100.0 * static_cast<double>(steps) / static_cast<double>(total);
    res.achieved_chan_pct =
        100.0 * static_cast<double>(cells) / static_cast<double>(total * d0);

    auto within = [&cfg](double achieved, double target) {
        if (target == 0.0) return achieved == 0.0;
        return std::abs(achieved - target) <= cfg.rel_tol * target;
    };
    if (!within(res.achieved_time_pct, targets.time_pct) ||
        !within(res.achieved_chan_pct, targets.channel_pct)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "generate: targets unreachable with available normal data "
                      "(achieved %.4g%% time-wise vs %.4g%% target, %.4g%% channel-wise vs "
                      "%.4g%% target)",
                      res.achieved_time_pct, targets.time_pct, res.achieved_chan_pct,
                      targets.channel_pct);
        throw DataError(buf);
    }
    return res;
}

std::string format_event_log(const std::vector<InjectEvent>& events) {
    std::ostringstream out;
    char buf[64];
    for (const InjectEvent& ev : events) {
        out << "rows " << ev.t0 << ".." << ev.t0 + ev.duration - 1 << "  kind "
            << (ev.kind == AnomalyKind::Point ? "point" : "pattern") << "  channels [";
        for (std::size_t i = 0; i < ev.channels.size(); ++i)
            out << (i ? "," : "") << ev.channels[i];
        std::snprintf(buf, sizeof(buf), "]  amplitude %g  offsets [", ev.amplitude);
        out << buf;
        for (std::size_t i = 0; i < ev.offsets.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s%+g", i ? "," : "", ev.offsets[i]);
            out << buf;
        }
        out << "]\n";
    }
    return out.str();
}

Matrix make_sine_mixture(std::size_t t, std::size_t d0, std::uint64_t seed) {
    if (t == 0 || d0 == 0) throw UsageError("make_sine_mixture: empty shape");
    Rng rng(seed);
    constexpr std::size_t kLatents = 3;
    constexpr double kTwoPi = 6.283185307179586;
    // Commensurate periods (lcm 400) keep the joint waveform periodic, so a
    // few thousand rows already contain every phase combination that can
    // occur later in the series.
    constexpr double kPeriods[] = {25.0, 40.0, 50.0, 80.0, 100.0};
    constexpr std::size_t kNumPeriods = sizeof(kPeriods) / sizeof(kPeriods[0]);
    std::size_t pick[kNumPeriods] = {0, 1, 2, 3, 4};
    double freq[kLatents], phase[kLatents];
    for (std::size_t k = 0; k < kLatents; ++k) {
        std::size_t j = k + static_cast<std::size_t>(rng.uniform_int(
                                0, static_cast<std::int64_t>(kNumPeriods - 1 - k)));
        std::swap(pick[k], pick[j]);
        freq[k] = 1.0 / kPeriods[pick[k]];
        phase[k] = kTwoPi * rng.uniform();
    }
    // Two channel groups with disjoint latent sets: channels correlate
    // strongly inside their group and stay near-independent across groups,
    // giving the series a block spatial structure.
    const std::size_t split = (d0 + 1) / 2;
    Matrix mix(d0, kLatents);
    for (std::size_t j = 0; j < d0; ++j) {
        const std::size_t lo = j < split ? 0 : kLatents / 2 + 1;
        const std::size_t hi = j < split ? kLatents / 2 + 1 : kLatents;
        double norm = 0.0;
        for (std::size_t k = lo; k < hi && k < kLatents; ++k) {
            mix(j, k) = rng.normal();
            norm += mix(j, k) * mix(j, k);
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (std::size_t k = lo; k < hi && k < kLatents; ++k) mix(j, k) /= norm;
    }
    Matrix out(t, d0);
    for (std::size_t i = 0; i < t; ++i) {
        double z[kLatents];
        for (std::size_t k = 0; k < kLatents; ++k)
            z[k] = std::sin(kTwoPi * freq[k] * static_cast<double>(i) + phase[k]);
        for (std::size_t j = 0; j < d0; ++j) {
            double v = 0.0;
            for (std::size_t k = 0; k < kLatents; ++k) v += mix(j, k) * z[k];
            out(i, j) = v + 0.05 * rng.normal();
        }
    }
    return out;
}

}  // namespace post
