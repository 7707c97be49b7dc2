#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "post/benchgen.hpp"
#include "post/matrix.hpp"

using namespace post;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Matrix counting_series(std::size_t t, std::size_t d0) {
    Matrix m(t, d0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d0; ++j)
            m(i, j) = static_cast<double>(i) + 0.1 * static_cast<double>(j);
    return m;
}

}  // namespace

TEST_CASE("normal segment extraction keeps maximal zero runs of sufficient length") {
    Matrix series = counting_series(6, 2);
    std::vector<int> labels = {0, 0, 1, 0, 0, 0};
    std::vector<Segment> segs = extract_normal_segments(series, labels, 2);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].start == 0);
    CHECK(segs[0].data.rows() == 2);
    CHECK(segs[1].start == 3);
    CHECK(segs[1].data.rows() == 3);
    CHECK(segs[0].data(0, 0) == series(0, 0));
    CHECK(segs[1].data(0, 1) == series(3, 1));
    CHECK(segs[1].data(2, 0) == series(5, 0));

    // Raising the bar drops the short run.
    std::vector<Segment> longer = extract_normal_segments(series, labels, 3);
    REQUIRE(longer.size() == 1);
    CHECK(longer[0].start == 3);

    CHECK_THROWS_WITH_AS(extract_normal_segments(series, labels, 4),
                         doctest::Contains("no normal run"), DataError);
    CHECK_THROWS_AS(extract_normal_segments(series, {0, 0, 1}, 2), DataError);
    CHECK_THROWS_AS(extract_normal_segments(series, {0, 0, 2, 0, 0, 0}, 2), DataError);
    CHECK_THROWS_AS(extract_normal_segments(series, labels, 0), UsageError);
    CHECK_THROWS_AS(extract_normal_segments(series, {1, 1, 1, 1, 1, 1}, 1), DataError);
}

TEST_CASE("injection perturbs exactly the masked cells inside the tail") {
    const std::size_t len = 100, d0 = 3;
    Matrix segment(len, d0, 0.0);
    Matrix train_std = Matrix::from_rows({{1.0, 2.0, 4.0}});
    InjectSpec spec;
    spec.kind = AnomalyKind::Pattern;
    spec.channels = {0, 2};
    spec.amplitude = 3.0;
    spec.duration = 20;
    spec.tail_fraction = 0.3;

    Rng rng(42);
    InjectResult r = inject(segment, spec, train_std, rng);
    REQUIRE(r.perturbed.rows() == len);
    REQUIRE(r.mask.same_shape(segment));

    // 20 rows x 2 channels = 40 masked cells.
    double mask_sum = 0.0;
    for (std::size_t i = 0; i < r.mask.size(); ++i) mask_sum += r.mask.data()[i];
    CHECK(mask_sum == 40.0);

    // The tail covers rows 70..99; a 20-step event starts in [70, 80].
    CHECK(r.event.t0 >= 70);
    CHECK(r.event.t0 <= 80);
    CHECK(r.event.duration == 20);
    REQUIRE(r.event.offsets.size() == 2);
    CHECK(std::fabs(r.event.offsets[0]) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(std::fabs(r.event.offsets[1]) == doctest::Approx(12.0).epsilon(1e-15));

    // Perturbation matches the mask cell for cell; untouched cells stay zero.
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < d0; ++j) {
            const double diff = r.perturbed(i, j) - segment(i, j);
            if (r.mask(i, j) == 1.0) {
                CHECK(std::fabs(diff) == doctest::Approx(3.0 * train_std(0, j)).epsilon(1e-15));
            } else {
                CHECK(diff == 0.0);
            }
        }
}

TEST_CASE("injection placement sweeps the whole admissible tail range") {
    Matrix segment(100, 1, 0.0);
    Matrix train_std = Matrix::from_rows({{1.0}});
    InjectSpec spec;
    spec.kind = AnomalyKind::Pattern;
    spec.channels = {0};
    spec.duration = 20;
    spec.tail_fraction = 0.3;
    std::size_t lo_seen = 100, hi_seen = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        Rng rng(s);
        InjectResult r = inject(segment, spec, train_std, rng);
        lo_seen = std::min(lo_seen, r.event.t0);
        hi_seen = std::max(hi_seen, r.event.t0);
    }
    CHECK(lo_seen == 70);
    CHECK(hi_seen == 80);
}

TEST_CASE("injection is deterministic per seed") {
    Matrix segment = make_sine_mixture(120, 2, 5);
    Matrix train_std = Matrix::from_rows({{0.7, 0.9}});
    InjectSpec spec;
    spec.kind = AnomalyKind::Point;
    spec.channels = {1};
    spec.amplitude = 1.5;
    spec.duration = 1;
    Rng a(9), b(9);
    InjectResult ra = inject(segment, spec, train_std, a);
    InjectResult rb = inject(segment, spec, train_std, b);
    CHECK(bitwise_equal(ra.perturbed, rb.perturbed));
    CHECK(bitwise_equal(ra.mask, rb.mask));
    CHECK(ra.event.t0 == rb.event.t0);
    CHECK(ra.event.offsets == rb.event.offsets);
}

TEST_CASE("injection validates its specification") {
    Matrix segment(100, 2, 0.0);
    Matrix train_std = Matrix::from_rows({{1.0, 1.0}});
    Rng rng(1);
    InjectSpec spec;
    spec.channels = {0};

    InjectSpec s1 = spec;
    s1.amplitude = 0.0;
    CHECK_THROWS_AS(inject(segment, s1, train_std, rng), DataError);

    InjectSpec s2 = spec;
    s2.kind = AnomalyKind::Point;
    s2.duration = 2;
    CHECK_THROWS_AS(inject(segment, s2, train_std, rng), DataError);

    InjectSpec s3 = spec;
    s3.kind = AnomalyKind::Pattern;
    s3.duration = 0;
    CHECK_THROWS_AS(inject(segment, s3, train_std, rng), DataError);

    InjectSpec s4 = spec;
    s4.channels = {0, 0};
    CHECK_THROWS_AS(inject(segment, s4, train_std, rng), DataError);

    InjectSpec s5 = spec;
    s5.channels = {2};
    CHECK_THROWS_WITH_AS(inject(segment, s5, train_std, rng), doctest::Contains("out of range"),
                         DataError);

    InjectSpec s6 = spec;
    s6.channels = {};
    CHECK_THROWS_AS(inject(segment, s6, train_std, rng), DataError);

    InjectSpec s7 = spec;
    s7.tail_fraction = 0.0;
    CHECK_THROWS_AS(inject(segment, s7, train_std, rng), DataError);
    s7.tail_fraction = 1.1;
    CHECK_THROWS_AS(inject(segment, s7, train_std, rng), DataError);

    // A 31-step event cannot fit a 30-row tail.
    InjectSpec s8 = spec;
    s8.kind = AnomalyKind::Pattern;
    s8.duration = 31;
    s8.tail_fraction = 0.3;
    CHECK_THROWS_WITH_AS(inject(segment, s8, train_std, rng),
                         doctest::Contains("exceeds the tail"), DataError);

    CHECK_THROWS_AS(inject(segment, spec, Matrix(1, 3, 1.0), rng), DataError);
    CHECK_THROWS_AS(inject(segment, spec, Matrix(2, 2, 1.0), rng), DataError);
}

TEST_CASE("generation hits the ratio targets with consistent labels") {
    const std::size_t t = 4000, d0 = 4;
    Matrix source = make_sine_mixture(t, d0, 9);
    std::vector<int> labels(t, 0);
    Matrix train_std(1, d0, 1.0);
    GenTargets targets;
    targets.time_pct = 5.0;
    targets.channel_pct = 2.0;
    GenConfig cfg;
    cfg.seed = 31;

    GenResult res = generate(source, labels, train_std, targets, cfg);
    REQUIRE(res.test.rows() == t);
    REQUIRE(res.labels_chan.same_shape(res.test));
    REQUIRE(res.labels_time.size() == t);
    CHECK(std::fabs(res.achieved_time_pct - 5.0) <= 0.5);
    CHECK(std::fabs(res.achieved_chan_pct - 2.0) <= 0.2);
    CHECK(!res.events.empty());

    // Time labels are the OR over channel labels.
    for (std::size_t i = 0; i < t; ++i) {
        int any = 0;
        for (std::size_t j = 0; j < d0; ++j) any |= res.labels_chan(i, j) == 1.0 ? 1 : 0;
        REQUIRE(res.labels_time[i] == any);
    }

    // Against the pristine assembly: cells differ exactly where labeled.
    GenResult pristine = generate(source, labels, train_std, GenTargets{0.0, 0.0}, cfg);
    CHECK(pristine.events.empty());
    CHECK(pristine.achieved_time_pct == 0.0);
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d0; ++j) {
            const double diff = res.test(i, j) - pristine.test(i, j);
            if (res.labels_chan(i, j) == 1.0) {
                ++labeled;
                // Offsets come from the amplitude menu times unit std.
                const double mag = std::fabs(diff);
                const bool known = std::fabs(mag - 1.5) < 1e-12 ||
                                   std::fabs(mag - 3.0) < 1e-12 ||
                                   std::fabs(mag - 5.0) < 1e-12;
                REQUIRE(known);
            } else {
                REQUIRE(diff == 0.0);
            }
        }
    CHECK(labeled > 0);

    // Single-segment source: every event sits inside the final-30% tail.
    for (const InjectEvent& ev : res.events) CHECK(ev.t0 >= t - 1200);
    for (std::size_t i = 0; i < t - 1200; ++i) REQUIRE(res.labels_time[i] == 0);

    // Channel subsets stay within the cap and are sorted/unique.
    for (const InjectEvent& ev : res.events) {
        CHECK(ev.channels.size() >= 1);
        CHECK(ev.channels.size() <= cfg.max_channels);
        std::set<std::size_t> uniq(ev.channels.begin(), ev.channels.end());
        CHECK(uniq.size() == ev.channels.size());
    }
}

TEST_CASE("generation is byte-identical per seed and varies across seeds") {
    Matrix source = make_sine_mixture(1500, 3, 4);
    std::vector<int> labels(1500, 0);
    Matrix train_std(1, 3, 1.0);
    GenTargets targets;
    targets.time_pct = 4.0;
    targets.channel_pct = 1.8;
    GenConfig cfg;
    cfg.seed = 77;

    GenResult a = generate(source, labels, train_std, targets, cfg);
    GenResult b = generate(source, labels, train_std, targets, cfg);
    CHECK(bitwise_equal(a.test, b.test));
    CHECK(bitwise_equal(a.labels_chan, b.labels_chan));
    CHECK(a.labels_time == b.labels_time);
    CHECK(a.achieved_time_pct == b.achieved_time_pct);
    CHECK(format_event_log(a.events) == format_event_log(b.events));

    GenConfig other = cfg;
    other.seed = 78;
    GenResult c = generate(source, labels, train_std, targets, other);
    CHECK(!bitwise_equal(a.test, c.test));
}

TEST_CASE("generation assembles multiple segments in source order") {
    Matrix source = counting_series(301, 2);
    std::vector<int> labels(301, 0);
    labels[150] = 1;  // splits the series into two 150-row runs
    Matrix train_std(1, 2, 1.0);
    GenConfig cfg;
    cfg.min_segment_len = 100;
    GenResult res = generate(source, labels, train_std, GenTargets{0.0, 0.0}, cfg);
    REQUIRE(res.test.rows() == 300);
    for (std::size_t i = 0; i < 150; ++i) REQUIRE(res.test(i, 0) == source(i, 0));
    for (std::size_t i = 150; i < 300; ++i) REQUIRE(res.test(i, 0) == source(i + 1, 0));
}

TEST_CASE("generation rejects unreachable targets naming the achieved ratios") {
    Matrix source = make_sine_mixture(600, 3, 2);
    std::vector<int> labels(600, 0);
    Matrix train_std(1, 3, 1.0);
    GenTargets greedy;
    greedy.time_pct = 60.0;  // tails hold at most ~30% of the steps
    greedy.channel_pct = 20.0;
    CHECK_THROWS_WITH_AS(generate(source, labels, train_std, greedy, GenConfig{}),
                         doctest::Contains("unreachable"), DataError);
}

TEST_CASE("generation validates targets and configuration") {
    Matrix source = make_sine_mixture(300, 2, 3);
    std::vector<int> labels(300, 0);
    Matrix train_std(1, 2, 1.0);
    GenTargets ok{1.0, 0.5};
    CHECK_THROWS_AS(generate(source, labels, train_std, GenTargets{100.0, 1.0}, GenConfig{}),
                    DataError);
    CHECK_THROWS_AS(generate(source, labels, train_std, GenTargets{-1.0, 1.0}, GenConfig{}),
                    DataError);
    CHECK_THROWS_AS(generate(source, labels, train_std, GenTargets{0.0, 1.0}, GenConfig{}),
                    DataError);
    CHECK_THROWS_AS(generate(source, labels, train_std, GenTargets{1.0, 0.0}, GenConfig{}),
                    DataError);
    GenConfig bad;
    bad.max_channels = 0;
    CHECK_THROWS_AS(generate(source, labels, train_std, ok, bad), UsageError);
    bad = GenConfig{};
    bad.pattern_min = 1;
    CHECK_THROWS_AS(generate(source, labels, train_std, ok, bad), UsageError);
    bad = GenConfig{};
    bad.pattern_max = 5;
    bad.pattern_min = 10;
    CHECK_THROWS_AS(generate(source, labels, train_std, ok, bad), UsageError);
    bad = GenConfig{};
    bad.point_share = 1.5;
    CHECK_THROWS_AS(generate(source, labels, train_std, ok, bad), UsageError);
    CHECK_THROWS_AS(generate(source, labels, Matrix(1, 3, 1.0), ok, GenConfig{}), DataError);
}

TEST_CASE("the event log prints one line per event") {
    InjectEvent pattern;
    pattern.t0 = 5;
    pattern.duration = 3;
    pattern.channels = {1, 2};
    pattern.kind = AnomalyKind::Pattern;
    pattern.amplitude = 2.5;
    pattern.offsets = {2.5, -5.0};
    InjectEvent point;
    point.t0 = 9;
    point.duration = 1;
    point.channels = {0};
    point.kind = AnomalyKind::Point;
    point.amplitude = 1.5;
    point.offsets = {-1.5};
    const std::string log = format_event_log({pattern, point});
    CHECK(log ==
          "rows 5..7  kind pattern  channels [1,2]  amplitude 2.5  offsets [+2.5,-5]\n"
          "rows 9..9  kind point  channels [0]  amplitude 1.5  offsets [-1.5]\n");
    CHECK(format_event_log({}).empty());
}

TEST_CASE("the sine mixture is deterministic, bounded, and shaped as asked") {
    Matrix a = make_sine_mixture(500, 5, 12);
    Matrix b = make_sine_mixture(500, 5, 12);
    REQUIRE(a.rows() == 500);
    REQUIRE(a.cols() == 5);
    CHECK(bitwise_equal(a, b));
    Matrix c = make_sine_mixture(500, 5, 13);
    CHECK(!bitwise_equal(a, c));
    // Unit-norm mixing of three unit sinusoids plus mild noise.
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a.data()[i]) < std::sqrt(3.0) + 1.0);
    CHECK_THROWS_AS(make_sine_mixture(0, 3, 1), UsageError);
    CHECK_THROWS_AS(make_sine_mixture(10, 0, 1), UsageError);
}
