#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "post/matrix.hpp"
#include "post/model.hpp"
#include "post/scoring.hpp"

using namespace post;

namespace {

ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.d0 = 3;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.window = 6;
    return cfg;
}

double logistic_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> neg_softmax(const Matrix& col) {
    std::vector<double> out(col.rows());
    double mx = -col(0, 0);
    for (std::size_t i = 0; i < col.rows(); ++i) mx = std::max(mx, -col(i, 0));
    double sum = 0.0;
    for (std::size_t i = 0; i < col.rows(); ++i) {
        out[i] = std::exp(-col(i, 0) - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace

TEST_CASE("uniform temporal discrepancy reduces the score to error over n") {
    const std::size_t n = 4, d0 = 2;
    Matrix assdis(n, 1, 0.37);  // equal entries, any value
    Matrix window(n, d0, 0.0);
    Matrix recon(n, d0);
    for (std::size_t i = 0; i < recon.size(); ++i) recon.data()[i] = static_cast<double>(i);
    Matrix score = score_timewise_parts(assdis, recon, window);
    REQUIRE(score.rows() == n);
    REQUIRE(score.cols() == 1);
    for (std::size_t i = 0; i < n; ++i) {
        double err = 0.0;
        for (std::size_t j = 0; j < d0; ++j) err += recon(i, j) * recon(i, j);
        CHECK(score(i, 0) == doctest::Approx(err / static_cast<double>(n)).epsilon(1e-12));
    }
}

TEST_CASE("perfect reconstruction scores zero everywhere") {
    Rng rng(1);
    Matrix window = random_normal(5, 3, rng);
    Matrix assdis(5, 1);
    for (std::size_t i = 0; i < 5; ++i) assdis(i, 0) = rng.uniform();
    Matrix score = score_timewise_parts(assdis, window, window);
    for (std::size_t i = 0; i < 5; ++i) CHECK(score(i, 0) == 0.0);
}

TEST_CASE("lower temporal discrepancy amplifies the score at equal error") {
    Matrix assdis = Matrix::from_rows({{0.0}, {2.0}});
    Matrix window(2, 1, 0.0);
    Matrix recon(2, 1, 1.0);  // identical per-step error
    Matrix score = score_timewise_parts(assdis, recon, window);
    CHECK(score(0, 0) > score(1, 0));
    // The softmax weights are the exact factors.
    std::vector<double> w = neg_softmax(assdis);
    CHECK(score(0, 0) == doctest::Approx(w[0]).epsilon(1e-12));
    CHECK(score(1, 0) == doctest::Approx(w[1]).epsilon(1e-12));
}

TEST_CASE("timewise scoring validates shapes") {
    Matrix assdis(3, 1, 0.1);
    Matrix window(3, 2, 0.0);
    CHECK_THROWS_AS(score_timewise_parts(assdis, Matrix(4, 2, 0.0), window), DataError);
    CHECK_THROWS_AS(score_timewise_parts(Matrix(2, 1, 0.1), window, window), DataError);
    CHECK_THROWS_AS(score_timewise_parts(Matrix(3, 2, 0.1), window, window), DataError);
}

TEST_CASE("score_timewise equals assembling the parts from the inference pass") {
    ModelConfig cfg = small_cfg();
    Rng rng(2);
    ModelState st = build_model(cfg, rng);
    Rng wr(3);
    Matrix w = random_normal(cfg.window, cfg.d0, wr);
    ForwardOut out = model_infer(w, st);
    Matrix direct = score_timewise(st, w);
    Matrix assembled = score_timewise_parts(out.assdis_t, out.recon, w);
    REQUIRE(direct.same_shape(assembled));
    for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(direct.data()[i] == doctest::Approx(assembled.data()[i]).epsilon(1e-12));
    // Window shape must match the model configuration.
    CHECK_THROWS_AS(score_timewise(st, Matrix(cfg.window + 1, cfg.d0, 0.0)), DataError);
}

TEST_CASE("spatial statistics are the population moments over training windows") {
    ModelConfig cfg = small_cfg();
    Rng rng(4);
    ModelState st = build_model(cfg, rng);
    Rng wr(5);
    std::vector<Matrix> windows;
    for (int k = 0; k < 3; ++k) windows.push_back(random_normal(cfg.window, cfg.d0, wr));

    SpatialStats stats = fit_spatial_stats(st, windows);
    CHECK(stats.from_train);
    REQUIRE(stats.mean.rows() == cfg.d0);
    REQUIRE(stats.std.rows() == cfg.d0);

    for (std::size_t j = 0; j < cfg.d0; ++j) {
        double m = 0.0, m2 = 0.0;
        for (const Matrix& w : windows) {
            const double v = model_infer(w, st).assdis_s(j, 0);
            m += v;
            m2 += v * v;
        }
        m /= 3.0;
        m2 /= 3.0;
        const double sd = std::sqrt(std::max(0.0, m2 - m * m));
        CHECK(stats.mean(j, 0) == doctest::Approx(m).epsilon(1e-9));
        CHECK(stats.std(j, 0) == doctest::Approx(std::max(sd, 1e-8)).epsilon(1e-9));
    }
}

TEST_CASE("identical windows clamp the spatial deviation at the floor") {
    ModelConfig cfg = small_cfg();
    Rng rng(6);
    ModelState st = build_model(cfg, rng);
    Rng wr(7);
    Matrix w = random_normal(cfg.window, cfg.d0, wr);
    SpatialStats stats = fit_spatial_stats(st, {w, w});
    for (std::size_t j = 0; j < cfg.d0; ++j) CHECK(stats.std(j, 0) == 1e-8);
}

TEST_CASE("spatial statistics require at least two windows and a live spatial path") {
    ModelConfig cfg = small_cfg();
    Rng rng(8);
    ModelState st = build_model(cfg, rng);
    Rng wr(9);
    Matrix w = random_normal(cfg.window, cfg.d0, wr);
    CHECK_THROWS_AS(fit_spatial_stats(st, {w}), DataError);
    ModelConfig off = cfg;
    off.disable_saga = true;
    Rng rng2(8);
    ModelState st2 = build_model(off, rng2);
    CHECK_THROWS_AS(fit_spatial_stats(st2, {w, w}), UsageError);
}

TEST_CASE("joint score entries are temporal weight times channel factor times residual") {
    const std::size_t n = 3, d0 = 2;
    Matrix assdis_t = Matrix::from_rows({{0.1}, {0.9}, {0.4}});
    Matrix assdis_s = Matrix::from_rows({{1.5}, {0.5}});
    Matrix window(n, d0, 0.0);
    Matrix recon(n, d0);
    for (std::size_t i = 0; i < recon.size(); ++i)
        recon.data()[i] = 0.5 + 0.25 * static_cast<double>(i);
    SpatialStats stats;
    stats.mean = Matrix::from_rows({{1.0}, {1.0}});
    stats.std = Matrix::from_rows({{0.5}, {2.0}});
    stats.from_train = true;

    Matrix joint = score_spatiotemporal_parts(assdis_t, assdis_s, recon, window, stats);
    REQUIRE(joint.rows() == n);
    REQUIRE(joint.cols() == d0);
    std::vector<double> sm = neg_softmax(assdis_t);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d0; ++j) {
            const double z = (assdis_s(j, 0) - stats.mean(j, 0)) / stats.std(j, 0);
            const double expect = sm[i] * logistic_of(-z) * recon(i, j) * recon(i, j);
            CHECK(joint(i, j) == doctest::Approx(expect).epsilon(1e-12));
            CHECK(joint(i, j) >= 0.0);
        }
}

TEST_CASE("a spatial discrepancy at the training mean contributes exactly one half") {
    const std::size_t n = 2, d0 = 2;
    Matrix assdis_t(n, 1, 0.3);
    Matrix assdis_s = Matrix::from_rows({{0.7}, {0.7}});
    Matrix window(n, d0, 0.0);
    Matrix recon(n, d0, 1.0);
    SpatialStats stats;
    stats.mean = Matrix(d0, 1, 0.7);
    stats.std = Matrix(d0, 1, 0.2);
    stats.from_train = true;
    Matrix joint = score_spatiotemporal_parts(assdis_t, assdis_s, recon, window, stats);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d0; ++j)
            CHECK(joint(i, j) == doctest::Approx(0.5 / static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("an extreme spatial discrepancy saturates the channel factor") {
    const std::size_t n = 2, d0 = 2;
    Matrix assdis_t(n, 1, 0.0);
    Matrix window(n, d0, 0.0);
    Matrix recon(n, d0, 1.0);
    SpatialStats stats;
    stats.mean = Matrix(d0, 1, 0.0);
    stats.std = Matrix(d0, 1, 1.0);
    stats.from_train = true;
    // Channel 0 far below the mean -> factor -> 1; channel 1 far above -> 0.
    Matrix assdis_s = Matrix::from_rows({{-40.0}, {40.0}});
    Matrix joint = score_spatiotemporal_parts(assdis_t, assdis_s, recon, window, stats);
    CHECK(joint(0, 0) > 0.5 - 1e-9);  // sm = 1/2, factor saturates at 1
    CHECK(joint(0, 1) < 1e-12);       // factor collapses to 0
}

TEST_CASE("channel softmax activation compresses uniform discrepancies to one over d0") {
    const std::size_t n = 2, d0 = 4;
    Matrix assdis_t(n, 1, 0.2);
    Matrix assdis_s(d0, 1, 1.3);  // same z-score on every channel
    Matrix window(n, d0, 0.0);
    Matrix recon(n, d0, 1.0);
    SpatialStats stats;
    stats.mean = Matrix(d0, 1, 1.0);
    stats.std = Matrix(d0, 1, 0.5);
    stats.from_train = true;
    Matrix joint = score_spatiotemporal_parts(assdis_t, assdis_s, recon, window, stats,
                                              SpatialActivation::ChannelSoftmax);
    // Each channel factor collapses to 1/d0, shrinking every cell.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d0; ++j)
            CHECK(joint(i, j) ==
                  doctest::Approx(0.5 / static_cast<double>(d0)).epsilon(1e-12));
    // The sigmoid activation keeps the factors independent of d0.
    Matrix sig = score_spatiotemporal_parts(assdis_t, assdis_s, recon, window, stats,
                                            SpatialActivation::Sigmoid);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d0; ++j) CHECK(sig(i, j) > joint(i, j));
}

TEST_CASE("joint scoring refuses statistics that were not fit on training data") {
    Matrix assdis_t(2, 1, 0.1);
    Matrix assdis_s(2, 1, 0.1);
    Matrix window(2, 2, 0.0);
    SpatialStats stats;
    stats.mean = Matrix(2, 1, 0.0);
    stats.std = Matrix(2, 1, 1.0);
    stats.from_train = false;
    CHECK_THROWS_AS(score_spatiotemporal_parts(assdis_t, assdis_s, window, window, stats),
                    UsageError);
}

TEST_CASE("score_spatiotemporal equals assembling the parts from the inference pass") {
    ModelConfig cfg = small_cfg();
    Rng rng(10);
    ModelState st = build_model(cfg, rng);
    Rng wr(11);
    std::vector<Matrix> train;
    for (int k = 0; k < 3; ++k) train.push_back(random_normal(cfg.window, cfg.d0, wr));
    SpatialStats stats = fit_spatial_stats(st, train);
    Matrix w = random_normal(cfg.window, cfg.d0, wr);
    ForwardOut out = model_infer(w, st);
    Matrix direct = score_spatiotemporal(st, w, stats);
    Matrix assembled = score_spatiotemporal_parts(out.assdis_t, out.assdis_s, out.recon, w, stats);
    REQUIRE(direct.same_shape(assembled));
    for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(direct.data()[i] == doctest::Approx(assembled.data()[i]).epsilon(1e-12));
}

TEST_CASE("threshold calibration interpolates between order statistics") {
    // 200 scores, half a percent anomaly budget: the numpy-style linear
    // interpolation lands between the 199th and 200th order statistics.
    std::vector<double> scores(200);
    for (std::size_t i = 0; i < 200; ++i) scores[i] = static_cast<double>(i + 1);
    CHECK(calibrate_threshold(scores, 0.5) == doctest::Approx(199.005).epsilon(1e-12));
    std::vector<int> hits = detect(scores, calibrate_threshold(scores, 0.5));
    CHECK(std::count(hits.begin(), hits.end(), 1) == 1);
    CHECK(hits[199] == 1);  // only the top score

    std::vector<double> four = {4.0, 1.0, 3.0, 2.0};  // order does not matter
    CHECK(calibrate_threshold(four, 25.0) == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("equal scores produce zero detections under the strict comparison") {
    std::vector<double> scores(50, 7.25);
    const double thr = calibrate_threshold(scores, 1.0);
    CHECK(thr == 7.25);
    std::vector<int> hits = detect(scores, thr);
    CHECK(std::count(hits.begin(), hits.end(), 1) == 0);
}

TEST_CASE("threshold calibration validates its inputs") {
    CHECK_THROWS_AS(calibrate_threshold({}, 1.0), DataError);
    std::vector<double> ok = {1.0, 2.0};
    CHECK_THROWS_AS(calibrate_threshold(ok, 0.0), UsageError);
    CHECK_THROWS_AS(calibrate_threshold(ok, 100.0), UsageError);
    CHECK_THROWS_AS(calibrate_threshold(ok, -3.0), UsageError);
    CHECK_NOTHROW(calibrate_threshold(ok, 99.999));
}

TEST_CASE("detection is strictly greater than the threshold") {
    std::vector<int> hits = detect({1.0, 2.0, 3.0}, 2.0);
    CHECK(hits == std::vector<int>{0, 0, 1});
}
