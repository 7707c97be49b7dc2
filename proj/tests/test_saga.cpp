#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "post/matrix.hpp"
#include "post/saga.hpp"

using namespace post;

namespace {

SagaParams make_params(std::size_t n, std::size_t d, std::size_t d0, std::uint64_t seed,
                       double scale = 0.3) {
    Rng rng(seed);
    SagaParams p;
    p.w_h = {"w_h", random_normal(d, d0, rng, scale), {}, {}, {}, 0, true};
    p.theta = {"theta", random_normal(2 * n, 1, rng, scale), {}, {}, {}, 0, true};
    p.w_s = {"w_s", random_normal(d0, d, rng, scale), {}, {}, {}, 0, true};
    p.w_tau = {"w_tau", random_normal(n, 1, rng, scale), {}, {}, {}, 0, true};
    return p;
}

bool rows_stochastic(const Matrix& m, double tol = 1e-9) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (m(i, j) < 0.0) return false;
            sum += m(i, j);
        }
        if (std::fabs(sum - 1.0) > tol) return false;
    }
    return true;
}

double logistic_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("saga forward produces stochastic associations and bounded temperatures") {
    const std::size_t n = 10, d = 8, d0 = 4;
    SagaParams params = make_params(n, d, d0, 11);
    Rng rng(12);
    Matrix x = random_normal(n, d, rng);
    Matrix g = random_normal(d0, d0, rng);
    SagaOut out = saga_forward(x, g, params);
    CHECK(out.x_s.rows() == n);
    CHECK(out.x_s.cols() == d);
    CHECK(rows_stochastic(out.a));
    CHECK(rows_stochastic(out.a_post));
    CHECK(rows_stochastic(out.g_hat));
    REQUIRE(out.tau.size() == d0);
    for (double tau : out.tau) {
        CHECK(tau > 0.0);
        CHECK(tau < 1.0);
    }
}

TEST_CASE("zero attention parameter gives the uniform observation association") {
    const std::size_t n = 6, d = 4, d0 = 3;
    SagaParams params = make_params(n, d, d0, 13);
    params.theta.value.fill(0.0);  // u = v = 0 -> E = 0 -> uniform rows
    Rng rng(14);
    Matrix x = random_normal(n, d, rng);
    Matrix g(d0, d0, 0.0);
    SagaOut out = saga_forward(x, g, params);
    for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t j = 0; j < d0; ++j)
            CHECK(out.a(i, j) == doctest::Approx(1.0 / d0).epsilon(1e-12));
}

TEST_CASE("posterior reweights the uniform association by the graph weights") {
    // With A uniform the posterior row is g_tilde(i,:) / sum(g_tilde(i,:)).
    const std::size_t n = 6, d = 4, d0 = 2;
    SagaParams params = make_params(n, d, d0, 15);
    params.theta.value.fill(0.0);
    Rng rng(16);
    Matrix x = random_normal(n, d, rng);
    Matrix g = Matrix::from_rows({{4.0, 0.0}, {0.0, 4.0}});
    SagaOut out = saga_forward(x, g, params);
    const double s4 = logistic_of(4.0);  // ~0.982
    const double expect_diag = s4 / (s4 + 0.5);
    const double expect_off = 0.5 / (s4 + 0.5);
    CHECK(out.a_post(0, 0) == doctest::Approx(expect_diag).epsilon(1e-12));
    CHECK(out.a_post(0, 1) == doctest::Approx(expect_off).epsilon(1e-12));
    CHECK(out.a_post(1, 0) == doctest::Approx(expect_off).epsilon(1e-12));
    CHECK(out.a_post(1, 1) == doctest::Approx(expect_diag).epsilon(1e-12));
    // Equal logits leave the uniform association untouched.
    SagaOut flat = saga_forward(x, Matrix(d0, d0, 1.3), params);
    for (std::size_t i = 0; i < d0 * d0; ++i)
        CHECK(flat.a_post.data()[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("temperature sharpens the tempered prior rows") {
    const std::size_t n = 8, d = 6, d0 = 3;
    Matrix x(n, d, 1.0);  // positive profiles pin the temperature sign below
    Matrix g = Matrix::from_rows({{1.0, 0.0, -1.0}, {0.0, 1.0, 0.0}, {-1.0, 0.0, 1.0}});

    // Strongly negative temperature projection -> tau near 0 -> hard rows;
    // strongly positive -> tau near 1 -> plain softmax of the logits.
    SagaParams cold = make_params(n, d, d0, 18);
    cold.w_h.value.fill(0.1);  // profiles all 0.6, so row sums are positive
    cold.w_tau.value.fill(-3.0);
    SagaParams warm = make_params(n, d, d0, 18);
    warm.w_tau.value.fill(3.0);
    // Share every other parameter so only the temperature differs.
    warm.w_h.value = cold.w_h.value;
    cold.theta.value = warm.theta.value;
    cold.w_s.value = warm.w_s.value;

    SagaOut out_cold = saga_forward(x, g, cold);
    SagaOut out_warm = saga_forward(x, g, warm);
    for (std::size_t i = 0; i < d0; ++i) CHECK(out_cold.tau[i] < out_warm.tau[i]);
    // Colder temperature concentrates more mass on each row's argmax logit.
    CHECK(out_cold.g_hat(0, 0) > out_warm.g_hat(0, 0));
    CHECK(out_cold.g_hat(1, 1) > out_warm.g_hat(1, 1));
}

TEST_CASE("spatial discrepancy is zero iff prior equals observation") {
    Matrix u(3, 3, 1.0 / 3.0);
    Matrix skew = Matrix::from_rows(
        {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}});
    Matrix zero = assdis_s({u, skew}, {u, skew});
    REQUIRE(zero.rows() == 3);
    REQUIRE(zero.cols() == 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(zero(i, 0) == 0.0);
    Matrix nonzero = assdis_s({u}, {skew});
    for (std::size_t i = 0; i < 3; ++i) CHECK(nonzero(i, 0) > 0.0);
    // Two layers average: (0 + d) / 2.
    Matrix mixed = assdis_s({u, u}, {u, skew});
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(mixed(i, 0) == doctest::Approx(0.5 * nonzero(i, 0)).epsilon(1e-12));
    CHECK_THROWS_AS(assdis_s({}, {}), DataError);
    CHECK_THROWS_AS(assdis_s({u}, {u, u}), DataError);
}

TEST_CASE("knn graph init links every channel to its nearest neighbors") {
    // Two channels: each one's only neighbor is the other, so with k = 1 the
    // whole 2x2 logit matrix sits at +c0.
    Rng rng(19);
    Matrix series(50, 2);
    for (std::size_t t = 0; t < 50; ++t) {
        series(t, 0) = std::sin(0.3 * static_cast<double>(t));
        series(t, 1) = rng.normal();
    }
    Matrix g = knn_init(series, 1, 2.0);
    REQUIRE(g.rows() == 2);
    REQUIRE(g.cols() == 2);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == 2.0);
}

TEST_CASE("knn graph init keeps the top correlated channels and cuts the rest") {
    // Channels 0 and 1 are identical up to sign (|corr| = 1); channel 2 is an
    // independent noise stream with small sample correlation to both.
    Rng rng(20);
    Matrix series(400, 3);
    for (std::size_t t = 0; t < 400; ++t) {
        double s = std::sin(0.21 * static_cast<double>(t)) + 0.01 * rng.normal();
        series(t, 0) = s;
        series(t, 1) = -s;
        series(t, 2) = rng.normal();
    }
    Matrix g = knn_init(series, 1, 2.0);
    CHECK(g(0, 0) == 2.0);   // self link always kept
    CHECK(g(0, 1) == 2.0);   // strongest |correlation|
    CHECK(g(0, 2) == -2.0);  // cut
    CHECK(g(1, 0) == 2.0);
    CHECK(g(2, 2) == 2.0);
}

TEST_CASE("knn graph init validates its arguments") {
    Rng rng(21);
    Matrix ok = random_normal(10, 3, rng);
    CHECK_THROWS_AS(knn_init(random_normal(10, 1, rng), 1, 2.0), DataError);
    CHECK_THROWS_AS(knn_init(ok, 0, 2.0), DataError);
    CHECK_THROWS_AS(knn_init(ok, 3, 2.0), DataError);  // k must stay below d0
    CHECK_THROWS_AS(knn_init(random_normal(1, 3, rng), 1, 2.0), DataError);
}

TEST_CASE("identity graph init is diagonal at plus-minus c0") {
    Matrix g = identity_init(3, 2.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(g(i, j) == (i == j ? 2.0 : -2.0));
    CHECK_THROWS_AS(identity_init(0, 2.0), DataError);
}

TEST_CASE("saga rejects mismatched shapes and non-finite input") {
    const std::size_t n = 6, d = 4, d0 = 3;
    SagaParams params = make_params(n, d, d0, 22);
    Rng rng(23);
    Matrix x = random_normal(n, d, rng);
    Matrix g(d0, d0, 0.0);
    CHECK_THROWS_AS(saga_forward(random_normal(n, d + 1, rng), g, params), DataError);
    CHECK_THROWS_AS(saga_forward(random_normal(n + 1, d, rng), g, params), DataError);
    CHECK_THROWS_AS(saga_forward(x, Matrix(d0 + 1, d0 + 1, 0.0), params), DataError);
    Matrix bad = x;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(saga_forward(bad, g, params), NumericError);
}
