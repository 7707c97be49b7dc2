#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "post/matrix.hpp"
#include "post/probability.hpp"

using namespace post;

TEST_CASE("sinusoidal table matches the closed form") {
    Matrix t = sinusoidal_table(2, 4);
    REQUIRE(t.rows() == 2);
    REQUIRE(t.cols() == 4);
    // Position 0: sin(0), cos(0) interleaved across frequency pairs.
    CHECK(t(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t(0, 3) == doctest::Approx(1.0).epsilon(1e-12));
    // Position 1: frequencies 1 and 1/10000^(2/4) = 1/100.
    CHECK(t(1, 0) == doctest::Approx(0.8414709848078965).epsilon(1e-12));
    CHECK(t(1, 1) == doctest::Approx(0.5403023058681398).epsilon(1e-12));
    CHECK(t(1, 2) == doctest::Approx(0.009999833334166664).epsilon(1e-12));
    CHECK(t(1, 3) == doctest::Approx(0.9999500004166653).epsilon(1e-12));
}

TEST_CASE("sinusoidal table rejects bad shapes") {
    CHECK_THROWS_AS(sinusoidal_table(0, 4), DataError);
    CHECK_THROWS_AS(sinusoidal_table(3, 3), DataError);
    CHECK_THROWS_AS(sinusoidal_table(3, 0), DataError);
}

TEST_CASE("row softmax normalizes and matches hand values") {
    Matrix x = Matrix::from_rows({{1.0, 0.0}, {3.0, 3.0}});
    Matrix s = row_softmax(x);
    CHECK(s(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
    CHECK(s(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < s.cols(); ++j) sum += s(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("row softmax is shift invariant and overflow safe") {
    Matrix a = Matrix::from_rows({{1000.0, 999.0, 998.0}});
    Matrix b = Matrix::from_rows({{2.0, 1.0, 0.0}});
    Matrix sa = row_softmax(a);
    Matrix sb = row_softmax(b);
    for (std::size_t j = 0; j < 3; ++j) CHECK(sa(0, j) == doctest::Approx(sb(0, j)).epsilon(1e-12));
    CHECK(all_finite(sa));
}

TEST_CASE("tempered row softmax sharpens with small temperature") {
    Matrix x = Matrix::from_rows({{1.0, 0.0}});
    Matrix s = row_softmax(x, {0.5});
    CHECK(s(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(0.11920292202211755).epsilon(1e-12));
    // Temperature 1 reduces to the plain softmax.
    Matrix s1 = row_softmax(x, {1.0});
    Matrix plain = row_softmax(x);
    CHECK(s1(0, 0) == doctest::Approx(plain(0, 0)).epsilon(1e-15));
    CHECK(s1(0, 1) == doctest::Approx(plain(0, 1)).epsilon(1e-15));
}

TEST_CASE("tempered row softmax validates its temperatures") {
    Matrix x = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    CHECK_THROWS_AS(row_softmax(x, {0.5}), DataError);          // one per row required
    CHECK_THROWS_AS(row_softmax(x, {0.5, 0.0}), DataError);     // zero excluded
    CHECK_THROWS_AS(row_softmax(x, {0.5, 1.5}), DataError);     // above one excluded
    CHECK_THROWS_AS(row_softmax(x, {-0.5, 0.5}), DataError);    // negative excluded
    CHECK_NOTHROW(row_softmax(x, {1.0, 1e-3}));
}

TEST_CASE("row softmax rejects empty or non-finite input") {
    CHECK_THROWS_AS(row_softmax(Matrix()), DataError);
    Matrix bad = Matrix::from_rows({{1.0, std::nan("")}});
    CHECK_THROWS_AS(row_softmax(bad), DataError);
}

TEST_CASE("symmetric KL matches the hand-computed value") {
    double v = sym_kl({0.5, 0.5}, {0.9, 0.1});
    CHECK(v == doctest::Approx(0.8788898309344877).epsilon(1e-12));
}

TEST_CASE("symmetric KL is symmetric, nonnegative, and zero at equality") {
    std::vector<double> p = {0.2, 0.3, 0.5};
    std::vector<double> q = {0.6, 0.1, 0.3};
    CHECK(sym_kl(p, q) == doctest::Approx(sym_kl(q, p)).epsilon(1e-12));
    CHECK(sym_kl(p, q) > 0.0);
    CHECK(sym_kl(p, p) == 0.0);  // exactly zero: every log ratio vanishes
}

TEST_CASE("symmetric KL stays finite on zero entries via the floor") {
    double v = sym_kl({1.0, 0.0}, {0.0, 1.0});
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
}

TEST_CASE("sym_kl_rows reduces each row and keeps the n x 1 shape") {
    Matrix p = Matrix::from_rows({{0.5, 0.5}, {0.2, 0.8}});
    Matrix q = Matrix::from_rows({{0.9, 0.1}, {0.2, 0.8}});
    Matrix out = sym_kl_rows(p, q);
    REQUIRE(out.rows() == 2);
    REQUIRE(out.cols() == 1);
    CHECK(out(0, 0) == doctest::Approx(0.8788898309344877).epsilon(1e-12));
    CHECK(out(1, 0) == 0.0);
    CHECK_THROWS_AS(sym_kl_rows(p, Matrix(1, 2)), DataError);
}

TEST_CASE("rescale_rows divides by row sums") {
    Matrix m = Matrix::from_rows({{1.0, 3.0}, {2.0, 2.0}});
    Matrix r = rescale_rows(m);
    CHECK(r(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rescale_rows rejects negative mass and empty rows") {
    CHECK_THROWS_AS(rescale_rows(Matrix::from_rows({{1.0, -0.5}})), DataError);
    CHECK_THROWS_AS(rescale_rows(Matrix::from_rows({{0.0, 0.0}})), DataError);
    CHECK_THROWS_AS(rescale_rows(Matrix()), DataError);
}

TEST_CASE("rng is deterministic per seed and uniform_int is inclusive") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 16; ++i) {
        double ua = a.uniform();
        CHECK(ua == b.uniform());
        CHECK(ua >= 0.0);
        CHECK(ua < 1.0);
    }
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 16; ++i) differs = differs || (a2.uniform() != c.uniform());
    CHECK(differs);

    Rng d(7);
    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 400; ++i) {
        auto v = d.uniform_int(2, 4);
        CHECK(v >= 2);
        CHECK(v <= 4);
        saw_lo = saw_lo || v == 2;
        saw_hi = saw_hi || v == 4;
    }
    CHECK(saw_lo);
    CHECK(saw_hi);
    CHECK_THROWS_AS(d.uniform_int(5, 4), UsageError);
}
