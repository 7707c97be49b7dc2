// Times each OpenMP kernel against its serial reference twin and verifies
// that the outputs are bitwise identical.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "post/kernels.hpp"
#include "post/matrix.hpp"

namespace {

using post::Matrix;
using post::Rng;
namespace k = post::kernels;

double time_ms(const std::function<void()>& fn, int iters) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
    std::string name;
    double serial_ms;
    double parallel_ms;
    bool match;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel timing: OpenMP entry points vs serial reference twins"};
    std::size_t n = 384;
    int iters = 5;
    std::uint64_t seed = 42;
    app.add_option("-n,--size", n, "Matrix dimension");
    app.add_option("-i,--iters", iters, "Timed iterations per kernel");
    app.add_option("--seed", seed, "Input seed");
    CLI11_PARSE(app, argc, argv);

    Rng rng(seed);
    const Matrix a = post::random_normal(n, n, rng);
    const Matrix b = post::random_normal(n, n, rng);
    Matrix probs_a(n, n), probs_b(n, n);
    k::serial::row_softmax(a, probs_a);
    k::serial::row_softmax(b, probs_b);
    std::vector<double> sigma(n);
    for (std::size_t i = 0; i < n; ++i) sigma[i] = 0.5 + 2.0 * rng.uniform();

    std::vector<Row> rows;
    auto compare = [&rows](const std::string& name, Matrix& out_s, Matrix& out_p,
                           const std::function<void()>& serial_fn,
                           const std::function<void()>& parallel_fn, int iters) {
        Row r;
        r.name = name;
        r.serial_ms = time_ms(serial_fn, iters);
        r.parallel_ms = time_ms(parallel_fn, iters);
        r.match = bitwise_equal(out_s, out_p);
        rows.push_back(r);
    };

    Matrix cs(n, n), cp(n, n);
    Matrix vs(n, 1), vp(n, 1);
    compare("matmul_nn", cs, cp, [&] { k::serial::matmul_nn(a, b, cs); },
            [&] { k::matmul_nn(a, b, cp); }, iters);
    compare("matmul_nt", cs, cp, [&] { k::serial::matmul_nt(a, b, cs); },
            [&] { k::matmul_nt(a, b, cp); }, iters);
    compare("matmul_tn", cs, cp, [&] { k::serial::matmul_tn(a, b, cs); },
            [&] { k::matmul_tn(a, b, cp); }, iters);
    compare("row_softmax", cs, cp, [&] { k::serial::row_softmax(a, cs); },
            [&] { k::row_softmax(a, cp); }, iters);
    compare("sym_kl_rows", vs, vp, [&] { k::serial::sym_kl_rows(probs_a, probs_b, vs); },
            [&] { k::sym_kl_rows(probs_a, probs_b, vp); }, iters);
    compare("rescale_rows", cs, cp, [&] { k::serial::rescale_rows(probs_a, cs); },
            [&] { k::rescale_rows(probs_a, cp); }, iters);
    compare("gaussian_prior", cs, cp, [&] { k::serial::gaussian_prior_rows(sigma.data(), n, cs); },
            [&] { k::gaussian_prior_rows(sigma.data(), n, cp); }, iters);
    {
        Row r;
        r.name = "prox_sigmoid_l1";
        Matrix gs = a, gp = a;
        r.serial_ms = time_ms([&] { gs = a; k::serial::prox_sigmoid_l1(gs, 0.7, 20, 1e-8); }, iters);
        r.parallel_ms = time_ms([&] { gp = a; k::prox_sigmoid_l1(gp, 0.7, 20, 1e-8); }, iters);
        r.match = bitwise_equal(gs, gp);
        rows.push_back(r);
    }

    std::printf("%-16s %12s %12s %9s %s\n", "kernel", "serial ms", "parallel ms", "speedup",
                "bitwise");
    bool all_match = true;
    for (const Row& r : rows) {
        std::printf("%-16s %12.3f %12.3f %8.2fx %s\n", r.name.c_str(), r.serial_ms,
                    r.parallel_ms, r.serial_ms / r.parallel_ms, r.match ? "match" : "MISMATCH");
        all_match = all_match && r.match;
    }
    if (!all_match) {
        std::fprintf(stderr, "bitwise mismatch between serial and parallel kernels\n");
        return 1;
    }
    return 0;
}
