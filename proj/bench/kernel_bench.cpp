// Serial reference kernels vs their OpenMP counterparts on t-CNN-sized layers.
// Usage: kernel_bench [--repeats N] [--threads T]

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "fedka/kernels.hpp"

namespace k = fedka::kernels;
namespace ref = fedka::kernels::reference;

static std::vector<double> filled(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

static double best_ms(int repeats, const std::function<void()>& fn) {
    double best = 1e300;
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

static void report(const char* name, double serial, double parallel, bool same) {
    std::printf("%-24s %10.3f %10.3f %7.2fx  %s\n", name, serial, parallel, serial / parallel,
                same ? "identical" : "MISMATCH");
}

int main(int argc, char** argv) {
    int repeats = 5, threads = 0;
    CLI::App app{"Serial reference kernels vs OpenMP kernels"};
    app.add_option("-r,--repeats", repeats, "Timed repetitions; the best is reported")->check(CLI::PositiveNumber);
    app.add_option("-t,--threads", threads, "OpenMP threads (default: runtime setting)")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    if (threads > 0) omp_set_num_threads(threads);
    std::mt19937_64 rng(42);
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-24s %10s %10s %8s\n", "kernel", "serial ms", "omp ms", "speedup");

    {
        const k::DenseDims d{128, 1024, 512};
        const auto x = filled(d.batch * d.in, rng), w = filled(d.out * d.in, rng), b = filled(d.out, rng);
        std::vector<double> ys(d.batch * d.out), yp(ys.size());
        const double s = best_ms(repeats, [&] { ref::dense_forward(d, x, w, b, ys); });
        const double p = best_ms(repeats, [&] { k::dense_forward(d, x, w, b, yp); });
        report("dense_forward", s, p, ys == yp);

        const auto dy = filled(d.batch * d.out, rng);
        std::vector<double> gws(w.size()), gbs(b.size()), gwp(w.size()), gbp(b.size());
        const double s2 = best_ms(repeats, [&] { ref::dense_backward_params(d, dy, x, gws, gbs); });
        const double p2 = best_ms(repeats, [&] { k::dense_backward_params(d, dy, x, gwp, gbp); });
        report("dense_backward_params", s2, p2, gws == gwp && gbs == gbp);
    }
    {
        const k::ConvDims d{32, 32, 64, 12, 12, 5};
        const auto x = filled(d.batch * d.in_ch * d.height * d.width, rng);
        const auto w = filled(d.out_ch * d.in_ch * d.kernel * d.kernel, rng), b = filled(d.out_ch, rng);
        std::vector<double> ys(d.batch * d.out_ch * d.out_h() * d.out_w()), yp(ys.size());
        const double s = best_ms(repeats, [&] { ref::conv2d_forward(d, x, w, b, ys); });
        const double p = best_ms(repeats, [&] { k::conv2d_forward(d, x, w, b, yp); });
        report("conv2d_forward", s, p, ys == yp);

        const auto dy = filled(ys.size(), rng);
        std::vector<double> dxs(x.size()), dxp(x.size());
        const double s2 = best_ms(repeats, [&] { ref::conv2d_backward_input(d, dy, w, dxs); });
        const double p2 = best_ms(repeats, [&] { k::conv2d_backward_input(d, dy, w, dxp); });
        report("conv2d_backward_input", s2, p2, dxs == dxp);
    }
    return 0;
}
