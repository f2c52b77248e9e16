#include <gtest/gtest.h>

#include <omp.h>

#include <random>
#include <vector>

#include "fedka/kernels.hpp"

namespace k = fedka::kernels;
namespace ref = fedka::kernels::reference;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Sizes large enough to cross the parallel threshold, with several threads
// even on a single-core machine.
class KernelParity : public ::testing::Test {
protected:
    void SetUp() override {
        saved_ = omp_get_max_threads();
        omp_set_num_threads(4);
    }
    void TearDown() override { omp_set_num_threads(saved_); }
    int saved_ = 1;
};

}  // namespace

TEST_F(KernelParity, Dense) {
    const k::DenseDims d{67, 129, 97};
    const auto x = randn(d.batch * d.in, 1), w = randn(d.out * d.in, 2), b = randn(d.out, 3);
    std::vector<double> a(d.batch * d.out), p(a.size());
    ref::dense_forward(d, x, w, b, a);
    k::dense_forward(d, x, w, b, p);
    EXPECT_EQ(a, p);

    const auto dy = randn(d.batch * d.out, 4);
    std::vector<double> dxa(x.size()), dxp(x.size());
    ref::dense_backward_input(d, dy, w, dxa);
    k::dense_backward_input(d, dy, w, dxp);
    EXPECT_EQ(dxa, dxp);

    std::vector<double> gwa(w.size()), gba(b.size()), gwp(w.size()), gbp(b.size());
    ref::dense_backward_params(d, dy, x, gwa, gba);
    k::dense_backward_params(d, dy, x, gwp, gbp);
    EXPECT_EQ(gwa, gwp);
    EXPECT_EQ(gba, gbp);
}

TEST_F(KernelParity, Conv) {
    const k::ConvDims d{9, 5, 7, 20, 18, 5};
    const auto x = randn(d.batch * d.in_ch * d.height * d.width, 5);
    const auto w = randn(d.out_ch * d.in_ch * d.kernel * d.kernel, 6), b = randn(d.out_ch, 7);
    const std::size_t ny = d.batch * d.out_ch * d.out_h() * d.out_w();
    std::vector<double> a(ny), p(ny);
    ref::conv2d_forward(d, x, w, b, a);
    k::conv2d_forward(d, x, w, b, p);
    EXPECT_EQ(a, p);

    const auto dy = randn(ny, 8);
    std::vector<double> dxa(x.size()), dxp(x.size());
    ref::conv2d_backward_input(d, dy, w, dxa);
    k::conv2d_backward_input(d, dy, w, dxp);
    EXPECT_EQ(dxa, dxp);

    std::vector<double> gwa(w.size()), gba(b.size()), gwp(w.size()), gbp(b.size());
    ref::conv2d_backward_params(d, dy, x, gwa, gba);
    k::conv2d_backward_params(d, dy, x, gwp, gbp);
    EXPECT_EQ(gwa, gwp);
    EXPECT_EQ(gba, gbp);
}

TEST_F(KernelParity, PoolAndRelu) {
    const k::PoolDims d{16, 12, 25, 24, 2};
    const auto x = randn(d.batch * d.channels * d.height * d.width, 9);
    const std::size_t ny = d.batch * d.channels * d.out_h() * d.out_w();
    std::vector<double> a(ny), p(ny);
    std::vector<std::uint32_t> ia(ny), ip(ny);
    ref::maxpool_forward(d, x, a, ia);
    k::maxpool_forward(d, x, p, ip);
    EXPECT_EQ(a, p);
    EXPECT_EQ(ia, ip);

    const auto dy = randn(ny, 10);
    std::vector<double> dxa(x.size()), dxp(x.size());
    ref::maxpool_backward(d, dy, ia, dxa);
    k::maxpool_backward(d, dy, ip, dxp);
    EXPECT_EQ(dxa, dxp);

    std::vector<double> ra(x.size()), rp(x.size());
    ref::relu_forward(x, ra);
    k::relu_forward(x, rp);
    EXPECT_EQ(ra, rp);
    const auto g = randn(x.size(), 11);
    ref::relu_backward(x, g, dxa);
    k::relu_backward(x, g, dxp);
    EXPECT_EQ(dxa, dxp);
}

TEST(Kernels, DenseSmallExample) {
    // out = b + W x with W = [[1,2],[3,4]], x = [1,1], b = [0.5,-0.5]
    const std::vector<double> x{1, 1}, w{1, 2, 3, 4}, b{0.5, -0.5};
    std::vector<double> y(2);
    k::dense_forward({1, 2, 2}, x, w, b, y);
    EXPECT_EQ(y, (std::vector<double>{3.5, 6.5}));
}

TEST(Kernels, ConvSmallExample) {
    // 3x3 input, 2x2 all-ones kernel: each output sums a 2x2 window
    const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9}, w{1, 1, 1, 1}, b{0};
    std::vector<double> y(4);
    k::conv2d_forward({1, 1, 1, 3, 3, 2}, x, w, b, y);
    EXPECT_EQ(y, (std::vector<double>{12, 16, 24, 28}));
}

TEST(Kernels, MaxPoolTiesGoToFirstElement) {
    const std::vector<double> x{1, 1, 1, 1};
    std::vector<double> y(1);
    std::vector<std::uint32_t> arg(1);
    k::maxpool_forward({1, 1, 2, 2, 2}, x, y, arg);
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(arg[0], 0u);
    std::vector<double> dx(4);
    k::maxpool_backward({1, 1, 2, 2, 2}, std::vector<double>{2.0}, arg, dx);
    EXPECT_EQ(dx, (std::vector<double>{2, 0, 0, 0}));
}

TEST(Kernels, MaxPoolDropsTrailingRows) {
    const std::vector<double> x{1, 9, 2, 3, 4, 5, 7, 8, 6};  // 3x3, window 2 -> 1x1
    std::vector<double> y(1);
    std::vector<std::uint32_t> arg(1);
    k::maxpool_forward({1, 1, 3, 3, 2}, x, y, arg);
    EXPECT_EQ(y[0], 9.0);
    EXPECT_EQ(arg[0], 1u);
}

TEST(Kernels, ReluSubgradientAtZeroIsZero) {
    const std::vector<double> x{-1.0, 0.0, 2.0}, g{5.0, 5.0, 5.0};
    std::vector<double> y(3), dx(3);
    k::relu_forward(x, y);
    k::relu_backward(x, g, dx);
    EXPECT_EQ(y, (std::vector<double>{0, 0, 2}));
    EXPECT_EQ(dx, (std::vector<double>{0, 0, 5}));
}
