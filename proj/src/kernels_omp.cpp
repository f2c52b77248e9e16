#include "fedka/kernels.hpp"

#include <algorithm>

namespace fedka::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

void dense_forward(DenseDims d, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out) {
    const bool par = d.batch * d.in * d.out >= kParallelWork;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t o = 0; o < d.out; ++o) {
            const double* x = in.data() + b * d.in;
            const double* row = w.data() + o * d.in;
            double acc = bias[o];
            for (std::size_t i = 0; i < d.in; ++i) acc += x[i] * row[i];
            out[b * d.out + o] = acc;
        }
    }
}

void dense_backward_input(DenseDims d, std::span<const double> dout, std::span<const double> w,
                          std::span<double> din) {
    const bool par = d.batch * d.in * d.out >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t b = 0; b < d.batch; ++b) {
        const double* g = dout.data() + b * d.out;
        double* dst = din.data() + b * d.in;
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < d.out; ++o) acc += g[o] * w[o * d.in + i];
            dst[i] = acc;
        }
    }
}

void dense_backward_params(DenseDims d, std::span<const double> dout, std::span<const double> in,
                           std::span<double> dw, std::span<double> dbias) {
    const bool par = d.batch * d.in * d.out >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t o = 0; o < d.out; ++o) {
        double* row = dw.data() + o * d.in;
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t b = 0; b < d.batch; ++b) acc += dout[b * d.out + o] * in[b * d.in + i];
            row[i] = acc;
        }
        double acc = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b) acc += dout[b * d.out + o];
        dbias[o] = acc;
    }
}

void conv2d_forward(ConvDims d, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    const bool par = d.batch * d.out_ch * oh * ow * d.in_ch * k * k >= kParallelWork;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t o = 0; o < d.out_ch; ++o) {
            const double* filt = w.data() + o * d.in_ch * k * k;
            double* plane = out.data() + (b * d.out_ch + o) * oh * ow;
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = bias[o];
                    for (std::size_t c = 0; c < d.in_ch; ++c) {
                        const double* src = in.data() + ((b * d.in_ch + c) * d.height + y) * d.width + x;
                        const double* f = filt + c * k * k;
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) acc += src[ky * d.width + kx] * f[ky * k + kx];
                    }
                    plane[y * ow + x] = acc;
                }
        }
}

void conv2d_backward_input(ConvDims d, std::span<const double> dout, std::span<const double> w,
                           std::span<double> din) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    const bool par = d.batch * d.out_ch * oh * ow * d.in_ch * k * k >= kParallelWork;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t c = 0; c < d.in_ch; ++c)
            for (std::size_t iy = 0; iy < d.height; ++iy)
                for (std::size_t ix = 0; ix < d.width; ++ix) {
                    // valid kernel offsets that map (iy, ix) back into the output plane
                    const std::size_t ky_lo = iy >= oh ? iy - oh + 1 : 0, ky_hi = std::min(k, iy + 1);
                    const std::size_t kx_lo = ix >= ow ? ix - ow + 1 : 0, kx_hi = std::min(k, ix + 1);
                    double acc = 0.0;
                    for (std::size_t o = 0; o < d.out_ch; ++o) {
                        const double* g = dout.data() + (b * d.out_ch + o) * oh * ow;
                        const double* f = w.data() + (o * d.in_ch + c) * k * k;
                        for (std::size_t ky = ky_lo; ky < ky_hi; ++ky)
                            for (std::size_t kx = kx_lo; kx < kx_hi; ++kx)
                                acc += g[(iy - ky) * ow + ix - kx] * f[ky * k + kx];
                    }
                    din[((b * d.in_ch + c) * d.height + iy) * d.width + ix] = acc;
                }
}

void conv2d_backward_params(ConvDims d, std::span<const double> dout, std::span<const double> in,
                            std::span<double> dw, std::span<double> dbias) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    const bool par = d.batch * d.out_ch * oh * ow * d.in_ch * k * k >= kParallelWork;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (std::size_t o = 0; o < d.out_ch; ++o)
        for (std::size_t c = 0; c < d.in_ch; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b < d.batch; ++b) {
                        const double* g = dout.data() + (b * d.out_ch + o) * oh * ow;
                        const double* src = in.data() + ((b * d.in_ch + c) * d.height + ky) * d.width + kx;
                        for (std::size_t y = 0; y < oh; ++y)
                            for (std::size_t x = 0; x < ow; ++x) acc += g[y * ow + x] * src[y * d.width + x];
                    }
                    dw[((o * d.in_ch + c) * k + ky) * k + kx] = acc;
                }
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t o = 0; o < d.out_ch; ++o) {
        double acc = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b) {
            const double* g = dout.data() + (b * d.out_ch + o) * oh * ow;
            for (std::size_t j = 0; j < oh * ow; ++j) acc += g[j];
        }
        dbias[o] = acc;
    }
}

void maxpool_forward(PoolDims d, std::span<const double> in, std::span<double> out,
                     std::span<std::uint32_t> argmax) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    const bool par = d.batch * d.channels * d.height * d.width >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t bc = 0; bc < d.batch * d.channels; ++bc)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t best = (bc * d.height + y * k) * d.width + x * k;
                double best_v = in[best];
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::size_t row = (bc * d.height + y * k + ky) * d.width + x * k;
                    for (std::size_t kx = 0; kx < k; ++kx)
                        if (in[row + kx] > best_v) {
                            best = row + kx;
                            best_v = in[best];
                        }
                }
                const std::size_t o = (bc * oh + y) * ow + x;
                out[o] = best_v;
                argmax[o] = static_cast<std::uint32_t>(best);
            }
}

void maxpool_backward(PoolDims d, std::span<const double> dout,
                      std::span<const std::uint32_t> argmax, std::span<double> din) {
    std::fill(din.begin(), din.end(), 0.0);
    const std::size_t n = d.batch * d.channels * d.out_h() * d.out_w();
    // windows do not overlap, so every argmax target is written by exactly one output
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
    for (std::size_t o = 0; o < n; ++o) din[argmax[o]] += dout[o];
}

void relu_forward(std::span<const double> in, std::span<double> out) {
    const std::size_t n = in.size();
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
    for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(std::span<const double> in, std::span<const double> dout, std::span<double> din) {
    const std::size_t n = in.size();
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
    for (std::size_t i = 0; i < n; ++i) din[i] = in[i] > 0.0 ? dout[i] : 0.0;
}

}  // namespace fedka::kernels
