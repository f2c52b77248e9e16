#include "fedka/kernels.hpp"

namespace fedka::kernels::reference {

void dense_forward(DenseDims d, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out) {
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t o = 0; o < d.out; ++o) {
            double acc = bias[o];
            for (std::size_t i = 0; i < d.in; ++i) acc += in[b * d.in + i] * w[o * d.in + i];
            out[b * d.out + o] = acc;
        }
    }
}

void dense_backward_input(DenseDims d, std::span<const double> dout, std::span<const double> w,
                          std::span<double> din) {
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < d.out; ++o) acc += dout[b * d.out + o] * w[o * d.in + i];
            din[b * d.in + i] = acc;
        }
    }
}

void dense_backward_params(DenseDims d, std::span<const double> dout, std::span<const double> in,
                           std::span<double> dw, std::span<double> dbias) {
    for (std::size_t o = 0; o < d.out; ++o) {
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t b = 0; b < d.batch; ++b) acc += dout[b * d.out + o] * in[b * d.in + i];
            dw[o * d.in + i] = acc;
        }
        double acc = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b) acc += dout[b * d.out + o];
        dbias[o] = acc;
    }
}

void conv2d_forward(ConvDims d, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t o = 0; o < d.out_ch; ++o)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = bias[o];
                    for (std::size_t c = 0; c < d.in_ch; ++c)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx)
                                acc += in[((b * d.in_ch + c) * d.height + y + ky) * d.width + x + kx] *
                                       w[((o * d.in_ch + c) * k + ky) * k + kx];
                    out[((b * d.out_ch + o) * oh + y) * ow + x] = acc;
                }
}

void conv2d_backward_input(ConvDims d, std::span<const double> dout, std::span<const double> w,
                           std::span<double> din) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t c = 0; c < d.in_ch; ++c)
            for (std::size_t iy = 0; iy < d.height; ++iy)
                for (std::size_t ix = 0; ix < d.width; ++ix) {
                    double acc = 0.0;
                    for (std::size_t o = 0; o < d.out_ch; ++o)
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            if (iy < ky || iy - ky >= oh) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                if (ix < kx || ix - kx >= ow) continue;
                                acc += dout[((b * d.out_ch + o) * oh + iy - ky) * ow + ix - kx] *
                                       w[((o * d.in_ch + c) * k + ky) * k + kx];
                            }
                        }
                    din[((b * d.in_ch + c) * d.height + iy) * d.width + ix] = acc;
                }
}

void conv2d_backward_params(ConvDims d, std::span<const double> dout, std::span<const double> in,
                            std::span<double> dw, std::span<double> dbias) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    for (std::size_t o = 0; o < d.out_ch; ++o) {
        for (std::size_t c = 0; c < d.in_ch; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b < d.batch; ++b)
                        for (std::size_t y = 0; y < oh; ++y)
                            for (std::size_t x = 0; x < ow; ++x)
                                acc += dout[((b * d.out_ch + o) * oh + y) * ow + x] *
                                       in[((b * d.in_ch + c) * d.height + y + ky) * d.width + x + kx];
                    dw[((o * d.in_ch + c) * k + ky) * k + kx] = acc;
                }
        double acc = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) acc += dout[((b * d.out_ch + o) * oh + y) * ow + x];
        dbias[o] = acc;
    }
}

void maxpool_forward(PoolDims d, std::span<const double> in, std::span<double> out,
                     std::span<std::uint32_t> argmax) {
    const std::size_t oh = d.out_h(), ow = d.out_w(), k = d.kernel;
    for (std::size_t bc = 0; bc < d.batch * d.channels; ++bc)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                std::size_t best = (bc * d.height + y * k) * d.width + x * k;
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t idx = (bc * d.height + y * k + ky) * d.width + x * k + kx;
                        if (in[idx] > in[best]) best = idx;
                    }
                const std::size_t o = (bc * oh + y) * ow + x;
                out[o] = in[best];
                argmax[o] = static_cast<std::uint32_t>(best);
            }
}

void maxpool_backward(PoolDims d, std::span<const double> dout,
                      std::span<const std::uint32_t> argmax, std::span<double> din) {
    for (auto& v : din) v = 0.0;
    const std::size_t n = d.batch * d.channels * d.out_h() * d.out_w();
    for (std::size_t o = 0; o < n; ++o) din[argmax[o]] += dout[o];
}

void relu_forward(std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(std::span<const double> in, std::span<const double> dout, std::span<double> din) {
    for (std::size_t i = 0; i < in.size(); ++i) din[i] = in[i] > 0.0 ? dout[i] : 0.0;
}

}  // namespace fedka::kernels::reference
