#pragma once

// Dense-math kernels used by the network engine.
//
// `fedka::kernels` holds the OpenMP versions; `fedka::kernels::reference` holds
// plain serial loop nests kept as the testing oracle. Every parallel kernel
// splits work only across independent output elements and accumulates each
// element in the same order as the reference, so the two produce bit-identical
// results regardless of thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace fedka::kernels {

struct DenseDims {
    std::size_t batch;
    std::size_t in;
    std::size_t out;
};

// Valid (no padding), stride-1 convolution over NCHW tensors.
struct ConvDims {
    std::size_t batch;
    std::size_t in_ch;
    std::size_t out_ch;
    std::size_t height;
    std::size_t width;
    std::size_t kernel;

    std::size_t out_h() const { return height - kernel + 1; }
    std::size_t out_w() const { return width - kernel + 1; }
};

// Non-overlapping max pooling (stride == window); trailing rows/cols that do not
// fill a window are dropped.
struct PoolDims {
    std::size_t batch;
    std::size_t channels;
    std::size_t height;
    std::size_t width;
    std::size_t kernel;

    std::size_t out_h() const { return height / kernel; }
    std::size_t out_w() const { return width / kernel; }
};

// out[b,o] = bias[o] + sum_i in[b,i] * w[o,i]
void dense_forward(DenseDims d, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out);
// din[b,i] = sum_o dout[b,o] * w[o,i]
void dense_backward_input(DenseDims d, std::span<const double> dout, std::span<const double> w,
                          std::span<double> din);
// dw[o,i] = sum_b dout[b,o] * in[b,i];  dbias[o] = sum_b dout[b,o]
void dense_backward_params(DenseDims d, std::span<const double> dout, std::span<const double> in,
                           std::span<double> dw, std::span<double> dbias);

void conv2d_forward(ConvDims d, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(ConvDims d, std::span<const double> dout, std::span<const double> w,
                           std::span<double> din);
void conv2d_backward_params(ConvDims d, std::span<const double> dout, std::span<const double> in,
                            std::span<double> dw, std::span<double> dbias);

// argmax receives the flat input offset of each window's maximum; ties go to
// the first element in row-major order.
void maxpool_forward(PoolDims d, std::span<const double> in, std::span<double> out,
                     std::span<std::uint32_t> argmax);
void maxpool_backward(PoolDims d, std::span<const double> dout,
                      std::span<const std::uint32_t> argmax, std::span<double> din);

// ReLU with subgradient 0 at the origin.
void relu_forward(std::span<const double> in, std::span<double> out);
void relu_backward(std::span<const double> in, std::span<const double> dout, std::span<double> din);

namespace reference {

void dense_forward(DenseDims d, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out);
void dense_backward_input(DenseDims d, std::span<const double> dout, std::span<const double> w,
                          std::span<double> din);
void dense_backward_params(DenseDims d, std::span<const double> dout, std::span<const double> in,
                           std::span<double> dw, std::span<double> dbias);
void conv2d_forward(ConvDims d, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(ConvDims d, std::span<const double> dout, std::span<const double> w,
                           std::span<double> din);
void conv2d_backward_params(ConvDims d, std::span<const double> dout, std::span<const double> in,
                            std::span<double> dw, std::span<double> dbias);
void maxpool_forward(PoolDims d, std::span<const double> in, std::span<double> out,
                     std::span<std::uint32_t> argmax);
void maxpool_backward(PoolDims d, std::span<const double> dout,
                      std::span<const std::uint32_t> argmax, std::span<double> din);
void relu_forward(std::span<const double> in, std::span<double> out);
void relu_backward(std::span<const double> in, std::span<const double> dout, std::span<double> din);

}  // namespace reference

}  // namespace fedka::kernels
