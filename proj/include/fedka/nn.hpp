#pragma once

// Small feed-forward network engine: layer specs, flat parameter state,
// forward/backward passes, softmax cross-entropy and momentum SGD.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedka/rng.hpp"

namespace fedka::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);

enum class LayerKind { dense, relu, conv2d, maxpool, flatten };

// dense: in/out are feature widths. conv2d: in/out are channel counts, kernel is
// the square filter side. maxpool: kernel is the window side.
struct LayerDesc {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel = 0;

    static LayerDesc dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0}; }
    static LayerDesc relu() { return {LayerKind::relu, 0, 0, 0}; }
    static LayerDesc conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k) {
        return {LayerKind::conv2d, in_ch, out_ch, k};
    }
    static LayerDesc maxpool(std::size_t k) { return {LayerKind::maxpool, 0, 0, k}; }
    static LayerDesc flatten() { return {LayerKind::flatten, 0, 0, 0}; }

    bool operator==(const LayerDesc&) const = default;
};

struct NetworkSpec {
    std::vector<LayerDesc> layers;
    std::size_t class_count = 0;
    Shape input_shape;

    // Throws ShapeError naming the first incompatible layer.
    void validate() const;
    // shapes()[0] is the input shape, shapes()[j + 1] the output of layer j.
    std::vector<Shape> shapes() const;
    std::size_t param_count() const;
    // Offset of each layer's parameters in the flat vector (weights then bias).
    std::vector<std::size_t> param_offsets() const;
    std::uint64_t hash() const;

    bool operator==(const NetworkSpec&) const = default;
};

// dense(in, h0) relu dense(h0, h1) relu ... dense(h_last, classes)
NetworkSpec mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes);

// Two 5x5 conv layers (32 and 64 filters), each followed by ReLU and 2x2 max
// pooling, then dense(512) + ReLU and the class projection. input is (C, H, W).
NetworkSpec t_cnn(const Shape& input, std::size_t classes);

struct ModelState {
    std::vector<double> params;
    std::vector<double> momentum;
    std::uint64_t spec_hash = 0;

    bool operator==(const ModelState&) const = default;
};

// Glorot-uniform weights, zero biases, zero momentum.
ModelState init_state(const NetworkSpec& spec, Rng& rng);
ModelState zero_state(const NetworkSpec& spec);

// Throws unless the state belongs to spec and is the right length.
void check_state(const ModelState& state, const NetworkSpec& spec);

// Row-major matrix; used for input batches and logits.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
};

struct Batch {
    Matrix inputs;
    std::vector<int> labels;
};

// Activations of every layer for one batch, kept for the backward pass.
struct ForwardPass {
    std::vector<std::vector<double>> values;  // values[0] = input, values[j+1] = output of layer j
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    std::size_t batch = 0;

    Matrix logits() const;
};

ForwardPass forward_pass(const ModelState& state, const NetworkSpec& spec, const Matrix& inputs);

// Gradient of an arbitrary scalar w.r.t. params given d(scalar)/d(logits).
std::vector<double> backward_pass(const ModelState& state, const NetworkSpec& spec,
                                  const ForwardPass& fwd, const Matrix& dlogits);

// Raw logits; the network never applies softmax.
Matrix forward_logits(const ModelState& state, const NetworkSpec& spec, const Matrix& inputs);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Mean softmax cross-entropy over the batch and its exact gradient.
LossGrad ce_loss_and_grad(const ModelState& state, const NetworkSpec& spec, const Batch& batch);

// Mean CE together with d(loss)/d(logits), for callers that fuse several
// objectives into one backward pass.
double ce_loss_and_dlogits(const Matrix& logits, std::span<const int> labels, Matrix& dlogits);

// Per-sample cross-entropy without averaging.
std::vector<double> per_sample_ce(const Matrix& logits, std::span<const int> labels);

void softmax_rows(Matrix& m);

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
};

// v <- momentum * v + (grad + weight_decay * params);  params <- params - lr * v
void sgd_step(ModelState& state, std::span<const double> grad, const SgdConfig& cfg);

// with_grad == false lets the objective skip its backward pass.
using Objective = std::function<LossGrad(const ModelState&, bool with_grad)>;

// max over sampled coordinates of |analytic - central| / max(|analytic|, |central|, 1e-12)
double finite_diff_check(const ModelState& state, const Objective& objective,
                         std::size_t coord_sample, double step, std::uint64_t seed);
double finite_diff_check(const ModelState& state, const NetworkSpec& spec, const Batch& batch,
                         std::size_t coord_sample, double step, std::uint64_t seed);

// Smallest distance of the batch to a non-differentiable point: ReLU
// pre-activation magnitudes and the gap between the two largest entries of each
// max-pool window. Gradient checks resample when this is too small.
double kink_distance(const ModelState& state, const NetworkSpec& spec, const Matrix& inputs);

// Text form of a spec: one layer per line, e.g. "dense 8 32", "conv2d 3 32 5".
std::string spec_to_text(const NetworkSpec& spec);
NetworkSpec spec_from_text(const std::string& text);

// Little-endian blob: u64 spec_hash, u64 n, n params, n momentum entries (f64).
void write_state(std::ostream& out, const ModelState& state);
ModelState read_state(std::istream& in);

}  // namespace fedka::nn
