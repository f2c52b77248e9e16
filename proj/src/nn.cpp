#include "fedka/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fedka/error.hpp"
#include "fedka/kernels.hpp"

namespace fedka::nn {

std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

Shape output_shape(const LayerDesc& l, const Shape& in, int j) {
    switch (l.kind) {
        case LayerKind::dense:
            if (l.in == 0 || l.out == 0) throw ShapeError(j, "dense layer needs positive widths");
            if (in.size() != 1 || in[0] != l.in)
                throw ShapeError(j, "dense expects (" + std::to_string(l.in) + ") but got " + shape_str(in));
            return {l.out};
        case LayerKind::relu:
            return in;
        case LayerKind::flatten:
            return {shape_size(in)};
        case LayerKind::conv2d:
            if (l.in == 0 || l.out == 0 || l.kernel == 0)
                throw ShapeError(j, "conv2d needs positive channels and kernel");
            if (in.size() != 3 || in[0] != l.in)
                throw ShapeError(j, "conv2d expects " + std::to_string(l.in) + " input channels, got " +
                                        shape_str(in));
            if (in[1] < l.kernel || in[2] < l.kernel)
                throw ShapeError(j, "conv2d kernel larger than input " + shape_str(in));
            return {l.out, in[1] - l.kernel + 1, in[2] - l.kernel + 1};
        case LayerKind::maxpool:
            if (l.kernel == 0) throw ShapeError(j, "maxpool needs a positive window");
            if (in.size() != 3) throw ShapeError(j, "maxpool expects (C,H,W), got " + shape_str(in));
            if (in[1] < l.kernel || in[2] < l.kernel)
                throw ShapeError(j, "maxpool window larger than input " + shape_str(in));
            return {in[0], in[1] / l.kernel, in[2] / l.kernel};
    }
    throw ShapeError(j, "unknown layer kind");
}

std::size_t layer_params(const LayerDesc& l) {
    switch (l.kind) {
        case LayerKind::dense: return l.in * l.out + l.out;
        case LayerKind::conv2d: return l.out * l.in * l.kernel * l.kernel + l.out;
        default: return 0;
    }
}

kernels::ConvDims conv_dims(const LayerDesc& l, const Shape& in, std::size_t batch) {
    return {batch, l.in, l.out, in[1], in[2], l.kernel};
}

kernels::PoolDims pool_dims(const LayerDesc& l, const Shape& in, std::size_t batch) {
    return {batch, in[0], in[1], in[2], l.kernel};
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<Shape> NetworkSpec::shapes() const {
    if (input_shape.empty() || shape_size(input_shape) == 0)
        throw ShapeError(-1, "input shape must be non-empty with positive dimensions");
    std::vector<Shape> out{input_shape};
    for (std::size_t j = 0; j < layers.size(); ++j)
        out.push_back(output_shape(layers[j], out.back(), static_cast<int>(j)));
    return out;
}

void NetworkSpec::validate() const {
    if (class_count == 0) throw ShapeError(-1, "class_count must be positive");
    if (layers.empty()) throw ShapeError(-1, "network has no layers");
    const auto s = shapes();
    if (s.back() != Shape{class_count})
        throw ShapeError(static_cast<int>(layers.size()) - 1,
                         "final output " + shape_str(s.back()) + " does not match class_count " +
                             std::to_string(class_count));
}

std::size_t NetworkSpec::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += layer_params(l);
    return n;
}

std::vector<std::size_t> NetworkSpec::param_offsets() const {
    std::vector<std::size_t> off;
    std::size_t n = 0;
    for (const auto& l : layers) {
        off.push_back(n);
        n += layer_params(l);
    }
    return off;
}

std::uint64_t NetworkSpec::hash() const { return fnv1a(spec_to_text(*this)); }

NetworkSpec mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t classes) {
    NetworkSpec spec;
    spec.class_count = classes;
    spec.input_shape = {inputs};
    std::size_t width = inputs;
    for (std::size_t h : hidden) {
        spec.layers.push_back(LayerDesc::dense(width, h));
        spec.layers.push_back(LayerDesc::relu());
        width = h;
    }
    spec.layers.push_back(LayerDesc::dense(width, classes));
    spec.validate();
    return spec;
}

NetworkSpec t_cnn(const Shape& input, std::size_t classes) {
    if (input.size() != 3) throw ShapeError(-1, "t-CNN expects a (C,H,W) input, got " + shape_str(input));
    NetworkSpec spec;
    spec.class_count = classes;
    spec.input_shape = input;
    spec.layers = {LayerDesc::conv2d(input[0], 32, 5), LayerDesc::relu(), LayerDesc::maxpool(2),
                   LayerDesc::conv2d(32, 64, 5),       LayerDesc::relu(), LayerDesc::maxpool(2),
                   LayerDesc::flatten()};
    const auto s = spec.shapes();
    spec.layers.push_back(LayerDesc::dense(shape_size(s.back()), 512));
    spec.layers.push_back(LayerDesc::relu());
    spec.layers.push_back(LayerDesc::dense(512, classes));
    spec.validate();
    return spec;
}

ModelState zero_state(const NetworkSpec& spec) {
    spec.validate();
    const std::size_t n = spec.param_count();
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), spec.hash()};
}

ModelState init_state(const NetworkSpec& spec, Rng& rng) {
    ModelState state = zero_state(spec);
    const auto offsets = spec.param_offsets();
    for (std::size_t j = 0; j < spec.layers.size(); ++j) {
        const auto& l = spec.layers[j];
        std::size_t weights = 0;
        double fan = 0.0;
        if (l.kind == LayerKind::dense) {
            weights = l.in * l.out;
            fan = static_cast<double>(l.in + l.out);
        } else if (l.kind == LayerKind::conv2d) {
            weights = l.out * l.in * l.kernel * l.kernel;
            fan = static_cast<double>((l.in + l.out) * l.kernel * l.kernel);
        } else {
            continue;
        }
        const double limit = std::sqrt(6.0 / fan);
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < weights; ++i) state.params[offsets[j] + i] = dist(rng);
    }
    return state;
}

void check_state(const ModelState& state, const NetworkSpec& spec) {
    if (state.spec_hash != spec.hash()) throw Error("model state does not belong to this network spec");
    const std::size_t n = spec.param_count();
    if (state.params.size() != n || state.momentum.size() != n)
        throw Error("model state has " + std::to_string(state.params.size()) + " params, spec needs " +
                    std::to_string(n));
}

Matrix ForwardPass::logits() const {
    Matrix m;
    m.rows = batch;
    m.data = values.back();
    m.cols = batch ? m.data.size() / batch : 0;
    return m;
}

ForwardPass forward_pass(const ModelState& state, const NetworkSpec& spec, const Matrix& inputs) {
    check_state(state, spec);
    const auto shapes = spec.shapes();
    if (inputs.cols != shape_size(shapes[0]))
        throw ShapeError(-1, "expected " + std::to_string(shape_size(shapes[0])) + " features per sample, got " +
                                 std::to_string(inputs.cols));
    if (!all_finite(inputs.data)) throw NumericError(-1, "non-finite value in network input");

    const std::size_t batch = inputs.rows;
    const auto offsets = spec.param_offsets();
    ForwardPass fwd;
    fwd.batch = batch;
    fwd.values.reserve(spec.layers.size() + 1);
    fwd.values.push_back(inputs.data);
    fwd.pool_argmax.resize(spec.layers.size());

    const std::span<const double> params(state.params);
    for (std::size_t j = 0; j < spec.layers.size(); ++j) {
        const auto& l = spec.layers[j];
        const auto& in = fwd.values[j];
        std::vector<double> out(batch * shape_size(shapes[j + 1]));
        switch (l.kind) {
            case LayerKind::dense: {
                const kernels::DenseDims d{batch, l.in, l.out};
                kernels::dense_forward(d, in, params.subspan(offsets[j], l.in * l.out),
                                       params.subspan(offsets[j] + l.in * l.out, l.out), out);
                break;
            }
            case LayerKind::conv2d: {
                const auto d = conv_dims(l, shapes[j], batch);
                const std::size_t nw = l.out * l.in * l.kernel * l.kernel;
                kernels::conv2d_forward(d, in, params.subspan(offsets[j], nw), params.subspan(offsets[j] + nw, l.out),
                                        out);
                break;
            }
            case LayerKind::maxpool: {
                fwd.pool_argmax[j].resize(out.size());
                kernels::maxpool_forward(pool_dims(l, shapes[j], batch), in, out, fwd.pool_argmax[j]);
                break;
            }
            case LayerKind::relu:
                kernels::relu_forward(in, out);
                break;
            case LayerKind::flatten:
                out = in;
                break;
        }
        if (!all_finite(out)) throw NumericError(static_cast<int>(j), "non-finite activation");
        fwd.values.push_back(std::move(out));
    }
    return fwd;
}

std::vector<double> backward_pass(const ModelState& state, const NetworkSpec& spec, const ForwardPass& fwd,
                                  const Matrix& dlogits) {
    const auto shapes = spec.shapes();
    const auto offsets = spec.param_offsets();
    const std::size_t batch = fwd.batch;
    if (dlogits.rows != batch || dlogits.cols != spec.class_count)
        throw ShapeError(static_cast<int>(spec.layers.size()) - 1, "logit gradient has the wrong shape");

    std::vector<double> grad(state.params.size(), 0.0);
    const std::span<const double> params(state.params);
    std::vector<double> delta = dlogits.data;
    for (std::size_t jj = spec.layers.size(); jj-- > 0;) {
        const auto& l = spec.layers[jj];
        const auto& in = fwd.values[jj];
        const bool need_input_grad = jj > 0;
        std::vector<double> din;
        switch (l.kind) {
            case LayerKind::dense: {
                const kernels::DenseDims d{batch, l.in, l.out};
                const std::size_t nw = l.in * l.out;
                kernels::dense_backward_params(d, delta, in, std::span(grad).subspan(offsets[jj], nw),
                                               std::span(grad).subspan(offsets[jj] + nw, l.out));
                if (need_input_grad) {
                    din.resize(in.size());
                    kernels::dense_backward_input(d, delta, params.subspan(offsets[jj], nw), din);
                }
                break;
            }
            case LayerKind::conv2d: {
                const auto d = conv_dims(l, shapes[jj], batch);
                const std::size_t nw = l.out * l.in * l.kernel * l.kernel;
                kernels::conv2d_backward_params(d, delta, in, std::span(grad).subspan(offsets[jj], nw),
                                                std::span(grad).subspan(offsets[jj] + nw, l.out));
                if (need_input_grad) {
                    din.resize(in.size());
                    kernels::conv2d_backward_input(d, delta, params.subspan(offsets[jj], nw), din);
                }
                break;
            }
            case LayerKind::maxpool:
                din.resize(in.size());
                kernels::maxpool_backward(pool_dims(l, shapes[jj], batch), delta, fwd.pool_argmax[jj], din);
                break;
            case LayerKind::relu:
                din.resize(in.size());
                kernels::relu_backward(in, delta, din);
                break;
            case LayerKind::flatten:
                din = std::move(delta);
                break;
        }
        if (!need_input_grad) break;
        delta = std::move(din);
    }
    return grad;
}

Matrix forward_logits(const ModelState& state, const NetworkSpec& spec, const Matrix& inputs) {
    return forward_pass(state, spec, inputs).logits();
}

namespace {

double row_logsumexp(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

void check_labels(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows) throw ShapeError(-1, "label count does not match batch size");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
            throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(logits.cols) + ")");
}

}  // namespace

std::vector<double> per_sample_ce(const Matrix& logits, std::span<const int> labels) {
    check_labels(logits, labels);
    std::vector<double> out(logits.rows);
    for (std::size_t r = 0; r < logits.rows; ++r) out[r] = row_logsumexp(logits.row(r)) - logits(r, labels[r]);
    return out;
}

double ce_loss_and_dlogits(const Matrix& logits, std::span<const int> labels, Matrix& dlogits) {
    check_labels(logits, labels);
    if (logits.rows == 0) throw Error("cross-entropy of an empty batch");
    dlogits = Matrix(logits.rows, logits.cols);
    const double inv_b = 1.0 / static_cast<double>(logits.rows);
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const auto z = logits.row(r);
        const double lse = row_logsumexp(z);
        total += lse - z[labels[r]];
        for (std::size_t c = 0; c < logits.cols; ++c) dlogits(r, c) = std::exp(z[c] - lse) * inv_b;
        dlogits(r, labels[r]) -= inv_b;
    }
    const double loss = total * inv_b;
    if (!std::isfinite(loss)) throw NumericError(-1, "non-finite cross-entropy");
    return loss;
}

LossGrad ce_loss_and_grad(const ModelState& state, const NetworkSpec& spec, const Batch& batch) {
    if (batch.labels.empty()) throw Error("cross-entropy of an empty batch");
    const auto fwd = forward_pass(state, spec, batch.inputs);
    Matrix dlogits;
    LossGrad out;
    out.loss = ce_loss_and_dlogits(fwd.logits(), batch.labels, dlogits);
    out.grad = backward_pass(state, spec, fwd, dlogits);
    return out;
}

void softmax_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto z = m.row(r);
        const double lse = row_logsumexp(z);
        for (double& v : z) v = std::exp(v - lse);
    }
}

void sgd_step(ModelState& state, std::span<const double> grad, const SgdConfig& cfg) {
    if (grad.size() != state.params.size())
        throw ShapeError(-1, "gradient has " + std::to_string(grad.size()) + " entries, state has " +
                                 std::to_string(state.params.size()));
    if (!(cfg.lr > 0.0)) throw Error("learning rate must be positive");
    if (!all_finite(grad)) throw NumericError(-1, "non-finite gradient entry");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double& v = state.momentum[i];
        double& p = state.params[i];
        v = cfg.momentum * v + (grad[i] + cfg.weight_decay * p);
        p -= cfg.lr * v;
    }
    if (!all_finite(state.params)) throw NumericError(-1, "parameters became non-finite after SGD step");
}

double finite_diff_check(const ModelState& state, const Objective& objective, std::size_t coord_sample,
                         double step, std::uint64_t seed) {
    if (coord_sample == 0) throw Error("finite-difference check needs at least one coordinate");
    if (!(step > 0.0)) throw Error("finite-difference step must be positive");
    const auto analytic = objective(state, true).grad;
    const std::size_t n = state.params.size();
    if (analytic.size() != n) throw ShapeError(-1, "objective gradient has the wrong length");

    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    const std::size_t m = std::min(coord_sample, n);
    Rng rng(seed);
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(coords[i], coords[pick(rng)]);
    }

    double worst = 0.0;
    ModelState probe = state;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t c = coords[i];
        const double orig = probe.params[c];
        probe.params[c] = orig + step;
        const double up = objective(probe, false).loss;
        probe.params[c] = orig - step;
        const double down = objective(probe, false).loss;
        probe.params[c] = orig;
        const double central = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[c]), std::abs(central), 1e-12});
        worst = std::max(worst, std::abs(analytic[c] - central) / denom);
    }
    return worst;
}

double finite_diff_check(const ModelState& state, const NetworkSpec& spec, const Batch& batch,
                         std::size_t coord_sample, double step, std::uint64_t seed) {
    const Objective ce = [&](const ModelState& s, bool with_grad) {
        if (with_grad) return ce_loss_and_grad(s, spec, batch);
        Matrix dl;
        return LossGrad{ce_loss_and_dlogits(forward_logits(s, spec, batch.inputs), batch.labels, dl), {}};
    };
    return finite_diff_check(state, ce, coord_sample, step, seed);
}

double kink_distance(const ModelState& state, const NetworkSpec& spec, const Matrix& inputs) {
    const auto fwd = forward_pass(state, spec, inputs);
    const auto shapes = spec.shapes();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < spec.layers.size(); ++j) {
        const auto& l = spec.layers[j];
        const auto& in = fwd.values[j];
        if (l.kind == LayerKind::relu) {
            for (double v : in) best = std::min(best, std::abs(v));
        } else if (l.kind == LayerKind::maxpool) {
            // all-zero windows behind a ReLU are dead units, not ties that can flip
            const bool after_relu = j > 0 && spec.layers[j - 1].kind == LayerKind::relu;
            const auto d = pool_dims(l, shapes[j], fwd.batch);
            for (std::size_t bc = 0; bc < d.batch * d.channels; ++bc)
                for (std::size_t y = 0; y < d.out_h(); ++y)
                    for (std::size_t x = 0; x < d.out_w(); ++x) {
                        double top = -std::numeric_limits<double>::infinity(), second = top;
                        for (std::size_t ky = 0; ky < l.kernel; ++ky)
                            for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                                const double v = in[(bc * d.height + y * l.kernel + ky) * d.width + x * l.kernel + kx];
                                if (v > top) {
                                    second = top;
                                    top = v;
                                } else if (v > second) {
                                    second = v;
                                }
                            }
                        if (after_relu && top == 0.0) continue;
                        if (l.kernel * l.kernel > 1) best = std::min(best, top - second);
                    }
        }
    }
    return best;
}

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

}  // namespace

std::string spec_to_text(const NetworkSpec& spec) {
    std::ostringstream os;
    os << "classes " << spec.class_count << "\ninput";
    for (auto d : spec.input_shape) os << ' ' << d;
    os << '\n';
    for (const auto& l : spec.layers) {
        os << kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::dense: os << ' ' << l.in << ' ' << l.out; break;
            case LayerKind::conv2d: os << ' ' << l.in << ' ' << l.out << ' ' << l.kernel; break;
            case LayerKind::maxpool: os << ' ' << l.kernel; break;
            default: break;
        }
        os << '\n';
    }
    return os.str();
}

NetworkSpec spec_from_text(const std::string& text) {
    NetworkSpec spec;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& why) { throw Error("network spec line " + std::to_string(lineno) + ": " + why); };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word) || word[0] == '#') continue;
        std::vector<std::size_t> args;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                const auto v = std::stoull(tok, &used);
                if (used != tok.size()) fail("bad integer '" + tok + "'");
                args.push_back(static_cast<std::size_t>(v));
            } catch (const std::logic_error&) {
                fail("bad integer '" + tok + "'");
            }
        }
        auto want = [&](std::size_t n) {
            if (args.size() != n) fail(word + " takes " + std::to_string(n) + " arguments");
        };
        if (word == "classes") {
            want(1);
            spec.class_count = args[0];
        } else if (word == "input") {
            if (args.empty()) fail("input needs at least one dimension");
            spec.input_shape = args;
        } else if (word == "dense") {
            want(2);
            spec.layers.push_back(LayerDesc::dense(args[0], args[1]));
        } else if (word == "conv2d") {
            want(3);
            spec.layers.push_back(LayerDesc::conv2d(args[0], args[1], args[2]));
        } else if (word == "maxpool") {
            want(1);
            spec.layers.push_back(LayerDesc::maxpool(args[0]));
        } else if (word == "relu") {
            want(0);
            spec.layers.push_back(LayerDesc::relu());
        } else if (word == "flatten") {
            want(0);
            spec.layers.push_back(LayerDesc::flatten());
        } else if (word == "softmax") {
            fail("softmax layers are not allowed; networks emit raw logits");
        } else {
            fail("unknown layer '" + word + "'");
        }
    }
    spec.validate();
    return spec;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, std::size_t& offset) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw ParseError("model state", offset, "unexpected end of data");
    offset += 8;
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_state(std::ostream& out, const ModelState& state) {
    put_u64(out, state.spec_hash);
    put_u64(out, state.params.size());
    for (double p : state.params) put_u64(out, std::bit_cast<std::uint64_t>(p));
    for (double m : state.momentum) put_u64(out, std::bit_cast<std::uint64_t>(m));
}

ModelState read_state(std::istream& in) {
    std::size_t offset = 0;
    ModelState s;
    s.spec_hash = get_u64(in, offset);
    const std::uint64_t n = get_u64(in, offset);
    if (n > (std::uint64_t{1} << 34)) throw ParseError("model state", 8, "implausible parameter count");
    s.params.resize(n);
    s.momentum.resize(n);
    for (auto& p : s.params) p = std::bit_cast<double>(get_u64(in, offset));
    for (auto& m : s.momentum) m = std::bit_cast<double>(get_u64(in, offset));
    return s;
}

}  // namespace fedka::nn
