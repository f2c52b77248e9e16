#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fedka/error.hpp"
#include "fedka/nn.hpp"
#include "fedka/rng.hpp"

using namespace fedka;
using namespace fedka::nn;

namespace {

Matrix matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    Matrix m(rows, cols);
    m.data = std::move(data);
    return m;
}

Batch random_batch(std::size_t n, std::size_t features, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
    Batch b;
    b.inputs = Matrix(n, features);
    for (auto& v : b.inputs.data) v = d(rng);
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(lab(rng));
    return b;
}

// Independent scalar oracle for dense -> relu -> dense with the documented
// flat layout (W1 out x in, b1, W2, b2).
std::vector<double> mlp_oracle(const std::vector<double>& p, std::size_t in, std::size_t hid, std::size_t out,
                               const std::vector<double>& x) {
    const double* w1 = p.data();
    const double* b1 = w1 + hid * in;
    const double* w2 = b1 + hid;
    const double* b2 = w2 + out * hid;
    std::vector<double> h(hid), z(out);
    for (std::size_t j = 0; j < hid; ++j) {
        double s = b1[j];
        for (std::size_t i = 0; i < in; ++i) s += w1[j * in + i] * x[i];
        h[j] = s > 0 ? s : 0;
    }
    for (std::size_t k = 0; k < out; ++k) {
        double s = b2[k];
        for (std::size_t j = 0; j < hid; ++j) s += w2[k * hid + j] * h[j];
        z[k] = s;
    }
    return z;
}

}  // namespace

TEST(NetworkSpec, MlpShapesAndParamCount) {
    const auto spec = mlp(8, {32}, 4);
    EXPECT_EQ(spec.param_count(), 8u * 32 + 32 + 32 * 4 + 4);
    EXPECT_EQ(spec.shapes().back(), Shape{4});
}

TEST(NetworkSpec, TCnnOnCifarShapeEmitsTenLogits) {
    const auto spec = t_cnn({3, 32, 32}, 10);
    EXPECT_EQ(spec.shapes().back(), Shape{10});
    // conv5 -> 28, pool -> 14, conv5 -> 10, pool -> 5: 64 * 5 * 5 features into the 512-unit layer
    EXPECT_EQ(spec.param_count(), 3u * 32 * 25 + 32 + 32u * 64 * 25 + 64 + 1600u * 512 + 512 + 512u * 10 + 10);
    Rng rng(1);
    const auto st = init_state(spec, rng);
    const auto logits = forward_logits(st, spec, Matrix(2, 3 * 32 * 32));
    EXPECT_EQ(logits.rows, 2u);
    EXPECT_EQ(logits.cols, 10u);
}

TEST(NetworkSpec, IncompatibleLayersNameTheLayer) {
    NetworkSpec spec;
    spec.class_count = 3;
    spec.input_shape = {4};
    spec.layers = {LayerDesc::dense(4, 5), LayerDesc::relu(), LayerDesc::dense(6, 3)};
    try {
        spec.validate();
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_EQ(e.layer(), 2);
    }
}

TEST(NetworkSpec, FinalWidthMustEqualClassCount) {
    NetworkSpec spec;
    spec.class_count = 3;
    spec.input_shape = {4};
    spec.layers = {LayerDesc::dense(4, 5)};
    EXPECT_THROW(spec.validate(), ShapeError);
}

TEST(NetworkSpec, TextRoundTripAndSoftmaxRejected) {
    const auto spec = t_cnn({1, 28, 28}, 10);
    const auto back = spec_from_text(spec_to_text(spec));
    EXPECT_EQ(spec_to_text(back), spec_to_text(spec));
    EXPECT_EQ(back.hash(), spec.hash());
    EXPECT_THROW(spec_from_text("classes 2\ninput 2\ndense 2 2\nsoftmax\n"), Error);
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
    const auto spec = mlp(5, {7}, 3);
    const auto st = zero_state(spec);
    const auto b = random_batch(4, 5, 3, 1);
    for (double v : forward_logits(st, spec, b.inputs).data) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityDenseLayer) {
    NetworkSpec spec;
    spec.class_count = 3;
    spec.input_shape = {3};
    spec.layers = {LayerDesc::dense(3, 3)};
    auto st = zero_state(spec);
    for (std::size_t i = 0; i < 3; ++i) st.params[i * 3 + i] = 1.0;
    const auto z = forward_logits(st, spec, matrix(1, 3, {1, 2, 3}));
    EXPECT_EQ(z.data, (std::vector<double>{1, 2, 3}));
}

TEST(Forward, MatchesScalarOracle) {
    const auto spec = mlp(4, {6}, 3);
    Rng rng(7);
    auto st = init_state(spec, rng);
    std::normal_distribution<double> d(0.0, 0.3);
    for (auto& v : st.params) v += d(rng);  // non-zero biases too
    const auto b = random_batch(5, 4, 3, 2);
    const auto z = forward_logits(st, spec, b.inputs);
    for (std::size_t r = 0; r < 5; ++r) {
        const auto row = b.inputs.row(r);
        const auto want = mlp_oracle(st.params, 4, 6, 3, {row.begin(), row.end()});
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(z(r, k), want[k], 1e-12);
    }
}

TEST(Forward, RejectsWrongWidthAndNonFiniteInput) {
    const auto spec = mlp(4, {6}, 3);
    const auto st = zero_state(spec);
    EXPECT_THROW(forward_logits(st, spec, Matrix(2, 5)), ShapeError);
    auto bad = Matrix(1, 4);
    bad.data[2] = std::nan("");
    EXPECT_THROW(forward_logits(st, spec, bad), NumericError);
}

TEST(Forward, RejectsStateOfAnotherSpec) {
    const auto a = mlp(4, {6}, 3);
    const auto b = mlp(4, {5}, 3);
    EXPECT_THROW(forward_logits(zero_state(a), b, Matrix(1, 4)), Error);
}

TEST(Forward, SoftmaxRowsSumToOne) {
    const auto spec = mlp(6, {8}, 5);
    Rng rng(3);
    const auto st = init_state(spec, rng);
    auto z = forward_logits(st, spec, random_batch(20, 6, 5, 4).inputs);
    softmax_rows(z);
    for (std::size_t r = 0; r < z.rows; ++r) {
        double s = 0.0;
        for (double v : z.row(r)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
    Matrix z(3, 4);
    Matrix dz;
    const double loss = ce_loss_and_dlogits(z, std::vector<int>{0, 1, 3}, dz);
    EXPECT_NEAR(loss, std::log(4.0), 1e-15);
    EXPECT_NEAR(loss, 1.3863, 1e-4);
}

TEST(CrossEntropy, MatchesHandComputedSoftmax) {
    const auto z = matrix(1, 3, {2.0, -1.0, 0.5});
    Matrix dz;
    const double loss = ce_loss_and_dlogits(z, std::vector<int>{2}, dz);
    const double denom = std::exp(2.0) + std::exp(-1.0) + std::exp(0.5);
    EXPECT_NEAR(loss, -std::log(std::exp(0.5) / denom), 1e-14);
    EXPECT_NEAR(dz(0, 0), std::exp(2.0) / denom, 1e-14);
    EXPECT_NEAR(dz(0, 2), std::exp(0.5) / denom - 1.0, 1e-14);
}

TEST(CrossEntropy, StableForHugeLogits) {
    const auto z = matrix(1, 2, {1000.0, 0.0});
    Matrix dz;
    EXPECT_NEAR(ce_loss_and_dlogits(z, std::vector<int>{1}, dz), 1000.0, 1e-9);
}

TEST(CrossEntropy, EmptyBatchAndBadLabelRejected) {
    const auto spec = mlp(2, {}, 2);
    const auto st = zero_state(spec);
    Batch empty;
    empty.inputs = Matrix(0, 2);
    EXPECT_THROW(ce_loss_and_grad(st, spec, empty), Error);
    Batch bad;
    bad.inputs = Matrix(1, 2);
    bad.labels = {5};
    EXPECT_THROW(ce_loss_and_grad(st, spec, bad), Error);
}

TEST(CrossEntropy, DeterministicBitForBit) {
    const auto spec = mlp(6, {8}, 4);
    Rng rng(11);
    const auto st = init_state(spec, rng);
    const auto b = random_batch(9, 6, 4, 12);
    const auto a = ce_loss_and_grad(st, spec, b);
    const auto c = ce_loss_and_grad(st, spec, b);
    EXPECT_EQ(a.loss, c.loss);
    EXPECT_EQ(a.grad, c.grad);
}

TEST(GradCheck, TwoLayerReluNet) {
    const auto spec = mlp(6, {12}, 4);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const auto st = init_state(spec, rng);
        const auto b = random_batch(10, 6, 4, seed + 100);
        ASSERT_GT(kink_distance(st, spec, b.inputs), 1e-6);
        EXPECT_LT(finite_diff_check(st, spec, b, 30, 1e-5, seed), 1e-4) << "seed " << seed;
    }
}

TEST(GradCheck, LinearNetIsNearlyExact) {
    const auto spec = mlp(5, {}, 3);
    Rng rng(2);
    const auto st = init_state(spec, rng);
    const auto b = random_batch(8, 5, 3, 3);
    EXPECT_LT(finite_diff_check(st, spec, b, 18, 1e-5, 1), 1e-7);
}

TEST(GradCheck, ConvAndPoolLayers) {
    NetworkSpec spec;
    spec.input_shape = {2, 7, 7};
    spec.class_count = 3;
    spec.layers = {LayerDesc::conv2d(2, 4, 3), LayerDesc::relu(), LayerDesc::maxpool(2), LayerDesc::flatten(),
                   LayerDesc::dense(16, 3)};
    spec.validate();
    int checked = 0;
    for (std::uint64_t seed = 1; checked < 5 && seed < 50; ++seed) {
        Rng rng(seed);
        const auto st = init_state(spec, rng);
        const auto b = random_batch(3, 98, 3, seed + 7);
        if (kink_distance(st, spec, b.inputs) < 1e-4) continue;  // resample away from kinks
        EXPECT_LT(finite_diff_check(st, spec, b, 30, 1e-5, seed), 1e-4) << "seed " << seed;
        ++checked;
    }
    EXPECT_EQ(checked, 5);
}

TEST(GradCheck, RejectsZeroStepAndZeroCoords) {
    const auto spec = mlp(2, {}, 2);
    const auto st = zero_state(spec);
    const auto b = random_batch(2, 2, 2, 1);
    EXPECT_THROW(finite_diff_check(st, spec, b, 5, 0.0, 1), Error);
    EXPECT_THROW(finite_diff_check(st, spec, b, 0, 1e-5, 1), Error);
}

TEST(Sgd, PlainStep) {
    NetworkSpec spec;
    spec.class_count = 1;
    spec.input_shape = {1};
    spec.layers = {LayerDesc::dense(1, 1)};
    auto st = zero_state(spec);
    st.params = {1.0, 0.0};
    sgd_step(st, std::vector<double>{2.0, 0.0}, {0.1, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(st.params[0], 0.8);
    EXPECT_EQ(st.params[1], 0.0);
}

TEST(Sgd, ZeroGradientIsFixedPoint) {
    const auto spec = mlp(3, {4}, 2);
    Rng rng(5);
    auto st = init_state(spec, rng);
    const auto before = st.params;
    sgd_step(st, std::vector<double>(before.size(), 0.0), {0.01, 0.9, 0.0});
    EXPECT_EQ(st.params, before);
}

TEST(Sgd, MomentumAndWeightDecayRecurrence) {
    NetworkSpec spec;
    spec.class_count = 1;
    spec.input_shape = {1};
    spec.layers = {LayerDesc::dense(1, 1)};
    auto st = zero_state(spec);
    st.params = {1.0, 0.0};
    const SgdConfig cfg{0.1, 0.9, 0.01};
    double p = 1.0, v = 0.0;
    for (int i = 0; i < 5; ++i) {
        sgd_step(st, std::vector<double>{0.5, 0.0}, cfg);
        v = 0.9 * v + (0.5 + 0.01 * p);
        p = p - 0.1 * v;
        EXPECT_DOUBLE_EQ(st.params[0], p);
        EXPECT_DOUBLE_EQ(st.momentum[0], v);
    }
}

TEST(Sgd, MatchesVanillaDescentWithoutMomentum) {
    const auto spec = mlp(3, {4}, 2);
    Rng rng(8);
    auto st = init_state(spec, rng);
    std::vector<double> g(st.params.size());
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& x : g) x = d(rng);
    auto want = st.params;
    for (std::size_t i = 0; i < want.size(); ++i) want[i] -= 0.05 * g[i];
    sgd_step(st, g, {0.05, 0.0, 0.0});
    EXPECT_EQ(st.params, want);
}

TEST(Sgd, NonFiniteGradientRejected) {
    const auto spec = mlp(2, {}, 2);
    auto st = zero_state(spec);
    std::vector<double> g(st.params.size(), 0.0);
    g[1] = INFINITY;
    EXPECT_THROW(sgd_step(st, g, {}), NumericError);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
    const auto spec = mlp(10, {20}, 5);
    Rng rng(9);
    const auto st = init_state(spec, rng);
    const double l1 = std::sqrt(6.0 / 30.0), l2 = std::sqrt(6.0 / 25.0);
    for (std::size_t i = 0; i < 200; ++i) EXPECT_LE(std::abs(st.params[i]), l1);
    for (std::size_t i = 200; i < 220; ++i) EXPECT_EQ(st.params[i], 0.0);
    for (std::size_t i = 220; i < 320; ++i) EXPECT_LE(std::abs(st.params[i]), l2);
    for (std::size_t i = 320; i < 325; ++i) EXPECT_EQ(st.params[i], 0.0);
    for (double m : st.momentum) EXPECT_EQ(m, 0.0);
}

TEST(Serialization, StateRoundTripIsExact) {
    const auto spec = mlp(4, {3}, 2);
    Rng rng(10);
    auto st = init_state(spec, rng);
    st.momentum[3] = -0.25;
    std::stringstream buf;
    write_state(buf, st);
    const auto back = read_state(buf);
    EXPECT_EQ(back.params, st.params);
    EXPECT_EQ(back.momentum, st.momentum);
    EXPECT_EQ(back.spec_hash, st.spec_hash);
}

TEST(Serialization, LittleEndianHeader) {
    const auto spec = mlp(1, {}, 1);
    const auto st = zero_state(spec);
    std::stringstream buf;
    write_state(buf, st);
    const std::string bytes = buf.str();
    ASSERT_EQ(bytes.size(), 16u + 2 * 2 * 8);
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // param count, low byte first
    for (int i = 9; i < 16; ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(Serialization, TruncatedBlobRejected) {
    const auto spec = mlp(4, {3}, 2);
    std::stringstream buf;
    write_state(buf, zero_state(spec));
    std::string bytes = buf.str();
    bytes.resize(bytes.size() - 5);
    std::stringstream cut(bytes);
    EXPECT_THROW(read_state(cut), ParseError);
}
