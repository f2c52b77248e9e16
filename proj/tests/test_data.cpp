#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fedka/data.hpp"
#include "fedka/error.hpp"
#include "fedka/metrics.hpp"
#include "fedka/rng.hpp"

using namespace fedka;
using namespace fedka::data;

namespace {

const std::string kImages = std::string(FEDKA_TEST_DATA) + "/tiny-images.idx3-ubyte";
const std::string kLabels = std::string(FEDKA_TEST_DATA) + "/tiny-labels.idx1-ubyte";

std::string temp_copy(const std::string& src, const std::string& name, std::size_t keep_bytes) {
    std::ifstream in(src, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(std::min(bytes.size(), keep_bytes));
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream(path, std::ios::binary) << bytes;
    return path;
}

// Full-batch gradient descent on a centralized model, then test accuracy.
double train_and_score(const LabeledDataset& train, const LabeledDataset& test, const std::vector<std::size_t>& hidden) {
    const auto spec = nn::mlp(train.feature_size(), hidden, train.class_count);
    Rng rng(1);
    auto st = nn::init_state(spec, rng);
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    const auto batch = gather(train, all);
    for (int it = 0; it < 300; ++it) nn::sgd_step(st, nn::ce_loss_and_grad(st, spec, batch).grad, {0.1, 0.9, 0.0});
    return metrics::evaluate(st, spec, test).global;
}

}  // namespace

TEST(Blobs, SizesAndBalancedLabels) {
    const auto ds = synth_blobs(4, 200, 8, 6.0, 1);
    EXPECT_EQ(ds.size(), 800u);
    EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{200, 200, 200, 200}));
    EXPECT_EQ(ds.input_shape, nn::Shape{8});
    ds.validate();
}

TEST(Blobs, DeterministicGivenSeed) {
    const auto a = synth_blobs(3, 50, 4, 5.0, 9);
    const auto b = synth_blobs(3, 50, 4, 5.0, 9);
    const auto c = synth_blobs(3, 50, 4, 5.0, 10);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.content_hash(), b.content_hash());
    EXPECT_NE(a.content_hash(), c.content_hash());
}

TEST(Blobs, CentresAreSeparationApart) {
    for (auto [k, dims] : {std::pair<std::size_t, std::size_t>{4, 8}, {6, 2}, {3, 1}}) {
        const auto c = blob_centres(k, dims, 6.0);
        double nearest = INFINITY;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = a + 1; b < k; ++b) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < dims; ++d) d2 += (c[a][d] - c[b][d]) * (c[a][d] - c[b][d]);
                nearest = std::min(nearest, std::sqrt(d2));
            }
        EXPECT_NEAR(nearest, 6.0, 1e-12) << k << " classes in " << dims << " dims";
    }
}

TEST(Blobs, EmpiricalMeanAndVariance) {
    const auto ds = synth_blobs(2, 5000, 3, 4.0, 3);
    const auto c = blob_centres(2, 3, 4.0);
    double mean = 0.0, var = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] != 1) continue;
        const double v = ds.input(i)[1] - c[1][1];
        mean += v;
        var += v * v;
        ++n;
    }
    EXPECT_NEAR(mean / n, 0.0, 0.05);
    EXPECT_NEAR(var / n, 1.0, 0.06);
}

TEST(Blobs, WellSeparatedIsLinearlySolvable) {
    const auto train = synth_blobs(4, 200, 2, 8.0, 1);
    const auto test = synth_blobs(4, 500, 2, 8.0, 2);
    EXPECT_GT(train_and_score(train, test, {}), 0.95);
}

TEST(Blobs, ZeroSeparationIsChance) {
    const auto train = synth_blobs(4, 200, 2, 0.0, 1);
    const auto test = synth_blobs(4, 1000, 2, 0.0, 2);
    EXPECT_NEAR(train_and_score(train, test, {16}), 0.25, 0.05);
}

TEST(Idx, FixtureHasExactPixels) {
    const auto ds = load_idx(kImages, kLabels, 10);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.input_shape, (nn::Shape{1, 2, 3}));
    EXPECT_EQ(ds.labels, (std::vector<int>{3, 1}));
    const std::vector<double> first{0.0, 1.0, 0.2, 0.4, 0.6, 0.8};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(ds.input(0)[i], first[i]);
    EXPECT_DOUBLE_EQ(ds.input(1)[5], 6.0 / 255.0);
}

TEST(Idx, TruncatedImageFileNamesLengths) {
    const auto cut = temp_copy(kImages, "fedka-truncated.idx3", 25);
    try {
        load_idx(cut, kLabels, 10);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 25u);
        EXPECT_NE(std::string(e.what()).find("expected 28 bytes, got 25"), std::string::npos) << e.what();
    }
}

TEST(Idx, TruncatedHeaderRejected) {
    const auto cut = temp_copy(kImages, "fedka-header.idx3", 6);
    EXPECT_THROW(load_idx(cut, kLabels, 10), ParseError);
}

TEST(Idx, LabelOutOfRangeRejected) {
    try {
        load_idx(kImages, kLabels, 3);  // label 3 is not < 3
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 8u);
    }
}

TEST(Idx, SwappedFilesFailOnMagic) {
    try {
        load_idx(kLabels, kImages, 10);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Idx, CountMismatchRejected) {
    const auto one = temp_copy(kLabels, "fedka-one-label.idx1", 9);
    // rewrite the count field to 1 so lengths agree but counts do not
    {
        std::fstream f(one, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(7);
        f.put(1);
    }
    EXPECT_THROW(load_idx(kImages, one, 10), ParseError);
}

TEST(Dataset, ValidateRejectsBadLabels) {
    auto ds = synth_blobs(2, 3, 2, 1.0, 1);
    ds.labels[0] = 2;
    EXPECT_THROW(ds.validate(), Error);
    LabeledDataset empty;
    empty.class_count = 2;
    empty.input_shape = {2};
    EXPECT_THROW(empty.validate(), Error);
}

TEST(Dataset, GatherCopiesRowsAndLabels) {
    const auto ds = synth_blobs(3, 4, 2, 1.0, 1);
    const std::vector<std::size_t> ids{5, 0};
    const auto b = gather(ds, ids);
    EXPECT_EQ(b.labels, (std::vector<int>{ds.labels[5], ds.labels[0]}));
    EXPECT_EQ(b.inputs(0, 1), ds.input(5)[1]);
    EXPECT_EQ(b.inputs(1, 0), ds.input(0)[0]);
}
