#include "fedka/data.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "fedka/error.hpp"

namespace fedka::data {

void LabeledDataset::validate() const {
    if (labels.empty()) throw Error("dataset '" + name + "' is empty");
    if (class_count == 0) throw Error("dataset '" + name + "' has no classes");
    if (features.size() != labels.size() * feature_size())
        throw Error("dataset '" + name + "' feature block does not match its sample count");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count)
            throw Error("dataset '" + name + "' sample " + std::to_string(i) + " has label " +
                        std::to_string(labels[i]) + " outside [0, " + std::to_string(class_count) + ")");
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
    std::vector<std::size_t> c(class_count, 0);
    for (int y : labels) ++c[static_cast<std::size_t>(y)];
    return c;
}

std::uint64_t LabeledDataset::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(class_count);
    for (auto d : input_shape) mix(d);
    for (int y : labels) mix(static_cast<std::uint64_t>(y));
    for (double x : features) mix(std::bit_cast<std::uint64_t>(x));
    return h;
}

nn::Matrix gather_inputs(const LabeledDataset& ds, std::span<const std::size_t> indices) {
    const std::size_t f = ds.feature_size();
    nn::Matrix m(indices.size(), f);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = ds.input(indices[r]);
        std::copy(src.begin(), src.end(), m.data.begin() + static_cast<std::ptrdiff_t>(r * f));
    }
    return m;
}

nn::Batch gather(const LabeledDataset& ds, std::span<const std::size_t> indices) {
    nn::Batch b;
    b.inputs = gather_inputs(ds, indices);
    b.labels.reserve(indices.size());
    for (auto i : indices) b.labels.push_back(ds.labels[i]);
    return b;
}

std::vector<std::vector<double>> blob_centres(std::size_t class_count, std::size_t dims, double separation) {
    std::vector<std::vector<double>> c(class_count, std::vector<double>(dims, 0.0));
    if (class_count <= dims) {
        for (std::size_t k = 0; k < class_count; ++k) c[k][k] = separation / std::numbers::sqrt2;
    } else if (dims >= 2) {
        const double step = 2.0 * std::numbers::pi / static_cast<double>(class_count);
        const double radius = separation / (2.0 * std::sin(step / 2.0));
        for (std::size_t k = 0; k < class_count; ++k) {
            c[k][0] = radius * std::cos(step * static_cast<double>(k));
            c[k][1] = radius * std::sin(step * static_cast<double>(k));
        }
    } else {
        for (std::size_t k = 0; k < class_count; ++k) c[k][0] = separation * static_cast<double>(k);
    }
    return c;
}

LabeledDataset synth_blobs(std::size_t class_count, std::size_t per_class, std::size_t dims, double separation,
                           std::uint64_t seed) {
    if (class_count == 0 || per_class == 0 || dims == 0) throw Error("synth_blobs needs positive sizes");
    if (!(separation >= 0.0)) throw Error("synth_blobs separation must be non-negative");
    const auto centres = blob_centres(class_count, dims, separation);
    LabeledDataset ds;
    ds.name = "blobs";
    ds.class_count = class_count;
    ds.input_shape = {dims};
    ds.features.reserve(class_count * per_class * dims);
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    // classes interleaved so any prefix of the dataset stays roughly balanced
    for (std::size_t i = 0; i < per_class; ++i)
        for (std::size_t k = 0; k < class_count; ++k) {
            for (std::size_t d = 0; d < dims; ++d) ds.features.push_back(centres[k][d] + noise(rng));
            ds.labels.push_back(static_cast<int>(k));
        }
    return ds;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    if (b.size() < off + 4)
        throw ParseError(path, b.size(), "header truncated: expected at least " + std::to_string(off + 4) +
                                             " bytes, file has " + std::to_string(b.size()));
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t class_count) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    if (be32(img, 0, images_path) != 0x00000803)
        throw ParseError(images_path, 0, "bad magic number, expected 0x00000803 (u8 images, 3 dims)");
    if (be32(lab, 0, labels_path) != 0x00000801)
        throw ParseError(labels_path, 0, "bad magic number, expected 0x00000801 (u8 labels, 1 dim)");

    const std::size_t n = be32(img, 4, images_path);
    const std::size_t rows = be32(img, 8, images_path);
    const std::size_t cols = be32(img, 12, images_path);
    const std::size_t n_labels = be32(lab, 4, labels_path);
    if (n != n_labels)
        throw ParseError(labels_path, 4, "label count " + std::to_string(n_labels) + " does not match image count " +
                                             std::to_string(n));
    const std::size_t img_expected = 16 + n * rows * cols;
    if (img.size() != img_expected)
        throw ParseError(images_path, std::min(img.size(), img_expected),
                         "expected " + std::to_string(img_expected) + " bytes, got " + std::to_string(img.size()));
    const std::size_t lab_expected = 8 + n;
    if (lab.size() != lab_expected)
        throw ParseError(labels_path, std::min(lab.size(), lab_expected),
                         "expected " + std::to_string(lab_expected) + " bytes, got " + std::to_string(lab.size()));

    LabeledDataset ds;
    ds.name = images_path;
    ds.class_count = class_count;
    ds.input_shape = {1, rows, cols};
    ds.features.resize(n * rows * cols);
    for (std::size_t i = 0; i < ds.features.size(); ++i) ds.features[i] = img[16 + i] / 255.0;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned y = lab[8 + i];
        if (y >= class_count)
            throw ParseError(labels_path, 8 + i,
                             "label " + std::to_string(y) + " outside [0, " + std::to_string(class_count) + ")");
        ds.labels[i] = static_cast<int>(y);
    }
    ds.validate();
    return ds;
}

}  // namespace fedka::data
