#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedka/nn.hpp"

namespace fedka::data {

// Immutable labelled samples stored as one flat feature block.
struct LabeledDataset {
    std::string name;
    std::size_t class_count = 0;
    nn::Shape input_shape;
    std::vector<double> features;  // size() * feature_size() values
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_size() const { return nn::shape_size(input_shape); }
    std::span<const double> input(std::size_t i) const {
        return {features.data() + i * feature_size(), feature_size()};
    }
    // Throws unless labels are in range, the feature block matches and the set is non-empty.
    void validate() const;
    // Per-class sample counts (length class_count).
    std::vector<std::size_t> class_counts() const;
    // FNV-1a over shape, labels and raw feature bits; used to tell runs on
    // different data apart.
    std::uint64_t content_hash() const;
};

nn::Batch gather(const LabeledDataset& ds, std::span<const std::size_t> indices);
nn::Matrix gather_inputs(const LabeledDataset& ds, std::span<const std::size_t> indices);

// One unit-variance Gaussian cluster per class. Centres do not depend on the
// seed, so train and test sets drawn with different seeds share them:
//   classes <= dims : centre k = (separation / sqrt 2) * e_k  (all pairs `separation` apart)
//   dims >= 2       : centres on a circle in the first two axes, neighbours `separation` apart
//   dims == 1       : centre k = k * separation
LabeledDataset synth_blobs(std::size_t class_count, std::size_t per_class, std::size_t dims,
                           double separation, std::uint64_t seed);

std::vector<std::vector<double>> blob_centres(std::size_t class_count, std::size_t dims, double separation);

// IDX image/label pair (MNIST layout). Pixels are scaled to [0, 1]; images get
// input shape (1, rows, cols). Labels >= class_count are rejected.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::size_t class_count);

}  // namespace fedka::data
