#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfcp/tensor.hpp"

namespace dfcp {

struct SyntheticSpec {
    int classes = 2;
    int dim = 8;
    int samples_per_class = 100;
    double spread = 1.0;       // isotropic per-class standard deviation
    double separation = 10.0;  // pairwise distance between class means
    double imbalance = 1.0;    // ratio of largest to smallest class size
    std::uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    std::vector<Tensor> x;
    std::vector<int> y;
    int classes = 0;
    int dim = 0;

    int n() const { return static_cast<int>(x.size()); }
};

/// Isotropic Gaussian blobs with class means on a regular simplex scaled to
/// the configured separation (requires dim >= classes). Class sizes scale
/// geometrically from samples_per_class down by the imbalance ratio.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// CSV rows `label,f0,...,f{D-1}`; a leading header line is skipped when the
/// first cell is not numeric.
Dataset load_csv_dataset(const std::string& path);

/// Raw u8 images (height*width*channels bytes each, scaled to [0,1]) listed
/// in a manifest CSV with rows `path,label`, paths relative to the manifest.
Dataset load_image_dir(const std::string& manifest, int height, int width, int channels);

struct SplitIdx {
    std::vector<int> train;
    std::vector<int> test;
};

/// Stratified by label, seeded; test gets round(fraction * n_c) per class.
SplitIdx stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Stratified trusted pick: round(fraction * n_c) per class, at least
/// min_per_class, drawn from the given index subset.
std::vector<int> stratified_subset(const Dataset& data, const std::vector<int>& from,
                                   double fraction, int min_per_class, std::uint64_t seed);

}  // namespace dfcp
