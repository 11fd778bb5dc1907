#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfcp/network.hpp"
#include "dfcp/tensor.hpp"

namespace dfcp {

struct FeatureVector {
    Tensor values;  // rank-1, dimension d
    int source_id = 0;
    std::optional<int> trusted_label;
};

struct FeatureSet {
    std::vector<FeatureVector> vectors;
    int dim = 0;
    std::uint64_t provenance = 0;  // extractor-config hash

    int n() const { return static_cast<int>(vectors.size()); }
    /// Checks shared dimension, unique source ids, finite values.
    void validate() const;
    std::vector<int> trusted_classes() const;
};

enum class ExtractorKind : std::uint8_t { identity = 0, random_projection = 1, conv_encoder = 2 };

std::string extractor_kind_name(ExtractorKind k);
ExtractorKind extractor_kind_from_name(const std::string& s);

struct ConvEncoderLayer {
    int filters = 0;
    int kernel = 0;
};

struct ExtractorConfig {
    ExtractorKind kind = ExtractorKind::identity;
    int output_dim = 0;
    std::uint64_t seed = 0;
    // conv-encoder only: input geometry and layer stack (each conv followed
    // by relu, then a flattening stage; no pooling, no classifier)
    int in_h = 0, in_w = 0, in_c = 0;
    std::vector<ConvEncoderLayer> conv_layers;
    // random-projection only: flattened input size
    int input_dim = 0;
    bool standardize = false;

    void validate() const;
    std::uint64_t hash() const;
    NetworkSpec conv_spec() const;
};

/// Flattened output size of the conv-encoder stack.
int conv_encoder_output_dim(const ExtractorConfig& cfg);

/// Seeded parameters for the configured extractor. Identity has none;
/// random-projection gets a fixed Gaussian matrix scaled by 1/sqrt(d).
ParameterSet init_extractor_params(const ExtractorConfig& cfg);

FeatureVector extract(const Tensor& raw, const ExtractorConfig& cfg, const ParameterSet& params);

/// Order-preserving map of extract with source ids 0..n-1. trusted_labels,
/// when provided, must be the same length as the dataset.
FeatureSet extract_set(const std::vector<Tensor>& raws, const ExtractorConfig& cfg,
                       const ParameterSet& params,
                       const std::vector<std::optional<int>>& trusted_labels = {},
                       int threads = 1);

// CSV: header `source_id,label,f0..f{d-1}`, label empty when untrusted.
// Binary: three DFMT tensor blocks back to back — values (n x d),
// source ids (n), labels (n, -1 when untrusted).
void save_featureset_csv(const std::string& path, const FeatureSet& fs);
FeatureSet load_featureset_csv(const std::string& path);
void save_featureset_bin(const std::string& path, const FeatureSet& fs);
FeatureSet load_featureset_bin(const std::string& path);

/// Per-dimension (min, max) over the set.
std::pair<Tensor, Tensor> minmax_bounds(const FeatureSet& fs);

double euclidean(const Tensor& a, const Tensor& b);

}  // namespace dfcp
