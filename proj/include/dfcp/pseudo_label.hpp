#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfcp/clustering.hpp"
#include "dfcp/feature_extraction.hpp"
#include "dfcp/network.hpp"
#include "dfcp/optimizer.hpp"

namespace dfcp {

/// Twin-branch similarity encoder. Both branches evaluate the same
/// ParameterSet; sharing is structural, not copied.
struct SiameseEncoder {
    NetworkSpec spec;
    ParameterSet params;
    double train_margin = 1.0;
    double tau_star = 0.0;  // set after select_threshold
};

struct PairSample {
    FeatureVector a;
    FeatureVector b;
    int h = 0;  // 1 = same class (paper convention)
};

/// Pairwise loss exactly as trained: with D = ||f(a)-f(b)||,
///   L = (1-h) * D^2/2 + h * max(0, margin - D)^2 / 2.
/// The paper's h convention is inverted relative to the common contrastive
/// loss; standard_convention=true flips it for comparison runs.
double contrastive_loss(const PairSample& pair, const SiameseEncoder& enc, double margin,
                        bool standard_convention = false);

struct SiameseTrainConfig {
    int hidden = 32;
    int embedding = 16;
    double margin = 1.0;
    int epochs = 30;
    int batch = 32;
    OptimizerConfig opt;
    std::uint64_t seed = 0;
    bool standard_contrastive = false;
    // optional conv front so extractor weights can be borrowed; input must be
    // reshapeable to in_h x in_w x in_c
    int in_h = 0, in_w = 0, in_c = 0;
    std::vector<ConvEncoderLayer> conv_layers;
};

struct SiameseTrainLog {
    std::vector<double> epoch_loss;
};

NetworkSpec siamese_spec(const SiameseTrainConfig& cfg, int input_dim);

/// Minibatch gradient descent on balanced positive/negative pairs drawn from
/// the trusted labeled subset. Deterministic per seed.
SiameseEncoder train_siamese(const FeatureSet& trusted, const SiameseTrainConfig& cfg,
                             SiameseTrainLog* log = nullptr);

/// ||f(a) - f(b)|| in embedding space.
double similarity_distance(const SiameseEncoder& enc, const FeatureVector& a,
                           const FeatureVector& b);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// 0/0 is defined as 0 for all three scores.
Prf prf1(long long tp, long long fp, long long fn);

struct ThresholdSweep {
    struct Row {
        double tau = 0.0;
        Prf prf;
    };
    std::vector<Row> rows;
    double tau_star = 0.0;
};

/// Predict same-class when distance <= tau; tau* maximizes F1, ties to the
/// smaller tau.
ThresholdSweep select_threshold(const SiameseEncoder& enc,
                                const std::vector<PairSample>& validation,
                                const std::vector<double>& grid);

struct PseudoLabeledSet {
    std::map<int, int> label;         // source_id -> class (outlier_class allowed)
    std::map<int, double> confidence; // tau* - nearest trusted distance
    int outlier_class = 0;
    int n_classes = 0;                // trusted classes, outlier_class == n_classes
};

/// 1-NN labeling under the learned metric: a cluster member takes the label
/// of its nearest trusted sample when within tau*, otherwise the outlier
/// class. Bucket (-1) members go straight to the outlier class; trusted
/// samples keep their labels verbatim.
PseudoLabeledSet assign_labels(const SiameseEncoder& enc, double tau_star,
                               const FeatureSet& trusted, const FeatureSet& all,
                               const ClusterSet& refined, int threads = 1);

struct PurityReport {
    std::map<int, double> per_cluster;
    double average = 0.0;  // weighted by cluster size, outlier bucket excluded
    std::vector<int> skipped;
};

PurityReport purity(const ClusterSet& clusters, const std::map<int, int>& labels);

/// Balanced random pair set from the trusted subset (per_kind of each kind).
std::vector<PairSample> make_validation_pairs(const FeatureSet& trusted, int per_kind,
                                              std::uint64_t seed);

/// Evenly spaced positive candidate thresholds covering the observed pair
/// distances.
std::vector<double> tau_grid_from_pairs(const SiameseEncoder& enc,
                                        const std::vector<PairSample>& pairs, int count);

/// Copies the encoder's leading conv layers into extractor parameters;
/// errors when the layer stacks do not match.
ParameterSet borrow_conv_front(const ExtractorConfig& cfg, const SiameseEncoder& enc);

void save_labels_csv(const std::string& path, const PseudoLabeledSet& labels);

}  // namespace dfcp
