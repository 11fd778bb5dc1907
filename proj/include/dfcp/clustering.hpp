#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfcp/feature_extraction.hpp"

namespace dfcp {

/// Partition of a FeatureSet. In the refined stage the reserved cluster -1
/// is the outlier bucket; every feature is either in exactly one cluster or
/// in the bucket.
struct ClusterSet {
    enum class Stage : std::uint8_t { initial = 0, refined = 1 };

    Stage stage = Stage::initial;
    std::map<int, int> assignment;  // source_id -> cluster index (-1 = outliers, refined only)
    std::vector<Tensor> centroids;
    int k = 0;

    std::vector<std::vector<int>> members() const;  // per-cluster source ids, sorted
    std::vector<int> outliers() const;
    /// Checks the centroid-equals-member-mean invariant (1e-9) and coverage.
    void validate(const FeatureSet& fs) const;
};

struct KmeansConfig {
    int k = 0;
    std::uint64_t seed = 0;
    int max_iter = 100;
    double tol = 1e-7;
    int restarts = 10;
};

struct KmeansRun {
    ClusterSet clusters;
    double objective = 0.0;
    std::vector<double> objective_per_iter;  // winning restart, one value per Lloyd iteration
    int iterations = 0;
    int best_restart = 0;
};

/// Lloyd's algorithm with k-means++ seeding and best-of-restarts. An empty
/// cluster is repaired by reseeding its centroid to the point farthest from
/// the old centroid. The per-iteration objective is checked non-increasing.
KmeansRun kmeans(const FeatureSet& fs, const KmeansConfig& cfg);

/// J = sum over clusters of sum ||z - mu||^2 using the stored centroids.
double clustering_objective(const FeatureSet& fs, const ClusterSet& clusters);

struct DbiReport {
    double dbi = 0.0;
    std::vector<double> intra;                        // mean member distance per cluster
    std::vector<std::vector<double>> centroid_dist;   // pairwise centroid distances
    std::string band;                                 // perfect / acceptable / poor
};

/// Davies-Bouldin index; requires k >= 2, non-empty clusters, and pairwise
/// distinct centroids.
DbiReport davies_bouldin(const FeatureSet& fs, const ClusterSet& clusters);

struct RefineConfig {
    int neighbor_min = 3;
    double distance_threshold = 0.8;
    std::vector<double> sweep_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    void validate() const;
};

/// Second-stage refinement on min-max normalized features. Reference
/// clusters are those whose centroid sees at least neighbor_min other
/// centroids within its own median inter-centroid distance; features within
/// the distance threshold of a reference centroid join the nearest such
/// cluster (ties to the lowest index), everything else goes to bucket -1.
ClusterSet refine(const FeatureSet& fs, const ClusterSet& initial, const RefineConfig& cfg);

struct SweepEntry {
    double threshold = 0.0;
    bool ok = false;
    std::string error;
    double dbi = 0.0;
    int k = 0;
    int outliers = 0;
};

struct SweepResult {
    double best_threshold = 0.0;
    double best_dbi = 0.0;
    ClusterSet best_clusters;
    std::vector<SweepEntry> entries;
};

/// Runs refine for every grid threshold and keeps the DBI-minimizing one
/// (outlier bucket excluded from the score); ties go to the smaller
/// threshold. Errors only if every grid point fails.
SweepResult sweep_threshold(const FeatureSet& fs, const ClusterSet& initial,
                            const RefineConfig& cfg);

/// DBI-selected cluster count over a small grid (used when k is not known).
int auto_k(const FeatureSet& fs, const std::vector<int>& k_grid, const KmeansConfig& base);

void save_clusters_csv(const std::string& path, const ClusterSet& clusters);
ClusterSet load_clusters_csv(const std::string& path, const FeatureSet& fs,
                             ClusterSet::Stage stage);

}  // namespace dfcp
