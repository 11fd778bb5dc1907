#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dfcp/optimizer.hpp"

namespace dfcp {

struct HyperparamSpace {
    std::pair<int, int> fc1{16, 64};
    std::pair<int, int> fc2{8, 48};
    std::pair<double, double> lr{1e-3, 1e-1};  // log-uniform
    std::vector<OptimizerKind> optimizers{OptimizerKind::sgd, OptimizerKind::adam,
                                          OptimizerKind::rmsprop};
    std::vector<int> batch_sizes{16, 32, 64};
    std::vector<int> conv_options{0};  // filters for an optional conv front, 0 = off

    void validate() const;
};

struct SampledConfig {
    int fc1 = 0;
    int fc2 = 0;
    int conv1 = 0;
    int conv2 = 0;
    OptimizerConfig opt;
    int batch = 0;
};

SampledConfig sample_config(const HyperparamSpace& space, std::uint64_t seed);

struct SearchTrial {
    SampledConfig config;
    double score = 0.0;
    bool ok = false;
    std::string error;
};

struct SearchResult {
    SampledConfig best;
    double best_score = 0.0;
    std::vector<SearchTrial> trials;
};

/// Seeded uniform random search (log-uniform learning rate). The objective
/// scores a config on held-out balanced accuracy; higher is better, ties go
/// to the first sampled config. Errors only when every trial fails.
SearchResult random_search(const HyperparamSpace& space, int trials,
                           const std::function<double(const SampledConfig&)>& objective,
                           std::uint64_t seed);

}  // namespace dfcp
