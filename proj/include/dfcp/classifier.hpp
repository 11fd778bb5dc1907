#pragma once

#include <cstdint>
#include <vector>

#include "dfcp/network.hpp"
#include "dfcp/optimizer.hpp"

namespace dfcp {

/// Sum of softmax cross-entropy over the given rows, accumulating summed
/// gradients into grad. Shared by standalone classifier training and the
/// per-expert updates of joint MoE training so the two paths are bit-equal.
double classifier_batch_grad(const NetworkSpec& spec, const ParameterSet& params,
                             const std::vector<Tensor>& xs, const std::vector<int>& ys,
                             const std::vector<int>& rows, ParameterSet& grad);

struct ClassifierTrainConfig {
    OptimizerConfig opt;
    int batch = 32;
    int epochs = 30;
    std::uint64_t sampler_seed = 0;
    int steps_per_epoch = 0;  // 0: ceil(n / batch)
};

struct ClassifierTrainLog {
    std::vector<double> epoch_loss;  // per-sample mean
};

/// Minibatch training with uniform-with-replacement sampling; batch-mean
/// gradients. Deterministic per sampler seed.
ClassifierTrainLog train_classifier(const NetworkSpec& spec, ParameterSet& params,
                                    const std::vector<Tensor>& xs, const std::vector<int>& ys,
                                    const ClassifierTrainConfig& cfg);

}  // namespace dfcp
