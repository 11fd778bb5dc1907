#pragma once

#include <cstdint>
#include <string>

#include "dfcp/parameter_set.hpp"

namespace dfcp {

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1, rmsprop = 2 };

std::string optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double lr = 0.01;
    double momentum = 0.0;   // sgd
    double beta1 = 0.9;      // adam
    double beta2 = 0.999;    // adam
    double rho = 0.9;        // rmsprop
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled: theta -= lr * wd * theta
};

/// Moment buffers mirror the parameter shapes they were built from.
struct OptimizerState {
    OptimizerConfig cfg;
    long long step = 0;
    ParameterSet m;  // sgd momentum / adam first moment
    ParameterSet v;  // adam / rmsprop second moment

    static OptimizerState make(const OptimizerConfig& cfg, const ParameterSet& params);
};

/// In-place update with the standard published rules:
///   sgd:     m <- mu*m + g;           theta -= lr*m
///   adam:    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;
///            theta -= lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
///   rmsprop: v <- rho*v + (1-rho)*g^2; theta -= lr * g / (sqrt(v) + eps)
/// plus theta -= lr * weight_decay * theta when weight_decay > 0.
void optimizer_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state);

}  // namespace dfcp
