#pragma once

#include <functional>

#include "dfcp/parameter_set.hpp"

namespace dfcp {

using ParamLossFn = std::function<double(const ParameterSet&)>;

/// Central-difference gradient (f(theta+h) - f(theta-h)) / 2h per coordinate.
/// The loss function must be deterministic; a non-finite loss is an error.
ParameterSet finite_diff_gradient(const ParamLossFn& loss, const ParameterSet& params, double h);

/// max over coordinates of |a-b| / max(|a|, |b|, denom_floor). The floor
/// turns the check into an absolute one for near-zero coordinates, where
/// central differences only resolve to roundoff.
double max_rel_gap(const ParameterSet& a, const ParameterSet& b, double denom_floor = 1e-4);

}  // namespace dfcp
