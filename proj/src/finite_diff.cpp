#include "dfcp/finite_diff.hpp"

#include <cmath>
#include <stdexcept>

namespace dfcp {

ParameterSet finite_diff_gradient(const ParamLossFn& loss, const ParameterSet& params, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite difference step must be positive");
    ParameterSet work = params;
    ParameterSet grad = ParameterSet::zeros_like(params);
    const std::size_t n = params.coord_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = work.get_coord(i);
        work.set_coord(i, theta + h);
        const double fp = loss(work);
        work.set_coord(i, theta - h);
        const double fm = loss(work);
        work.set_coord(i, theta);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("non-finite loss during finite differencing");
        grad.set_coord(i, (fp - fm) / (2.0 * h));
    }
    return grad;
}

double max_rel_gap(const ParameterSet& a, const ParameterSet& b, double denom_floor) {
    if (!a.same_shapes(b)) throw std::invalid_argument("rel-gap inputs differ in shape");
    double worst = 0.0;
    const std::size_t n = a.coord_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.get_coord(i), y = b.get_coord(i);
        const double denom = std::max({std::abs(x), std::abs(y), denom_floor});
        worst = std::max(worst, std::abs(x - y) / denom);
    }
    return worst;
}

}  // namespace dfcp
