#include "dfcp/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace dfcp {

std::string optimizer_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::rmsprop: return "rmsprop";
    }
    return "sgd";
}

OptimizerKind optimizer_from_name(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    if (s == "rmsprop") return OptimizerKind::rmsprop;
    throw std::invalid_argument("unknown optimizer: " + s);
}

OptimizerState OptimizerState::make(const OptimizerConfig& cfg, const ParameterSet& params) {
    // lr == 0 is allowed as the degenerate identity update
    if (cfg.lr < 0.0) throw std::invalid_argument("learning rate must be non-negative");
    OptimizerState st;
    st.cfg = cfg;
    st.m = ParameterSet::zeros_like(params);
    st.v = ParameterSet::zeros_like(params);
    return st;
}

namespace {

void update_tensor(Tensor& theta, const Tensor& g, Tensor& m, Tensor& v,
                   const OptimizerConfig& cfg, double bc1, double bc2) {
    const std::size_t n = theta.size();
    switch (cfg.kind) {
        case OptimizerKind::sgd:
            for (std::size_t i = 0; i < n; ++i) {
                const double mi = cfg.momentum * static_cast<double>(m.data[i]) +
                                  static_cast<double>(g.data[i]);
                m.data[i] = static_cast<real_t>(mi);
                theta.data[i] -= static_cast<real_t>(cfg.lr * mi);
            }
            break;
        case OptimizerKind::adam:
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(g.data[i]);
                const double mi = cfg.beta1 * static_cast<double>(m.data[i]) + (1.0 - cfg.beta1) * gi;
                const double vi = cfg.beta2 * static_cast<double>(v.data[i]) + (1.0 - cfg.beta2) * gi * gi;
                m.data[i] = static_cast<real_t>(mi);
                v.data[i] = static_cast<real_t>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                theta.data[i] -= static_cast<real_t>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
            }
            break;
        case OptimizerKind::rmsprop:
            for (std::size_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(g.data[i]);
                const double vi = cfg.rho * static_cast<double>(v.data[i]) + (1.0 - cfg.rho) * gi * gi;
                v.data[i] = static_cast<real_t>(vi);
                theta.data[i] -= static_cast<real_t>(cfg.lr * gi / (std::sqrt(vi) + cfg.eps));
            }
            break;
    }
    if (cfg.weight_decay > 0.0)
        for (std::size_t i = 0; i < n; ++i)
            theta.data[i] -= static_cast<real_t>(cfg.lr * cfg.weight_decay *
                                                 static_cast<double>(theta.data[i]));
}

}  // namespace

void optimizer_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state) {
    if (!params.same_shapes(grads))
        throw std::invalid_argument("gradient shapes do not match parameter shapes");
    if (!params.same_shapes(state.m))
        throw std::invalid_argument("optimizer state does not match parameter shapes");
    const std::string bad = grads.first_non_finite();
    if (!bad.empty()) throw std::runtime_error("non-finite gradient in layer " + bad);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        update_tensor(params.entry(i).weights, grads.entry(i).weights, state.m.entry(i).weights,
                      state.v.entry(i).weights, state.cfg, bc1, bc2);
        update_tensor(params.entry(i).bias, grads.entry(i).bias, state.m.entry(i).bias,
                      state.v.entry(i).bias, state.cfg, bc1, bc2);
    }
}

}  // namespace dfcp
