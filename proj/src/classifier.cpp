#include "dfcp/classifier.hpp"

#include <cmath>
#include <stdexcept>

#include "dfcp/rng.hpp"

namespace dfcp {

double classifier_batch_grad(const NetworkSpec& spec, const ParameterSet& params,
                             const std::vector<Tensor>& xs, const std::vector<int>& ys,
                             const std::vector<int>& rows, ParameterSet& grad) {
    double loss = 0.0;
    for (int r : rows) {
        const Tensor& x = xs[static_cast<std::size_t>(r)];
        const int y = ys[static_cast<std::size_t>(r)];
        NetTrace t = net_forward_trace(spec, params, x);
        const Tensor p = softmax(t.output);
        loss += -std::log(std::max(static_cast<double>(p.at1(y)), kProbFloor));
        if (p.at1(y) <= kProbFloor) continue;
        Tensor gz = Tensor::zeros(p.shape);
        for (int c = 0; c < static_cast<int>(p.size()); ++c)
            gz.ref1(c) = static_cast<real_t>(p.at1(c) - (c == y ? 1.0 : 0.0));
        net_backward(spec, params, t, gz, grad);
    }
    return loss;
}

ClassifierTrainLog train_classifier(const NetworkSpec& spec, ParameterSet& params,
                                    const std::vector<Tensor>& xs, const std::vector<int>& ys,
                                    const ClassifierTrainConfig& cfg) {
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("train_classifier: bad dataset");
    if (cfg.batch <= 0) throw std::invalid_argument("train_classifier: batch must be positive");
    const int n = static_cast<int>(xs.size());
    const int steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : (n + cfg.batch - 1) / cfg.batch;
    OptimizerState opt = OptimizerState::make(cfg.opt, params);
    Rng rng(cfg.sampler_seed);
    ClassifierTrainLog log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        long long samples = 0;
        for (int step = 0; step < steps; ++step) {
            std::vector<int> rows(static_cast<std::size_t>(cfg.batch));
            for (int i = 0; i < cfg.batch; ++i) rows[static_cast<std::size_t>(i)] = rng.uniform_int(0, n - 1);
            ParameterSet grad = ParameterSet::zeros_like(params);
            epoch_loss += classifier_batch_grad(spec, params, xs, ys, rows, grad);
            samples += cfg.batch;
            // multiply by the reciprocal, matching the joint-training path bit
            // for bit so the single-expert equivalence holds exactly
            const double inv = 1.0 / static_cast<double>(cfg.batch);
            for (std::size_t e = 0; e < grad.size(); ++e) {
                for (auto& v : grad.entry(e).weights.data) v = static_cast<real_t>(v * inv);
                for (auto& v : grad.entry(e).bias.data) v = static_cast<real_t>(v * inv);
            }
            optimizer_step(params, grad, opt);
        }
        log.epoch_loss.push_back(samples ? epoch_loss / static_cast<double>(samples) : 0.0);
    }
    return log;
}

}  // namespace dfcp
