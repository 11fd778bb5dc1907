#include "dfcp/search.hpp"

#include <stdexcept>

#include "dfcp/rng.hpp"

namespace dfcp {

void HyperparamSpace::validate() const {
    if (fc1.first <= 0 || fc1.second < fc1.first) throw std::invalid_argument("bad fc1 range");
    if (fc2.first <= 0 || fc2.second < fc2.first) throw std::invalid_argument("bad fc2 range");
    if (lr.first <= 0.0 || lr.second < lr.first) throw std::invalid_argument("bad lr range");
    if (optimizers.empty()) throw std::invalid_argument("empty optimizer set");
    if (batch_sizes.empty()) throw std::invalid_argument("empty batch size set");
    for (int b : batch_sizes)
        if (b != 16 && b != 32 && b != 64)
            throw std::invalid_argument("batch sizes must come from {16, 32, 64}");
    if (conv_options.empty()) throw std::invalid_argument("empty conv option set");
}

SampledConfig sample_config(const HyperparamSpace& space, std::uint64_t seed) {
    space.validate();
    Rng rng(seed);
    SampledConfig cfg;
    cfg.fc1 = rng.uniform_int(space.fc1.first, space.fc1.second);
    cfg.fc2 = rng.uniform_int(space.fc2.first, space.fc2.second);
    cfg.opt.lr = rng.log_uniform(space.lr.first, space.lr.second);
    cfg.opt.kind = rng.pick(space.optimizers);
    cfg.batch = rng.pick(space.batch_sizes);
    cfg.conv1 = rng.pick(space.conv_options);
    cfg.conv2 = cfg.conv1 > 0 ? rng.pick(space.conv_options) : 0;
    if (cfg.conv1 > 0 && cfg.conv2 == 0) cfg.conv2 = 0;  // single conv layer is fine
    return cfg;
}

SearchResult random_search(const HyperparamSpace& space, int trials,
                           const std::function<double(const SampledConfig&)>& objective,
                           std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("random_search needs trials >= 1");
    space.validate();
    SearchResult res;
    bool have = false;
    for (int t = 0; t < trials; ++t) {
        SearchTrial trial;
        trial.config = sample_config(space, sub_seed(seed, "trial", static_cast<std::uint64_t>(t)));
        try {
            trial.score = objective(trial.config);
            trial.ok = true;
            if (!have || trial.score > res.best_score) {  // strict >: ties keep first sampled
                have = true;
                res.best = trial.config;
                res.best_score = trial.score;
            }
        } catch (const std::exception& e) {
            trial.ok = false;
            trial.error = e.what();
        }
        res.trials.push_back(std::move(trial));
    }
    if (!have) {
        std::string msg = "random_search: every trial failed:";
        for (std::size_t i = 0; i < res.trials.size(); ++i)
            msg += "\n  trial " + std::to_string(i) + ": " + res.trials[i].error;
        throw std::runtime_error(msg);
    }
    return res;
}

}  // namespace dfcp
