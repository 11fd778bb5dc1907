#include "dfcp/moe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dfcp/classifier.hpp"
#include "dfcp/rng.hpp"

namespace dfcp {

NetworkSpec ExpertSpec::to_network(int input_dim) const {
    NetworkSpec spec;
    // optional 1-d conv front realized as HxWxC with W = 1; kernels clamp to
    // the current length
    int cur = input_dim;
    int channels = 1;
    if (conv2 > 0 && conv1 <= 0) throw std::invalid_argument("expert conv2 requires conv1");
    for (int filters : {conv1, conv2}) {
        if (filters <= 0) continue;
        Conv2dLayer c;
        c.in_h = cur;
        c.in_w = 1;
        c.in_c = channels;
        c.filters = filters;
        c.kernel = std::min(kernel, cur);
        c.act = Activation::relu;
        spec.layers.emplace_back(c);
        cur = cur - c.kernel + 1;
        channels = filters;
    }
    const int flat = conv1 > 0 ? cur * channels : cur;
    spec.layers.emplace_back(DenseLayer{flat, fc1, Activation::relu});
    spec.layers.emplace_back(DenseLayer{fc1, fc2, Activation::relu});
    spec.layers.emplace_back(DenseLayer{fc2, n_outputs, Activation::identity});
    spec.validate();
    return spec;
}

void RoutingPlan::validate(int n_experts) const {
    if (leakage < 0.0 || leakage >= 1.0)
        throw std::invalid_argument("routing leakage must be in [0, 1)");
    if (mode == Mode::traditional) {
        if (!cluster_to_expert.empty())
            throw std::invalid_argument("traditional routing must have an empty plan");
        return;
    }
    std::vector<char> hit(static_cast<std::size_t>(n_experts), 0);
    for (const auto& [cluster, expert] : cluster_to_expert) {
        if (cluster < 0) throw std::invalid_argument("routing plan maps a negative cluster");
        if (expert < 0 || expert >= n_experts)
            throw std::invalid_argument("routing plan maps to unknown expert " +
                                        std::to_string(expert));
        if (hit[static_cast<std::size_t>(expert)])
            throw std::invalid_argument("routing plan is not a bijection (expert " +
                                        std::to_string(expert) + " repeated)");
        hit[static_cast<std::size_t>(expert)] = 1;
    }
    if (static_cast<int>(cluster_to_expert.size()) != n_experts)
        throw std::invalid_argument("dfcp routing must map every expert to exactly one cluster");
}

void MoEModel::validate() const {
    if (experts.empty()) throw std::invalid_argument("MoE model needs at least one expert");
    if (gate.n_experts != n_experts())
        throw std::invalid_argument("gate output count != expert count");
    if (gate.spec.output_dim() != n_experts())
        throw std::invalid_argument("gate spec output dim != expert count");
    for (const auto& e : experts) {
        if (e.net.input_dim() != input_dim)
            throw std::invalid_argument("expert input dim mismatch");
        if (e.net.output_dim() != n_outputs)
            throw std::invalid_argument("expert output dim mismatch");
    }
    routing.validate(n_experts());
}

NetworkSpec gate_spec(int input_dim, int n_experts, int hidden, int partitions) {
    if (n_experts <= 0) throw std::invalid_argument("gate needs at least one expert");
    NetworkSpec spec;
    if (partitions > 1) {
        if (hidden > 0)
            throw std::invalid_argument("gate partitions > 1 excludes a hidden layer");
        spec.layers.emplace_back(
            BlockSumDenseLayer{input_dim, n_experts, partitions, Activation::identity});
    } else if (hidden > 0) {
        spec.layers.emplace_back(DenseLayer{input_dim, hidden, Activation::relu});
        spec.layers.emplace_back(DenseLayer{hidden, n_experts, Activation::identity});
    } else {
        spec.layers.emplace_back(DenseLayer{input_dim, n_experts, Activation::identity});
    }
    spec.validate();
    return spec;
}

MoEModel build_moe(int input_dim, int n_outputs, const MoeBuildConfig& cfg,
                   const RoutingPlan& routing) {
    if (cfg.experts.empty()) throw std::invalid_argument("build_moe: no expert specs");
    MoEModel model;
    model.input_dim = input_dim;
    model.n_outputs = n_outputs;
    model.routing = routing;
    model.gate.partitions = cfg.gate_partitions;
    model.gate.n_experts = static_cast<int>(cfg.experts.size());
    model.gate.spec = gate_spec(input_dim, model.gate.n_experts, cfg.gate_hidden,
                                cfg.gate_partitions);
    model.gate.params = init_params(model.gate.spec, sub_seed(cfg.seed, "gate"),
                                    InitScheme::xavier_normal);
    for (std::size_t j = 0; j < cfg.experts.size(); ++j) {
        Expert e;
        e.spec = cfg.experts[j];
        e.spec.n_outputs = n_outputs;
        e.net = e.spec.to_network(input_dim);
        e.params = init_params(e.net, sub_seed(cfg.seed, "expert", j),
                               InitScheme::kaiming_uniform);
        if (routing.mode == RoutingPlan::Mode::dfcp) {
            for (const auto& [cluster, expert] : routing.cluster_to_expert)
                if (expert == static_cast<int>(j)) e.home_cluster = cluster;
        }
        model.experts.push_back(std::move(e));
    }
    model.validate();
    return model;
}

Tensor gate_forward(const GateNetwork& gate, const Tensor& x) {
    if (gate.n_experts <= 0) throw std::invalid_argument("gate has no experts");
    return softmax(net_forward(gate.spec, gate.params, x));
}

Tensor expert_forward(const Expert& expert, const Tensor& x) {
    return softmax(net_forward(expert.net, expert.params, x));
}

Tensor mixture_forward(const MoEModel& model, const Tensor& x) {
    const Tensor g = gate_forward(model.gate, x);
    Tensor out = Tensor::zeros({model.n_outputs});
    for (int j = 0; j < model.n_experts(); ++j) {
        const Tensor p = expert_forward(model.experts[static_cast<std::size_t>(j)], x);
        const double w = g.at1(j);
        for (int c = 0; c < model.n_outputs; ++c)
            out.ref1(c) += static_cast<real_t>(w * p.at1(c));
    }
    return out;
}

double expert_loss(const Expert& expert, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("expert_loss: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor p = expert_forward(expert, batch.x[i]);
        loss += cross_entropy(p, batch.y[i]);
    }
    return loss;
}

double gate_loss(const MoEModel& model, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("gate_loss: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor g = gate_forward(model.gate, batch.x[i]);
        double mix = 0.0;
        for (int j = 0; j < model.n_experts(); ++j) {
            const Tensor p = expert_forward(model.experts[static_cast<std::size_t>(j)], batch.x[i]);
            mix += g.at1(j) * p.at1(batch.y[i]);
        }
        loss += -std::log(std::max(mix, kProbFloor));
    }
    return loss;
}

double combined_loss(const MoEModel& model, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("combined_loss: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor mix = mixture_forward(model, batch.x[i]);
        loss += -std::log(std::max(mix.at1(batch.y[i]), kProbFloor));
    }
    return loss;
}

namespace {

struct SampleForward {
    Tensor gate_logits;
    Tensor g;
    NetTrace gate_trace;
    std::vector<NetTrace> expert_traces;
    std::vector<Tensor> expert_probs;
    double mix = 0.0;
};

SampleForward forward_all(const MoEModel& model, const Tensor& x, int y) {
    SampleForward f;
    f.gate_trace = net_forward_trace(model.gate.spec, model.gate.params, x);
    f.g = softmax(f.gate_trace.output);
    f.expert_traces.reserve(model.experts.size());
    f.expert_probs.reserve(model.experts.size());
    for (const auto& e : model.experts) {
        NetTrace t = net_forward_trace(e.net, e.params, x);
        f.expert_probs.push_back(softmax(t.output));
        f.expert_traces.push_back(std::move(t));
    }
    for (int j = 0; j < model.n_experts(); ++j)
        f.mix += f.g.at1(j) * f.expert_probs[static_cast<std::size_t>(j)].at1(y);
    return f;
}

}  // namespace

MoeGradients moe_backward(const MoEModel& model, const Batch& gate_batch,
                          const std::vector<Batch>& expert_batches) {
    model.validate();
    if (static_cast<int>(expert_batches.size()) != model.n_experts())
        throw std::invalid_argument("moe_backward: expert batch count != expert count");
    MoeGradients grads;
    grads.gate = ParameterSet::zeros_like(model.gate.params);
    for (const auto& e : model.experts) grads.experts.push_back(ParameterSet::zeros_like(e.params));

    // gating-loss term over the gate batch
    for (std::size_t i = 0; i < gate_batch.size(); ++i) {
        const int y = gate_batch.y[i];
        SampleForward f = forward_all(model, gate_batch.x[i], y);
        if (f.mix <= kProbFloor) continue;  // inside the floored (flat) region
        // d(-log mix)/d gate logit k = g_k (1 - p_k[y] / mix)
        Tensor gu = Tensor::zeros(f.g.shape);
        for (int k = 0; k < model.n_experts(); ++k)
            gu.ref1(k) = static_cast<real_t>(
                f.g.at1(k) *
                (1.0 - f.expert_probs[static_cast<std::size_t>(k)].at1(y) / f.mix));
        net_backward(model.gate.spec, model.gate.params, f.gate_trace, gu, grads.gate);
        // d(-log mix)/d expert-j logit c = w_j (p_j[c] - [c == y]),
        // w_j = g_j p_j[y] / mix (the responsibility the gate assigns)
        for (int j = 0; j < model.n_experts(); ++j) {
            const Tensor& p = f.expert_probs[static_cast<std::size_t>(j)];
            const double w = f.g.at1(j) * p.at1(y) / f.mix;
            if (w == 0.0) continue;
            Tensor gz = Tensor::zeros(p.shape);
            for (int c = 0; c < model.n_outputs; ++c)
                gz.ref1(c) = static_cast<real_t>(w * (p.at1(c) - (c == y ? 1.0 : 0.0)));
            net_backward(model.experts[static_cast<std::size_t>(j)].net,
                         model.experts[static_cast<std::size_t>(j)].params,
                         f.expert_traces[static_cast<std::size_t>(j)], gz,
                         grads.experts[static_cast<std::size_t>(j)]);
        }
    }

    // per-expert cross-entropy terms over each expert's own batch
    for (int j = 0; j < model.n_experts(); ++j) {
        const Expert& e = model.experts[static_cast<std::size_t>(j)];
        const Batch& b = expert_batches[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < b.size(); ++i) {
            NetTrace t = net_forward_trace(e.net, e.params, b.x[i]);
            const Tensor p = softmax(t.output);
            if (p.at1(b.y[i]) <= kProbFloor) continue;
            Tensor gz = Tensor::zeros(p.shape);
            for (int c = 0; c < model.n_outputs; ++c)
                gz.ref1(c) = static_cast<real_t>(p.at1(c) - (c == b.y[i] ? 1.0 : 0.0));
            net_backward(e.net, e.params, t, gz, grads.experts[static_cast<std::size_t>(j)]);
        }
    }

    const std::string bad_gate = grads.gate.first_non_finite();
    if (!bad_gate.empty())
        throw std::runtime_error("non-finite gate gradient in " + bad_gate);
    for (int j = 0; j < model.n_experts(); ++j) {
        const std::string bad = grads.experts[static_cast<std::size_t>(j)].first_non_finite();
        if (!bad.empty())
            throw std::runtime_error("non-finite gradient in expert " + std::to_string(j) +
                                     " layer " + bad);
    }
    return grads;
}

MoeGradients moe_backward(const MoEModel& model, const Batch& batch) {
    std::vector<Batch> per_expert(static_cast<std::size_t>(model.n_experts()), batch);
    return moe_backward(model, batch, per_expert);
}

double paper_gradient_gap(const MoEModel& model, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("paper_gradient_gap: empty batch");
    double gap = 0.0;
    long long terms = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int y = batch.y[i];
        SampleForward f = forward_all(model, batch.x[i], y);
        if (f.mix <= kProbFloor) continue;
        for (int j = 0; j < model.n_experts(); ++j) {
            const double p_y = f.expert_probs[static_cast<std::size_t>(j)].at1(y);
            const int indicator = model.experts[static_cast<std::size_t>(j)].home_cluster == y ? 1 : 0;
            // reported expert-output derivative: g_j / P(Y|X) - 1[Y=j]
            const double paper_expert = f.g.at1(j) / f.mix - indicator;
            // derivative of the implemented losses w.r.t. the expert's
            // true-class probability: -g_j/mix (mixture) - 1/p_y (own CE)
            const double impl_expert = -f.g.at1(j) / f.mix - 1.0 / std::max(p_y, kProbFloor);
            gap += std::abs(paper_expert - impl_expert);
            // reported gate derivative: p_j[y]/mix - 1[Y=j]; implemented: -p_j[y]/mix
            const double paper_gate = p_y / f.mix - indicator;
            const double impl_gate = -p_y / f.mix;
            gap += std::abs(paper_gate - impl_gate);
            terms += 2;
        }
    }
    return terms ? gap / static_cast<double>(terms) : 0.0;
}

namespace {

struct TrainingData {
    std::vector<Tensor> x;       // aligned with ids
    std::vector<int> y;
    std::vector<std::vector<int>> rows_per_cluster;  // row indices into x
    std::vector<int> all_rows;
};

void scale_params(ParameterSet& p, double s) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (auto& v : p.entry(i).weights.data) v = static_cast<real_t>(v * s);
        for (auto& v : p.entry(i).bias.data) v = static_cast<real_t>(v * s);
    }
}

// gradient of -log(mix) w.r.t. gate parameters only, summed over rows
double gate_batch_grad(const MoEModel& model, const std::vector<Tensor>& xs,
                       const std::vector<int>& ys, const std::vector<int>& rows,
                       ParameterSet& grad) {
    double loss = 0.0;
    for (int r : rows) {
        const Tensor& x = xs[static_cast<std::size_t>(r)];
        const int y = ys[static_cast<std::size_t>(r)];
        NetTrace t = net_forward_trace(model.gate.spec, model.gate.params, x);
        const Tensor g = softmax(t.output);
        double mix = 0.0;
        std::vector<double> p_y(static_cast<std::size_t>(model.n_experts()));
        for (int j = 0; j < model.n_experts(); ++j) {
            const Tensor p = expert_forward(model.experts[static_cast<std::size_t>(j)], x);
            p_y[static_cast<std::size_t>(j)] = p.at1(y);
            mix += g.at1(j) * p.at1(y);
        }
        loss += -std::log(std::max(mix, kProbFloor));
        if (mix <= kProbFloor) continue;
        Tensor gu = Tensor::zeros(g.shape);
        for (int k = 0; k < model.n_experts(); ++k)
            gu.ref1(k) = static_cast<real_t>(g.at1(k) * (1.0 - p_y[static_cast<std::size_t>(k)] / mix));
        net_backward(model.gate.spec, model.gate.params, t, gu, grad);
    }
    return loss;
}

MoeTrainLog run_training(MoEModel& model, const TrainingData& data, const JointTrainConfig& cfg,
                         bool conditioned) {
    model.validate();
    if (static_cast<int>(cfg.expert_hp.size()) != model.n_experts())
        throw std::invalid_argument("expert hyperparameter count != expert count");
    if (cfg.gate_batch <= 0) throw std::invalid_argument("gate batch must be positive");
    const int n = static_cast<int>(data.all_rows.size());
    if (n == 0) throw std::invalid_argument("no training samples");

    // per-expert home/leak pools
    std::vector<std::vector<int>> home(static_cast<std::size_t>(model.n_experts()));
    std::vector<std::vector<int>> away(static_cast<std::size_t>(model.n_experts()));
    if (conditioned) {
        for (int j = 0; j < model.n_experts(); ++j) {
            const int cluster = model.experts[static_cast<std::size_t>(j)].home_cluster;
            if (cluster < 0 || cluster >= static_cast<int>(data.rows_per_cluster.size()))
                throw std::invalid_argument("expert " + std::to_string(j) +
                                            " has no home cluster");
            home[static_cast<std::size_t>(j)] = data.rows_per_cluster[static_cast<std::size_t>(cluster)];
            if (home[static_cast<std::size_t>(j)].empty())
                throw std::invalid_argument("expert " + std::to_string(j) +
                                            " has zero home-cluster samples");
            for (std::size_t c = 0; c < data.rows_per_cluster.size(); ++c)
                if (static_cast<int>(c) != cluster)
                    away[static_cast<std::size_t>(j)].insert(away[static_cast<std::size_t>(j)].end(),
                                                             data.rows_per_cluster[c].begin(),
                                                             data.rows_per_cluster[c].end());
        }
    } else {
        for (int j = 0; j < model.n_experts(); ++j) home[static_cast<std::size_t>(j)] = data.all_rows;
    }

    std::vector<Rng> expert_rng;
    for (int j = 0; j < model.n_experts(); ++j)
        expert_rng.emplace_back(sub_seed(cfg.seed, "expert", static_cast<std::uint64_t>(j)));
    Rng gate_rng(sub_seed(cfg.seed, "gate"));

    OptimizerState gate_opt = OptimizerState::make(cfg.gate_opt, model.gate.params);
    std::vector<OptimizerState> expert_opt;
    for (int j = 0; j < model.n_experts(); ++j)
        expert_opt.push_back(OptimizerState::make(cfg.expert_hp[static_cast<std::size_t>(j)].opt,
                                                  model.experts[static_cast<std::size_t>(j)].params));

    const int steps = (n + cfg.gate_batch - 1) / cfg.gate_batch;
    const double leakage = model.routing.leakage;
    MoeTrainLog log;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        MoeEpochLog elog;
        elog.expert_loss.assign(static_cast<std::size_t>(model.n_experts()), 0.0);
        long long gate_samples = 0;
        std::vector<long long> expert_samples(static_cast<std::size_t>(model.n_experts()), 0);
        for (int step = 0; step < steps; ++step) {
            // draw every batch first, then compute every gradient, then update
            std::vector<std::vector<int>> expert_rows(static_cast<std::size_t>(model.n_experts()));
            for (int j = 0; j < model.n_experts(); ++j) {
                const int b = cfg.expert_hp[static_cast<std::size_t>(j)].batch;
                int n_leak = conditioned ? static_cast<int>(std::llround(leakage * b)) : 0;
                if (away[static_cast<std::size_t>(j)].empty()) n_leak = 0;
                const int n_home = b - n_leak;
                auto& rng = expert_rng[static_cast<std::size_t>(j)];
                auto& rows = expert_rows[static_cast<std::size_t>(j)];
                const auto& h = home[static_cast<std::size_t>(j)];
                for (int i = 0; i < n_home; ++i)
                    rows.push_back(h[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(h.size()) - 1))]);
                const auto& a = away[static_cast<std::size_t>(j)];
                for (int i = 0; i < n_leak; ++i)
                    rows.push_back(a[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(a.size()) - 1))]);
            }
            std::vector<int> gate_rows;
            for (int i = 0; i < cfg.gate_batch; ++i)
                gate_rows.push_back(data.all_rows[static_cast<std::size_t>(
                    gate_rng.uniform_int(0, n - 1))]);

            ParameterSet gate_grad = ParameterSet::zeros_like(model.gate.params);
            const double lg = gate_batch_grad(model, data.x, data.y, gate_rows, gate_grad);
            scale_params(gate_grad, 1.0 / static_cast<double>(gate_rows.size()));

            std::vector<ParameterSet> expert_grads;
            for (int j = 0; j < model.n_experts(); ++j) {
                const Expert& e = model.experts[static_cast<std::size_t>(j)];
                ParameterSet grad = ParameterSet::zeros_like(e.params);
                const double le = classifier_batch_grad(
                    e.net, e.params, data.x, data.y,
                    expert_rows[static_cast<std::size_t>(j)], grad);
                scale_params(grad, 1.0 / static_cast<double>(
                                       expert_rows[static_cast<std::size_t>(j)].size()));
                expert_grads.push_back(std::move(grad));
                elog.expert_loss[static_cast<std::size_t>(j)] += le;
                expert_samples[static_cast<std::size_t>(j)] +=
                    static_cast<long long>(expert_rows[static_cast<std::size_t>(j)].size());
            }

            optimizer_step(model.gate.params, gate_grad, gate_opt);
            for (int j = 0; j < model.n_experts(); ++j)
                optimizer_step(model.experts[static_cast<std::size_t>(j)].params,
                               expert_grads[static_cast<std::size_t>(j)], expert_opt[static_cast<std::size_t>(j)]);

            elog.gate_loss += lg;
            gate_samples += static_cast<long long>(gate_rows.size());
        }
        elog.gate_loss /= static_cast<double>(gate_samples);
        for (int j = 0; j < model.n_experts(); ++j)
            elog.expert_loss[static_cast<std::size_t>(j)] /=
                static_cast<double>(expert_samples[static_cast<std::size_t>(j)]);
        // combined loss and the paper-formula diagnostic on a fixed probe batch
        Batch probe;
        const int probe_n = std::min(n, 64);
        for (int i = 0; i < probe_n; ++i) {
            const int r = data.all_rows[static_cast<std::size_t>(i)];
            probe.x.push_back(data.x[static_cast<std::size_t>(r)]);
            probe.y.push_back(data.y[static_cast<std::size_t>(r)]);
        }
        elog.combined_loss = combined_loss(model, probe) / static_cast<double>(probe.size());
        elog.paper_gap = paper_gradient_gap(model, probe);
        log.epochs.push_back(std::move(elog));
    }
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

}  // namespace

MoeTrainLog joint_train(MoEModel& model, const FeatureSet& features,
                        const PseudoLabeledSet& labels, const ClusterSet& clusters,
                        const JointTrainConfig& cfg) {
    if (model.routing.mode != RoutingPlan::Mode::dfcp)
        throw std::invalid_argument("joint_train expects a dfcp routing plan");
    TrainingData data;
    int max_cluster = -1;
    for (const auto& [cluster, expert] : model.routing.cluster_to_expert)
        max_cluster = std::max(max_cluster, cluster);
    if (max_cluster + 1 < clusters.k) max_cluster = clusters.k - 1;
    data.rows_per_cluster.assign(static_cast<std::size_t>(max_cluster + 1), {});
    for (const auto& v : features.vectors) {
        const auto cit = clusters.assignment.find(v.source_id);
        if (cit == clusters.assignment.end() || cit->second < 0) continue;  // bucket excluded
        const auto lit = labels.label.find(v.source_id);
        if (lit == labels.label.end())
            throw std::invalid_argument("joint_train: clustered sample " +
                                        std::to_string(v.source_id) + " has no label");
        const int row = static_cast<int>(data.x.size());
        data.x.push_back(v.values);
        data.y.push_back(lit->second);
        data.rows_per_cluster[static_cast<std::size_t>(cit->second)].push_back(row);
        data.all_rows.push_back(row);
    }
    return run_training(model, data, cfg, /*conditioned=*/true);
}

MoeTrainLog train_traditional(MoEModel& model, const FeatureSet& features,
                              const std::map<int, int>& labels, const JointTrainConfig& cfg) {
    if (model.routing.mode != RoutingPlan::Mode::traditional)
        throw std::invalid_argument("train_traditional expects traditional routing mode");
    TrainingData data;
    for (const auto& v : features.vectors) {
        const auto lit = labels.find(v.source_id);
        if (lit == labels.end()) continue;
        const int row = static_cast<int>(data.x.size());
        data.x.push_back(v.values);
        data.y.push_back(lit->second);
        data.all_rows.push_back(row);
    }
    return run_training(model, data, cfg, /*conditioned=*/false);
}

InferResult infer(const MoEModel& model, const Tensor& x, int top_k) {
    if (top_k < 0 || top_k > model.n_experts())
        throw std::invalid_argument("infer: top_k " + std::to_string(top_k) +
                                    " out of range for " + std::to_string(model.n_experts()) +
                                    " experts");
    const Tensor g = gate_forward(model.gate, x);
    InferResult res;
    if (top_k == 0 || top_k == model.n_experts()) {
        res.probs = Tensor::zeros({model.n_outputs});
        for (int j = 0; j < model.n_experts(); ++j) {
            const Tensor p = expert_forward(model.experts[static_cast<std::size_t>(j)], x);
            for (int c = 0; c < model.n_outputs; ++c)
                res.probs.ref1(c) += static_cast<real_t>(g.at1(j) * p.at1(c));
            res.activated.push_back(j);
        }
    } else {
        std::vector<int> order(static_cast<std::size_t>(model.n_experts()));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (g.at1(a) != g.at1(b)) return g.at1(a) > g.at1(b);
            return a < b;
        });
        order.resize(static_cast<std::size_t>(top_k));
        std::sort(order.begin(), order.end());
        double total = 0.0;
        for (int j : order) total += g.at1(j);
        res.probs = Tensor::zeros({model.n_outputs});
        for (int j : order) {
            const Tensor p = expert_forward(model.experts[static_cast<std::size_t>(j)], x);
            const double w = total > 0.0 ? g.at1(j) / total : 1.0 / top_k;
            for (int c = 0; c < model.n_outputs; ++c)
                res.probs.ref1(c) += static_cast<real_t>(w * p.at1(c));
            res.activated.push_back(j);
        }
    }
    res.predicted = 0;
    for (int c = 1; c < model.n_outputs; ++c)
        if (res.probs.at1(c) > res.probs.at1(res.predicted)) res.predicted = c;
    return res;
}

std::uint64_t moe_infer_flops(const MoEModel& model, int top_k) {
    if (top_k < 0 || top_k > model.n_experts())
        throw std::invalid_argument("moe_infer_flops: top_k out of range");
    std::uint64_t total = net_flops(model.gate.spec) + softmax_flops(model.n_experts());
    std::vector<std::uint64_t> expert_cost;
    for (const auto& e : model.experts)
        expert_cost.push_back(net_flops(e.net) + softmax_flops(model.n_outputs));
    const int active = (top_k == 0) ? model.n_experts() : top_k;
    std::sort(expert_cost.rbegin(), expert_cost.rend());
    for (int i = 0; i < active; ++i) total += expert_cost[static_cast<std::size_t>(i)];
    if (top_k != 0 && top_k != model.n_experts())
        total += static_cast<std::uint64_t>(model.n_experts())  // top-k scan
                 + 2ULL * static_cast<std::uint64_t>(top_k);    // renormalization
    total += 2ULL * static_cast<std::uint64_t>(active) * static_cast<std::uint64_t>(model.n_outputs);
    return total;
}

std::uint64_t moe_param_count(const MoEModel& model) {
    std::uint64_t total = net_param_count(model.gate.spec);
    for (const auto& e : model.experts) total += net_param_count(e.net);
    return total;
}

static constexpr char kCheckpointMagic[4] = {'D', 'F', 'C', 'P'};
static constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const MoEModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(kCheckpointMagic, 4);
    write_u32(os, kCheckpointVersion);
    write_u32(os, static_cast<std::uint32_t>(model.input_dim));
    write_u32(os, static_cast<std::uint32_t>(model.n_outputs));
    write_u32(os, static_cast<std::uint32_t>(model.gate.partitions));
    save_network_spec(os, model.gate.spec);
    save_params(os, model.gate.params);
    write_u32(os, static_cast<std::uint32_t>(model.experts.size()));
    for (const auto& e : model.experts) {
        write_u32(os, static_cast<std::uint32_t>(e.spec.conv1));
        write_u32(os, static_cast<std::uint32_t>(e.spec.conv2));
        write_u32(os, static_cast<std::uint32_t>(e.spec.kernel));
        write_u32(os, static_cast<std::uint32_t>(e.spec.fc1));
        write_u32(os, static_cast<std::uint32_t>(e.spec.fc2));
        write_u32(os, static_cast<std::uint32_t>(e.spec.n_outputs));
        write_u32(os, static_cast<std::uint32_t>(e.home_cluster + 1));  // -1 -> 0
        save_network_spec(os, e.net);
        save_params(os, e.params);
    }
    write_u8(os, static_cast<std::uint8_t>(model.routing.mode));
    write_f64(os, model.routing.leakage);
    write_u32(os, static_cast<std::uint32_t>(model.routing.cluster_to_expert.size()));
    for (const auto& [cluster, expert] : model.routing.cluster_to_expert) {
        write_u32(os, static_cast<std::uint32_t>(cluster));
        write_u32(os, static_cast<std::uint32_t>(expert));
    }
}

MoEModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("bad checkpoint magic (expected DFCP): " + path);
    const std::uint32_t version = read_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    MoEModel model;
    model.input_dim = static_cast<int>(read_u32(is));
    model.n_outputs = static_cast<int>(read_u32(is));
    model.gate.partitions = static_cast<int>(read_u32(is));
    model.gate.spec = load_network_spec(is);
    model.gate.params = load_params(is);
    const std::uint32_t n_experts = read_u32(is);
    model.gate.n_experts = static_cast<int>(n_experts);
    for (std::uint32_t j = 0; j < n_experts; ++j) {
        Expert e;
        e.spec.conv1 = static_cast<int>(read_u32(is));
        e.spec.conv2 = static_cast<int>(read_u32(is));
        e.spec.kernel = static_cast<int>(read_u32(is));
        e.spec.fc1 = static_cast<int>(read_u32(is));
        e.spec.fc2 = static_cast<int>(read_u32(is));
        e.spec.n_outputs = static_cast<int>(read_u32(is));
        e.home_cluster = static_cast<int>(read_u32(is)) - 1;
        e.net = load_network_spec(is);
        e.params = load_params(is);
        model.experts.push_back(std::move(e));
    }
    model.routing.mode = static_cast<RoutingPlan::Mode>(read_u8(is));
    model.routing.leakage = read_f64(is);
    const std::uint32_t plan_n = read_u32(is);
    for (std::uint32_t i = 0; i < plan_n; ++i) {
        const int cluster = static_cast<int>(read_u32(is));
        const int expert = static_cast<int>(read_u32(is));
        model.routing.cluster_to_expert[cluster] = expert;
    }
    model.validate();
    return model;
}

}  // namespace dfcp
