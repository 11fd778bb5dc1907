#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfcp/clustering.hpp"
#include "dfcp/network.hpp"
#include "dfcp/optimizer.hpp"
#include "dfcp/pseudo_label.hpp"

namespace dfcp {

/// Managing network: maps a feature vector to one logit per expert. With
/// partitions > 1 the input is split into equal blocks sharing one weight
/// matrix; partitions == 1 is a plain linear (or MLP) map.
struct GateNetwork {
    NetworkSpec spec;
    ParameterSet params;
    int partitions = 1;
    int n_experts = 0;
};

struct ExpertSpec {
    int conv1 = 0;   // optional 1-d conv filters over the feature vector (0 = off)
    int conv2 = 0;
    int kernel = 3;
    int fc1 = 32;
    int fc2 = 16;
    int n_outputs = 0;  // classes + outlier class

    NetworkSpec to_network(int input_dim) const;
};

struct Expert {
    ExpertSpec spec;
    NetworkSpec net;
    ParameterSet params;
    int home_cluster = -1;
};

struct RoutingPlan {
    enum class Mode : std::uint8_t { dfcp = 0, traditional = 1 };
    Mode mode = Mode::dfcp;
    double leakage = 0.1;  // share of each expert's batch drawn from other clusters
    std::map<int, int> cluster_to_expert;  // dfcp: total bijection; traditional: empty

    void validate(int n_experts) const;
};

struct MoEModel {
    GateNetwork gate;
    std::vector<Expert> experts;
    RoutingPlan routing;
    int input_dim = 0;
    int n_outputs = 0;

    int n_experts() const { return static_cast<int>(experts.size()); }
    void validate() const;
};

NetworkSpec gate_spec(int input_dim, int n_experts, int hidden, int partitions);

struct MoeBuildConfig {
    int gate_hidden = 0;
    int gate_partitions = 1;
    std::vector<ExpertSpec> experts;  // n_outputs filled in by build
    std::uint64_t seed = 0;
};

MoEModel build_moe(int input_dim, int n_outputs, const MoeBuildConfig& cfg,
                   const RoutingPlan& routing);

/// softmax over gate logits; non-negative, sums to 1 within 1e-12.
Tensor gate_forward(const GateNetwork& gate, const Tensor& x);
Tensor expert_forward(const Expert& expert, const Tensor& x);
/// Gate-weighted convex combination of expert class distributions.
Tensor mixture_forward(const MoEModel& model, const Tensor& x);

struct Batch {
    std::vector<Tensor> x;
    std::vector<int> y;

    std::size_t size() const { return x.size(); }
};

/// L_e = -sum_i log P(y_i | x_i) over the expert's batch.
double expert_loss(const Expert& expert, const Batch& batch);
/// L_g = -sum_i log sum_j g_j(x_i) P(y_i | x_i, E_j), mixture floored at 1e-12.
double gate_loss(const MoEModel& model, const Batch& batch);
/// Same functional form as gate_loss, computed through mixture_forward;
/// returned separately for logging and cross-checked in tests.
double combined_loss(const MoEModel& model, const Batch& batch);

struct MoeGradients {
    ParameterSet gate;
    std::vector<ParameterSet> experts;
};

/// Full exact gradient of L_total = gate_loss(gate_batch)
/// + sum_j expert_loss(expert_batches[j]) — the mixture term flows into the
/// experts weighted by the gate (responsibility g_j p_j[y]/m). Verified
/// against central finite differences coordinate by coordinate.
MoeGradients moe_backward(const MoEModel& model, const Batch& gate_batch,
                          const std::vector<Batch>& expert_batches);
/// Single-batch form: every expert's batch equals the gate batch.
MoeGradients moe_backward(const MoEModel& model, const Batch& batch);

/// Mean absolute gap between the paper-reported loss/output derivative
/// expressions and the derivatives of the implemented losses, evaluated on a
/// batch. Logged as a diagnostic, never trained with.
double paper_gradient_gap(const MoEModel& model, const Batch& batch);

struct ExpertHyperparams {
    OptimizerConfig opt;
    int batch = 32;
};

struct JointTrainConfig {
    int epochs = 30;
    std::uint64_t seed = 0;
    int gate_batch = 32;
    OptimizerConfig gate_opt;
    std::vector<ExpertHyperparams> expert_hp;  // one per expert
};

struct MoeEpochLog {
    double gate_loss = 0.0;
    double combined_loss = 0.0;
    std::vector<double> expert_loss;
    double paper_gap = 0.0;
};

struct MoeTrainLog {
    std::vector<MoeEpochLog> epochs;
    double wall_seconds = 0.0;
};

/// Conditionally routed joint training: per step each expert draws a batch
/// with (1-leakage) home-cluster samples and leakage samples from the other
/// clusters, the gate draws a uniform batch over all clustered samples; all
/// gradients are computed before any update is applied. Expert updates
/// minimize that expert's own loss, the gate minimizes the gating loss.
/// Deterministic per seed. Bucket (-1) samples are excluded from training.
MoeTrainLog joint_train(MoEModel& model, const FeatureSet& features,
                        const PseudoLabeledSet& labels, const ClusterSet& clusters,
                        const JointTrainConfig& cfg);

/// Traditional baseline: identical losses and loop, but every batch is drawn
/// uniformly from all labeled data and no cluster conditioning exists.
MoeTrainLog train_traditional(MoEModel& model, const FeatureSet& features,
                              const std::map<int, int>& labels, const JointTrainConfig& cfg);

struct InferResult {
    int predicted = 0;
    Tensor probs;
    std::vector<int> activated;  // expert ids evaluated
};

/// top_k == 0 evaluates the full mixture; top_k == m renormalizes the m
/// largest gate weights and evaluates only those experts.
InferResult infer(const MoEModel& model, const Tensor& x, int top_k = 0);

/// Analytic inference cost. For top-k the k most expensive experts are
/// charged (worst case over routings).
std::uint64_t moe_infer_flops(const MoEModel& model, int top_k);
std::uint64_t moe_param_count(const MoEModel& model);

// Checkpoint: magic "DFCP", version u32, gate, expert count, per-expert
// spec + parameters, routing plan. Round-trips bitwise.
void save_checkpoint(const std::string& path, const MoEModel& model);
MoEModel load_checkpoint(const std::string& path);

}  // namespace dfcp
