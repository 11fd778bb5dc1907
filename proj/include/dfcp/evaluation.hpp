#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dfcp/tensor.hpp"

namespace dfcp {

struct ExpertContribution {
    int expert = 0;
    int home_class = -1;
    double mean_precision = 0.0;   // correct rate on test samples of the home class
    double mean_gate_weight = 0.0; // mean gate weight on those samples
};

struct EvaluationReport {
    std::string kind;  // dfcp-moe | traditional-moe | dense
    std::map<int, double> per_class_ap;
    double map = 0.0;
    double balanced_accuracy = 0.0;
    double inference_ms_per_sample = 0.0;  // median over 3 passes; never asserted
    double training_wall_seconds = 0.0;
    std::uint64_t inference_flops = 0;     // inference mode actually evaluated
    std::uint64_t inference_flops_top1 = 0;
    std::uint64_t inference_flops_full = 0;
    std::uint64_t training_flops = 0;      // analytic: 3x forward per sample-step
    std::uint64_t param_count = 0;
    std::vector<ExpertContribution> per_expert;
};

/// One-vs-rest average precision: samples ranked by score descending (ties
/// by ascending index), AP = mean of precision-at-rank over positive ranks.
double average_precision(const std::vector<double>& scores, const std::vector<int>& is_positive);

/// Macro mean of per-class recall at argmax over classes present in y.
double balanced_accuracy(const std::vector<int>& predicted, const std::vector<int>& y);

/// Macro mAP over classes present in y; probs[i] is the class-probability
/// vector for sample i.
std::map<int, double> per_class_average_precision(const std::vector<Tensor>& probs,
                                                  const std::vector<int>& y);

using ProbFn = std::function<Tensor(const Tensor&)>;

/// Fills metric fields of a report from a probability function evaluated on
/// the test set (>= 2 classes required): mAP, balanced accuracy, and the
/// median-of-3-passes wall clock.
void evaluate_metrics(EvaluationReport& report, const ProbFn& prob_fn,
                      const std::vector<Tensor>& xs, const std::vector<int>& ys, int passes = 3);

}  // namespace dfcp
