#include "dfcp/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>
#include <stdexcept>

namespace dfcp {

double average_precision(const std::vector<double>& scores, const std::vector<int>& is_positive) {
    if (scores.size() != is_positive.size())
        throw std::invalid_argument("average_precision: length mismatch");
    const int n = static_cast<int>(scores.size());
    long long n_pos = 0;
    for (int p : is_positive) n_pos += p ? 1 : 0;
    if (n_pos == 0) throw std::invalid_argument("average_precision: no positives");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
            return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
        return a < b;
    });
    double ap_sum = 0.0;
    long long seen_pos = 0;
    for (int rank = 0; rank < n; ++rank) {
        if (is_positive[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])]) {
            seen_pos += 1;
            ap_sum += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
        }
    }
    return ap_sum / static_cast<double>(n_pos);
}

double balanced_accuracy(const std::vector<int>& predicted, const std::vector<int>& y) {
    if (predicted.size() != y.size() || y.empty())
        throw std::invalid_argument("balanced_accuracy: bad inputs");
    std::map<int, long long> total, correct;
    for (std::size_t i = 0; i < y.size(); ++i) {
        total[y[i]] += 1;
        if (predicted[i] == y[i]) correct[y[i]] += 1;
    }
    double sum = 0.0;
    for (const auto& [cls, cnt] : total)
        sum += static_cast<double>(correct[cls]) / static_cast<double>(cnt);
    return sum / static_cast<double>(total.size());
}

std::map<int, double> per_class_average_precision(const std::vector<Tensor>& probs,
                                                  const std::vector<int>& y) {
    if (probs.size() != y.size() || y.empty())
        throw std::invalid_argument("per_class_average_precision: bad inputs");
    std::set<int> classes(y.begin(), y.end());
    std::map<int, double> out;
    for (int cls : classes) {
        std::vector<double> scores;
        std::vector<int> pos;
        scores.reserve(y.size());
        pos.reserve(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            scores.push_back(probs[i].at1(cls));
            pos.push_back(y[i] == cls ? 1 : 0);
        }
        out[cls] = average_precision(scores, pos);
    }
    return out;
}

void evaluate_metrics(EvaluationReport& report, const ProbFn& prob_fn,
                      const std::vector<Tensor>& xs, const std::vector<int>& ys, int passes) {
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("evaluate: empty or inconsistent test set");
    std::set<int> classes(ys.begin(), ys.end());
    if (classes.size() < 2)
        throw std::invalid_argument("evaluate: test set must contain >= 2 classes");

    std::vector<Tensor> probs;
    probs.reserve(xs.size());
    std::vector<double> pass_ms;
    for (int pass = 0; pass < std::max(1, passes); ++pass) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<Tensor> out;
        out.reserve(xs.size());
        for (const Tensor& x : xs) out.push_back(prob_fn(x));
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count() /
            static_cast<double>(xs.size());
        pass_ms.push_back(ms);
        if (pass == 0) probs = std::move(out);
    }
    std::sort(pass_ms.begin(), pass_ms.end());
    report.inference_ms_per_sample = pass_ms[pass_ms.size() / 2];

    std::vector<int> predicted;
    predicted.reserve(probs.size());
    for (const Tensor& p : probs) {
        int arg = 0;
        for (int c = 1; c < static_cast<int>(p.size()); ++c)
            if (p.at1(c) > p.at1(arg)) arg = c;
        predicted.push_back(arg);
    }
    report.per_class_ap = per_class_average_precision(probs, ys);
    double sum = 0.0;
    for (const auto& [cls, ap] : report.per_class_ap) sum += ap;
    report.map = sum / static_cast<double>(report.per_class_ap.size());
    report.balanced_accuracy = balanced_accuracy(predicted, ys);
}

}  // namespace dfcp
