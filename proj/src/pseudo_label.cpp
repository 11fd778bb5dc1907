#include "dfcp/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "dfcp/rng.hpp"
#include "dfcp/util.hpp"

namespace dfcp {

namespace {

double pair_loss_from_distance(double d, int h, double margin, bool standard_convention) {
    const int similar_term = standard_convention ? 1 - h : h;
    if (similar_term == 0) return 0.5 * d * d;
    const double gap = std::max(0.0, margin - d);
    return 0.5 * gap * gap;
}

// dLoss/dD for the convention in use
double pair_loss_ddist(double d, int h, double margin, bool standard_convention) {
    const int similar_term = standard_convention ? 1 - h : h;
    if (similar_term == 0) return d;
    const double gap = margin - d;
    return gap > 0.0 ? -gap : 0.0;
}

}  // namespace

NetworkSpec siamese_spec(const SiameseTrainConfig& cfg, int input_dim) {
    NetworkSpec spec;
    int cur = input_dim;
    if (!cfg.conv_layers.empty()) {
        if (cfg.in_h * cfg.in_w * cfg.in_c != input_dim)
            throw std::invalid_argument("siamese conv front geometry does not match input dim");
        int h = cfg.in_h, w = cfg.in_w, c = cfg.in_c;
        for (const auto& l : cfg.conv_layers) {
            Conv2dLayer cl;
            cl.in_h = h;
            cl.in_w = w;
            cl.in_c = c;
            cl.filters = l.filters;
            cl.kernel = l.kernel;
            cl.act = Activation::relu;
            spec.layers.emplace_back(cl);
            h = h - l.kernel + 1;
            w = w - l.kernel + 1;
            c = l.filters;
        }
        cur = h * w * c;
    }
    spec.layers.emplace_back(DenseLayer{cur, cfg.hidden, Activation::relu});
    spec.layers.emplace_back(DenseLayer{cfg.hidden, cfg.embedding, Activation::identity});
    spec.validate();
    return spec;
}

double contrastive_loss(const PairSample& pair, const SiameseEncoder& enc, double margin,
                        bool standard_convention) {
    if (margin <= 0.0) throw std::invalid_argument("contrastive margin must be positive");
    if (pair.h != 0 && pair.h != 1) throw std::invalid_argument("pair label h must be 0 or 1");
    const double d = similarity_distance(enc, pair.a, pair.b);
    return pair_loss_from_distance(d, pair.h, margin, standard_convention);
}

double similarity_distance(const SiameseEncoder& enc, const FeatureVector& a,
                           const FeatureVector& b) {
    const Tensor ea = net_forward(enc.spec, enc.params, a.values);
    const Tensor eb = net_forward(enc.spec, enc.params, b.values);
    return euclidean(ea, eb);
}

SiameseEncoder train_siamese(const FeatureSet& trusted, const SiameseTrainConfig& cfg,
                             SiameseTrainLog* log) {
    if (cfg.margin <= 0.0) throw std::invalid_argument("siamese margin must be positive");
    // group trusted rows per class
    std::map<int, std::vector<int>> per_class;
    for (int i = 0; i < trusted.n(); ++i) {
        const auto& v = trusted.vectors[static_cast<std::size_t>(i)];
        if (!v.trusted_label)
            throw std::invalid_argument("train_siamese: sample " + std::to_string(v.source_id) +
                                        " has no trusted label");
        per_class[*v.trusted_label].push_back(i);
    }
    if (per_class.size() < 2)
        throw std::invalid_argument("train_siamese needs at least 2 trusted classes, got " +
                                    std::to_string(per_class.size()));
    for (const auto& [cls, rows] : per_class)
        if (rows.size() < 2)
            throw std::invalid_argument("train_siamese: class " + std::to_string(cls) +
                                        " has fewer than 2 trusted samples");
    std::vector<int> classes;
    for (const auto& [cls, rows] : per_class) classes.push_back(cls);

    SiameseEncoder enc;
    enc.spec = siamese_spec(cfg, trusted.dim);
    enc.params = init_params(enc.spec, cfg.seed, InitScheme::kaiming_uniform);
    enc.train_margin = cfg.margin;

    OptimizerState opt = OptimizerState::make(cfg.opt, enc.params);
    Rng rng(sub_seed(cfg.seed, "siamese-pairs"));
    const int steps = (trusted.n() + cfg.batch - 1) / cfg.batch;
    const int half = std::max(1, cfg.batch / 2);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        long long pair_count = 0;
        for (int step = 0; step < steps; ++step) {
            ParameterSet grad = ParameterSet::zeros_like(enc.params);
            double batch_loss = 0.0;
            const int pairs_in_batch = 2 * half;
            for (int p = 0; p < pairs_in_batch; ++p) {
                int ia, ib, h;
                if (p < half) {  // positive pair: same class, distinct members
                    const int cls = classes[static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<int>(classes.size()) - 1))];
                    const auto& rows = per_class[cls];
                    ia = rows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(rows.size()) - 1))];
                    do {
                        ib = rows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(rows.size()) - 1))];
                    } while (ib == ia);
                    h = 1;
                } else {  // negative pair: two different classes
                    const int c1 = rng.uniform_int(0, static_cast<int>(classes.size()) - 1);
                    int c2;
                    do {
                        c2 = rng.uniform_int(0, static_cast<int>(classes.size()) - 1);
                    } while (c2 == c1);
                    const auto& r1 = per_class[classes[static_cast<std::size_t>(c1)]];
                    const auto& r2 = per_class[classes[static_cast<std::size_t>(c2)]];
                    ia = r1[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(r1.size()) - 1))];
                    ib = r2[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(r2.size()) - 1))];
                    h = 0;
                }
                const Tensor& xa = trusted.vectors[static_cast<std::size_t>(ia)].values;
                const Tensor& xb = trusted.vectors[static_cast<std::size_t>(ib)].values;
                NetTrace ta = net_forward_trace(enc.spec, enc.params, xa);
                NetTrace tb = net_forward_trace(enc.spec, enc.params, xb);
                const double d = euclidean(ta.output, tb.output);
                batch_loss += pair_loss_from_distance(d, h, cfg.margin, cfg.standard_contrastive);
                const double dl_dd = pair_loss_ddist(d, h, cfg.margin, cfg.standard_contrastive);
                if (dl_dd != 0.0 && d > 0.0) {
                    const double scale = dl_dd / (d * pairs_in_batch);
                    Tensor ga = Tensor::zeros(ta.output.shape);
                    Tensor gb = Tensor::zeros(tb.output.shape);
                    for (std::size_t j = 0; j < ga.size(); ++j) {
                        const double diff = static_cast<double>(ta.output.data[j]) -
                                            static_cast<double>(tb.output.data[j]);
                        ga.data[j] = static_cast<real_t>(scale * diff);
                        gb.data[j] = static_cast<real_t>(-scale * diff);
                    }
                    // both branches accumulate into the shared parameters
                    net_backward(enc.spec, enc.params, ta, ga, grad);
                    net_backward(enc.spec, enc.params, tb, gb, grad);
                }
            }
            epoch_loss += batch_loss;
            pair_count += pairs_in_batch;
            optimizer_step(enc.params, grad, opt);
        }
        if (log) log->epoch_loss.push_back(pair_count ? epoch_loss / static_cast<double>(pair_count) : 0.0);
    }
    return enc;
}

Prf prf1(long long tp, long long fp, long long fn) {
    if (tp < 0 || fp < 0 || fn < 0) throw std::invalid_argument("prf1 counts must be >= 0");
    Prf out;
    out.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    out.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

ThresholdSweep select_threshold(const SiameseEncoder& enc,
                                const std::vector<PairSample>& validation,
                                const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("select_threshold: empty grid");
    for (double t : grid)
        if (t <= 0.0) throw std::invalid_argument("select_threshold: non-positive tau in grid");
    bool has_pos = false, has_neg = false;
    for (const auto& p : validation) {
        if (p.h == 1) has_pos = true;
        if (p.h == 0) has_neg = true;
    }
    if (!has_pos || !has_neg)
        throw std::invalid_argument("select_threshold: validation pairs must contain both h values");

    std::vector<double> dist;
    dist.reserve(validation.size());
    for (const auto& p : validation) dist.push_back(similarity_distance(enc, p.a, p.b));

    ThresholdSweep sweep;
    double best_f1 = -1.0;
    for (double tau : grid) {
        long long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            const bool pred_same = dist[i] <= tau;
            if (pred_same && validation[i].h == 1) ++tp;
            else if (pred_same && validation[i].h == 0) ++fp;
            else if (!pred_same && validation[i].h == 1) ++fn;
        }
        ThresholdSweep::Row row;
        row.tau = tau;
        row.prf = prf1(tp, fp, fn);
        if (row.prf.f1 > best_f1) {  // strict > keeps the smaller tau on ties
            best_f1 = row.prf.f1;
            sweep.tau_star = tau;
        }
        sweep.rows.push_back(row);
    }
    return sweep;
}

PseudoLabeledSet assign_labels(const SiameseEncoder& enc, double tau_star,
                               const FeatureSet& trusted, const FeatureSet& all,
                               const ClusterSet& refined, int threads) {
    if (trusted.n() == 0) throw std::invalid_argument("assign_labels: empty trusted set");
    if (tau_star <= 0.0) throw std::invalid_argument("assign_labels: tau* must be positive");
    std::set<int> cls;
    for (const auto& v : trusted.vectors) {
        if (!v.trusted_label)
            throw std::invalid_argument("assign_labels: trusted sample without label");
        cls.insert(*v.trusted_label);
    }
    PseudoLabeledSet out;
    out.n_classes = static_cast<int>(cls.size());
    for (int c : cls)
        if (c < 0 || c >= out.n_classes)
            throw std::invalid_argument("assign_labels: trusted labels must be 0..C-1");
    out.outlier_class = out.n_classes;

    std::vector<Tensor> trusted_emb(static_cast<std::size_t>(trusted.n()));
    parallel_for(trusted.n(), threads, [&](int i) {
        trusted_emb[static_cast<std::size_t>(i)] =
            net_forward(enc.spec, enc.params, trusted.vectors[static_cast<std::size_t>(i)].values);
    });

    std::map<int, std::optional<int>> trusted_by_id;
    for (const auto& v : trusted.vectors) trusted_by_id[v.source_id] = v.trusted_label;

    std::vector<int> labels(static_cast<std::size_t>(all.n()), 0);
    std::vector<double> conf(static_cast<std::size_t>(all.n()), 0.0);
    parallel_for(all.n(), threads, [&](int i) {
        const auto& v = all.vectors[static_cast<std::size_t>(i)];
        const auto it = refined.assignment.find(v.source_id);
        const int cluster = it == refined.assignment.end() ? -1 : it->second;
        if (cluster < 0) {
            labels[static_cast<std::size_t>(i)] = out.outlier_class;
            conf[static_cast<std::size_t>(i)] = 0.0;
            return;
        }
        const Tensor emb = net_forward(enc.spec, enc.params, v.values);
        double d_min = std::numeric_limits<double>::max();
        int nearest = -1;
        for (int t = 0; t < trusted.n(); ++t) {
            const double d = euclidean(emb, trusted_emb[static_cast<std::size_t>(t)]);
            if (d < d_min) {
                d_min = d;
                nearest = t;
            }
        }
        conf[static_cast<std::size_t>(i)] = tau_star - d_min;
        const auto trust_it = trusted_by_id.find(v.source_id);
        if (trust_it != trusted_by_id.end() && trust_it->second) {
            labels[static_cast<std::size_t>(i)] = *trust_it->second;  // never overwritten
        } else if (d_min <= tau_star) {
            labels[static_cast<std::size_t>(i)] =
                *trusted.vectors[static_cast<std::size_t>(nearest)].trusted_label;
        } else {
            labels[static_cast<std::size_t>(i)] = out.outlier_class;
        }
    });
    for (int i = 0; i < all.n(); ++i) {
        const int sid = all.vectors[static_cast<std::size_t>(i)].source_id;
        out.label[sid] = labels[static_cast<std::size_t>(i)];
        out.confidence[sid] = conf[static_cast<std::size_t>(i)];
    }
    return out;
}

PurityReport purity(const ClusterSet& clusters, const std::map<int, int>& labels) {
    PurityReport rep;
    const auto mem = clusters.members();
    double weighted = 0.0;
    long long total = 0;
    for (int c = 0; c < clusters.k; ++c) {
        const auto& rows = mem[static_cast<std::size_t>(c)];
        if (rows.empty()) {
            rep.skipped.push_back(c);
            continue;
        }
        std::map<int, int> counts;
        for (int sid : rows) {
            const auto it = labels.find(sid);
            if (it == labels.end())
                throw std::invalid_argument("purity: member " + std::to_string(sid) +
                                            " has no label");
            counts[it->second] += 1;
        }
        int modal = 0;
        for (const auto& [lbl, cnt] : counts) modal = std::max(modal, cnt);
        const double p = static_cast<double>(modal) / static_cast<double>(rows.size());
        rep.per_cluster[c] = p;
        weighted += p * static_cast<double>(rows.size());
        total += static_cast<long long>(rows.size());
    }
    rep.average = total > 0 ? weighted / static_cast<double>(total) : 0.0;
    return rep;
}

std::vector<PairSample> make_validation_pairs(const FeatureSet& trusted, int per_kind,
                                              std::uint64_t seed) {
    std::map<int, std::vector<int>> per_class;
    for (int i = 0; i < trusted.n(); ++i) {
        const auto& v = trusted.vectors[static_cast<std::size_t>(i)];
        if (v.trusted_label) per_class[*v.trusted_label].push_back(i);
    }
    std::vector<int> classes;
    for (const auto& [cls, rows] : per_class)
        if (rows.size() >= 2) classes.push_back(cls);
    if (classes.empty() || per_class.size() < 2)
        throw std::invalid_argument("make_validation_pairs needs >= 2 classes");
    std::vector<int> all_classes;
    for (const auto& [cls, rows] : per_class) all_classes.push_back(cls);

    Rng rng(sub_seed(seed, "validation-pairs"));
    std::vector<PairSample> pairs;
    pairs.reserve(static_cast<std::size_t>(2 * per_kind));
    for (int i = 0; i < per_kind; ++i) {
        const int cls = classes[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(classes.size()) - 1))];
        const auto& rows = per_class[cls];
        const int ia = rows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(rows.size()) - 1))];
        int ib;
        do {
            ib = rows[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(rows.size()) - 1))];
        } while (ib == ia);
        pairs.push_back({trusted.vectors[static_cast<std::size_t>(ia)],
                         trusted.vectors[static_cast<std::size_t>(ib)], 1});
    }
    for (int i = 0; i < per_kind; ++i) {
        const int c1 = rng.uniform_int(0, static_cast<int>(all_classes.size()) - 1);
        int c2;
        do {
            c2 = rng.uniform_int(0, static_cast<int>(all_classes.size()) - 1);
        } while (c2 == c1);
        const auto& r1 = per_class[all_classes[static_cast<std::size_t>(c1)]];
        const auto& r2 = per_class[all_classes[static_cast<std::size_t>(c2)]];
        const int ia = r1[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(r1.size()) - 1))];
        const int ib = r2[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(r2.size()) - 1))];
        pairs.push_back({trusted.vectors[static_cast<std::size_t>(ia)],
                         trusted.vectors[static_cast<std::size_t>(ib)], 0});
    }
    return pairs;
}

std::vector<double> tau_grid_from_pairs(const SiameseEncoder& enc,
                                        const std::vector<PairSample>& pairs, int count) {
    if (count < 1) throw std::invalid_argument("tau grid count must be >= 1");
    double d_max = 0.0;
    for (const auto& p : pairs) d_max = std::max(d_max, similarity_distance(enc, p.a, p.b));
    if (d_max <= 0.0) d_max = 1.0;
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(count));
    for (int i = 1; i <= count; ++i)
        grid.push_back(d_max * static_cast<double>(i) / static_cast<double>(count));
    return grid;
}

ParameterSet borrow_conv_front(const ExtractorConfig& cfg, const SiameseEncoder& enc) {
    cfg.validate();
    if (cfg.kind != ExtractorKind::conv_encoder)
        throw std::invalid_argument("borrow_conv_front: extractor is not a conv-encoder");
    const NetworkSpec want = cfg.conv_spec();
    if (enc.spec.layers.size() < want.layers.size())
        throw std::invalid_argument("borrow_conv_front: encoder has fewer layers than extractor");
    ParameterSet out;
    out.set_seed(enc.params.seed());
    for (std::size_t i = 0; i < want.layers.size(); ++i) {
        const auto* wc = std::get_if<Conv2dLayer>(&want.layers[i]);
        const auto* ec = std::get_if<Conv2dLayer>(&enc.spec.layers[i]);
        if (!wc || !ec || wc->in_h != ec->in_h || wc->in_w != ec->in_w || wc->in_c != ec->in_c ||
            wc->filters != ec->filters || wc->kernel != ec->kernel)
            throw std::invalid_argument(
                "borrow_conv_front: encoder layer " + std::to_string(i) +
                " does not match the extractor conv spec");
        out.add_entry("layer" + std::to_string(i), enc.params.entry(i).weights,
                      enc.params.entry(i).bias);
    }
    return out;
}

void save_labels_csv(const std::string& path, const PseudoLabeledSet& labels) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "source_id,label,confidence\n";
    for (const auto& [sid, lbl] : labels.label)
        os << sid << "," << lbl << "," << fmt_double(labels.confidence.at(sid)) << "\n";
}

}  // namespace dfcp
