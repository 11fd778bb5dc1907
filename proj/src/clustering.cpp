#include "dfcp/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dfcp/rng.hpp"

namespace dfcp {

std::vector<std::vector<int>> ClusterSet::members() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
    for (const auto& [sid, c] : assignment)
        if (c >= 0) out[static_cast<std::size_t>(c)].push_back(sid);
    return out;
}

std::vector<int> ClusterSet::outliers() const {
    std::vector<int> out;
    for (const auto& [sid, c] : assignment)
        if (c < 0) out.push_back(sid);
    return out;
}

void ClusterSet::validate(const FeatureSet& fs) const {
    if (k < 1) throw std::invalid_argument("cluster set must have k >= 1");
    if (static_cast<int>(centroids.size()) != k)
        throw std::invalid_argument("centroid count != k");
    if (static_cast<int>(assignment.size()) != fs.n())
        throw std::invalid_argument("assignment does not cover the feature set");
    std::map<int, const Tensor*> by_id;
    for (const auto& v : fs.vectors) by_id[v.source_id] = &v.values;
    for (const auto& [sid, c] : assignment) {
        if (!by_id.count(sid)) throw std::invalid_argument("assignment of unknown source id");
        if (c >= k || (c < 0 && stage == Stage::initial))
            throw std::invalid_argument("bad cluster index " + std::to_string(c));
    }
    const auto mem = members();
    for (int c = 0; c < k; ++c) {
        if (mem[static_cast<std::size_t>(c)].empty()) continue;
        Tensor mean = Tensor::zeros({fs.dim});
        for (int sid : mem[static_cast<std::size_t>(c)])
            for (int j = 0; j < fs.dim; ++j) mean.ref1(j) += by_id.at(sid)->at1(j);
        for (int j = 0; j < fs.dim; ++j)
            mean.ref1(j) = static_cast<real_t>(
                mean.at1(j) / static_cast<double>(mem[static_cast<std::size_t>(c)].size()));
        if (euclidean(mean, centroids[static_cast<std::size_t>(c)]) > 1e-9)
            throw std::invalid_argument("centroid " + std::to_string(c) +
                                        " is not the member mean");
    }
}

namespace {

double sq_dist(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc;
}

Tensor member_mean(const FeatureSet& fs, const std::vector<int>& rows) {
    Tensor mean = Tensor::zeros({fs.dim});
    for (int r : rows)
        for (int j = 0; j < fs.dim; ++j)
            mean.ref1(j) += fs.vectors[static_cast<std::size_t>(r)].values.at1(j);
    for (int j = 0; j < fs.dim; ++j)
        mean.ref1(j) = static_cast<real_t>(mean.at1(j) / static_cast<double>(rows.size()));
    return mean;
}

struct LloydResult {
    std::vector<int> assign;  // row -> cluster
    std::vector<Tensor> centroids;
    double objective = 0.0;
    std::vector<double> per_iter;
};

// k-means++ seeding over rows
std::vector<Tensor> seed_centroids(const FeatureSet& fs, int k, Rng& rng) {
    const int n = fs.n();
    std::vector<Tensor> cents;
    cents.reserve(static_cast<std::size_t>(k));
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    int first = rng.uniform_int(0, n - 1);
    cents.push_back(fs.vectors[static_cast<std::size_t>(first)].values);
    chosen[static_cast<std::size_t>(first)] = 1;
    std::vector<double> d2(static_cast<std::size_t>(n));
    while (static_cast<int>(cents.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const Tensor& c : cents)
                best = std::min(best, sq_dist(fs.vectors[static_cast<std::size_t>(i)].values, c));
            d2[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        int pick = -1;
        if (total <= 0.0) {
            // all remaining points coincide with centroids; take lowest unchosen
            for (int i = 0; i < n; ++i)
                if (!chosen[static_cast<std::size_t>(i)]) { pick = i; break; }
            if (pick < 0) pick = rng.uniform_int(0, n - 1);
        } else {
            double target = rng.uniform() * total;
            for (int i = 0; i < n; ++i) {
                target -= d2[static_cast<std::size_t>(i)];
                if (target <= 0.0) { pick = i; break; }
            }
            if (pick < 0) pick = n - 1;
        }
        cents.push_back(fs.vectors[static_cast<std::size_t>(pick)].values);
        chosen[static_cast<std::size_t>(pick)] = 1;
    }
    return cents;
}

LloydResult lloyd(const FeatureSet& fs, int k, int max_iter, double tol, Rng& rng) {
    const int n = fs.n();
    LloydResult res;
    res.centroids = seed_centroids(fs, k, rng);
    res.assign.assign(static_cast<std::size_t>(n), 0);
    double prev_obj = std::numeric_limits<double>::max();
    for (int iter = 0; iter < max_iter; ++iter) {
        // assignment: nearest centroid, ties to the lowest index
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(fs.vectors[static_cast<std::size_t>(i)].values, res.centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d =
                    sq_dist(fs.vectors[static_cast<std::size_t>(i)].values,
                            res.centroids[static_cast<std::size_t>(c)]);
                if (d < best_d) { best_d = d; best = c; }
            }
            if (res.assign[static_cast<std::size_t>(i)] != best) changed = true;
            res.assign[static_cast<std::size_t>(i)] = best;
        }
        // empty-cluster repair: reseed to the farthest point from the old centroid
        std::vector<std::vector<int>> rows(static_cast<std::size_t>(k));
        for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(res.assign[static_cast<std::size_t>(i)])].push_back(i);
        for (int c = 0; c < k; ++c) {
            if (!rows[static_cast<std::size_t>(c)].empty()) continue;
            int far = 0;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                const double d = sq_dist(fs.vectors[static_cast<std::size_t>(i)].values,
                                         res.centroids[static_cast<std::size_t>(c)]);
                if (d > far_d) { far_d = d; far = i; }
            }
            const int old = res.assign[static_cast<std::size_t>(far)];
            rows[static_cast<std::size_t>(old)].erase(
                std::find(rows[static_cast<std::size_t>(old)].begin(),
                          rows[static_cast<std::size_t>(old)].end(), far));
            rows[static_cast<std::size_t>(c)].push_back(far);
            res.assign[static_cast<std::size_t>(far)] = c;
            changed = true;
        }
        // update
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            Tensor mean = member_mean(fs, rows[static_cast<std::size_t>(c)]);
            shift = std::max(shift, euclidean(mean, res.centroids[static_cast<std::size_t>(c)]));
            res.centroids[static_cast<std::size_t>(c)] = std::move(mean);
        }
        double obj = 0.0;
        for (int i = 0; i < n; ++i)
            obj += sq_dist(fs.vectors[static_cast<std::size_t>(i)].values,
                           res.centroids[static_cast<std::size_t>(res.assign[static_cast<std::size_t>(i)])]);
        if (obj > prev_obj + 1e-9)
            throw std::logic_error("kmeans objective increased across an iteration");
        res.per_iter.push_back(obj);
        prev_obj = obj;
        res.objective = obj;
        if (!changed || shift < tol) break;
    }
    return res;
}

}  // namespace

KmeansRun kmeans(const FeatureSet& fs, const KmeansConfig& cfg) {
    const int n = fs.n();
    if (cfg.k <= 0) throw std::invalid_argument("kmeans needs k >= 1");
    if (cfg.k > n)
        throw std::invalid_argument("kmeans k=" + std::to_string(cfg.k) + " exceeds n=" +
                                    std::to_string(n));
    if (cfg.max_iter < 1) throw std::invalid_argument("kmeans needs max_iter >= 1");
    const int restarts = std::max(1, cfg.restarts);
    KmeansRun best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(sub_seed(cfg.seed, "kmeans", static_cast<std::uint64_t>(r)));
        LloydResult run = lloyd(fs, cfg.k, cfg.max_iter, cfg.tol, rng);
        if (!have || run.objective < best.objective) {
            have = true;
            best.objective = run.objective;
            best.objective_per_iter = run.per_iter;
            best.iterations = static_cast<int>(run.per_iter.size());
            best.best_restart = r;
            best.clusters.stage = ClusterSet::Stage::initial;
            best.clusters.k = cfg.k;
            best.clusters.centroids = run.centroids;
            best.clusters.assignment.clear();
            for (int i = 0; i < n; ++i)
                best.clusters.assignment[fs.vectors[static_cast<std::size_t>(i)].source_id] =
                    run.assign[static_cast<std::size_t>(i)];
        }
    }
    return best;
}

double clustering_objective(const FeatureSet& fs, const ClusterSet& clusters) {
    std::map<int, const Tensor*> by_id;
    for (const auto& v : fs.vectors) by_id[v.source_id] = &v.values;
    double obj = 0.0;
    for (const auto& [sid, c] : clusters.assignment) {
        if (c < 0) continue;
        obj += sq_dist(*by_id.at(sid), clusters.centroids[static_cast<std::size_t>(c)]);
    }
    return obj;
}

DbiReport davies_bouldin(const FeatureSet& fs, const ClusterSet& clusters) {
    const int k = clusters.k;
    if (k < 2) throw std::invalid_argument("davies_bouldin needs k >= 2");
    std::map<int, const Tensor*> by_id;
    for (const auto& v : fs.vectors) by_id[v.source_id] = &v.values;
    const auto mem = clusters.members();
    DbiReport rep;
    rep.intra.resize(static_cast<std::size_t>(k), 0.0);
    for (int c = 0; c < k; ++c) {
        const auto& rows = mem[static_cast<std::size_t>(c)];
        if (rows.empty())
            throw std::invalid_argument("davies_bouldin: cluster " + std::to_string(c) +
                                        " is empty");
        double acc = 0.0;
        for (int sid : rows)
            acc += euclidean(*by_id.at(sid), clusters.centroids[static_cast<std::size_t>(c)]);
        rep.intra[static_cast<std::size_t>(c)] = acc / static_cast<double>(rows.size());
    }
    rep.centroid_dist.assign(static_cast<std::size_t>(k),
                             std::vector<double>(static_cast<std::size_t>(k), 0.0));
    for (int u = 0; u < k; ++u) {
        for (int v = u + 1; v < k; ++v) {
            const double d = euclidean(clusters.centroids[static_cast<std::size_t>(u)],
                                       clusters.centroids[static_cast<std::size_t>(v)]);
            if (d < 1e-15)
                throw std::invalid_argument("davies_bouldin: coincident centroids " +
                                            std::to_string(u) + " and " + std::to_string(v));
            rep.centroid_dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)] = d;
            rep.centroid_dist[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)] = d;
        }
    }
    double sum = 0.0;
    for (int u = 0; u < k; ++u) {
        double worst = 0.0;
        for (int v = 0; v < k; ++v) {
            if (v == u) continue;
            const double r = (rep.intra[static_cast<std::size_t>(u)] +
                              rep.intra[static_cast<std::size_t>(v)]) /
                             rep.centroid_dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)];
            worst = std::max(worst, r);
        }
        sum += worst;
    }
    rep.dbi = sum / static_cast<double>(k);
    rep.band = rep.dbi == 0.0 ? "perfect" : (rep.dbi <= 1.0 ? "acceptable" : "poor");
    return rep;
}

void RefineConfig::validate() const {
    if (neighbor_min < 1) throw std::invalid_argument("refine neighbor_min must be >= 1");
    if (distance_threshold <= 0.0 || distance_threshold > 1.0)
        throw std::invalid_argument("refine distance_threshold must be in (0, 1]");
    if (sweep_grid.empty()) throw std::invalid_argument("refine sweep grid must be non-empty");
    for (std::size_t i = 0; i < sweep_grid.size(); ++i) {
        if (sweep_grid[i] <= 0.0 || sweep_grid[i] > 1.0)
            throw std::invalid_argument("refine sweep thresholds must be in (0, 1]");
        if (i > 0 && sweep_grid[i] <= sweep_grid[i - 1])
            throw std::invalid_argument("refine sweep thresholds must be strictly increasing");
    }
}

namespace {

Tensor normalize_minmax(const Tensor& x, const Tensor& lo, const Tensor& hi) {
    Tensor out = Tensor::zeros(x.shape);
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double range = static_cast<double>(hi.data[j]) - static_cast<double>(lo.data[j]);
        out.data[j] = static_cast<real_t>(
            range > 0.0 ? (static_cast<double>(x.data[j]) - static_cast<double>(lo.data[j])) / range
                        : 0.0);
    }
    return out;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ClusterSet refine(const FeatureSet& fs, const ClusterSet& initial, const RefineConfig& cfg) {
    cfg.validate();
    if (initial.stage != ClusterSet::Stage::initial)
        throw std::invalid_argument("refine expects an initial-stage cluster set");
    const int k = initial.k;

    auto [lo, hi] = minmax_bounds(fs);
    std::vector<Tensor> norm_cent;
    norm_cent.reserve(static_cast<std::size_t>(k));
    for (const Tensor& c : initial.centroids) norm_cent.push_back(normalize_minmax(c, lo, hi));

    // reference selection: each centroid's neighborhood radius is the median
    // of its own distances to the other centroids
    std::vector<int> references;
    for (int u = 0; u < k; ++u) {
        std::vector<double> dists;
        for (int v = 0; v < k; ++v)
            if (v != u)
                dists.push_back(euclidean(norm_cent[static_cast<std::size_t>(u)],
                                          norm_cent[static_cast<std::size_t>(v)]));
        const double radius = median_of(dists);
        int neighbors = 0;
        for (double d : dists)
            if (d <= radius) ++neighbors;
        if (neighbors >= cfg.neighbor_min) references.push_back(u);
    }
    if (references.empty())
        throw std::runtime_error(
            "refine found no reference clusters; lower refine.neighbor_min or adjust "
            "refine.distance_threshold");

    ClusterSet refined;
    refined.stage = ClusterSet::Stage::refined;
    refined.k = static_cast<int>(references.size());

    // capture: nearest reference centroid within the threshold, ties to the
    // lowest reference index; only members of initial clusters participate
    std::map<int, const Tensor*> by_id;
    for (const auto& v : fs.vectors) by_id[v.source_id] = &v.values;
    std::vector<std::vector<int>> captured(references.size());
    for (const auto& [sid, c] : initial.assignment) {
        if (c < 0) { refined.assignment[sid] = -1; continue; }
        const Tensor z = normalize_minmax(*by_id.at(sid), lo, hi);
        int best = -1;
        double best_d = 0.0;
        for (std::size_t r = 0; r < references.size(); ++r) {
            const double d = euclidean(z, norm_cent[static_cast<std::size_t>(references[r])]);
            if (d <= cfg.distance_threshold && (best < 0 || d < best_d)) {
                best = static_cast<int>(r);
                best_d = d;
            }
        }
        refined.assignment[sid] = best;
        if (best >= 0) captured[static_cast<std::size_t>(best)].push_back(sid);
    }

    // drop empty reference clusters, reindex compactly, recompute centroids
    std::vector<int> remap(references.size(), -1);
    int next = 0;
    for (std::size_t r = 0; r < references.size(); ++r)
        if (!captured[r].empty()) remap[r] = next++;
    if (next == 0)
        throw std::runtime_error(
            "refine captured no features; raise refine.distance_threshold");
    refined.k = next;
    refined.centroids.assign(static_cast<std::size_t>(next), Tensor());
    for (auto& [sid, c] : refined.assignment)
        if (c >= 0) c = remap[static_cast<std::size_t>(c)];
    for (std::size_t r = 0; r < references.size(); ++r) {
        if (remap[r] < 0) continue;
        Tensor mean = Tensor::zeros({fs.dim});
        for (int sid : captured[r])
            for (int j = 0; j < fs.dim; ++j) mean.ref1(j) += by_id.at(sid)->at1(j);
        for (int j = 0; j < fs.dim; ++j)
            mean.ref1(j) = static_cast<real_t>(mean.at1(j) / static_cast<double>(captured[r].size()));
        refined.centroids[static_cast<std::size_t>(remap[r])] = std::move(mean);
    }
    return refined;
}

SweepResult sweep_threshold(const FeatureSet& fs, const ClusterSet& initial,
                            const RefineConfig& cfg) {
    cfg.validate();
    SweepResult res;
    bool have = false;
    for (double t : cfg.sweep_grid) {
        SweepEntry entry;
        entry.threshold = t;
        RefineConfig point = cfg;
        point.distance_threshold = t;
        try {
            ClusterSet refined = refine(fs, initial, point);
            DbiReport rep = davies_bouldin(fs, refined);
            entry.ok = true;
            entry.dbi = rep.dbi;
            entry.k = refined.k;
            entry.outliers = static_cast<int>(refined.outliers().size());
            if (!have || entry.dbi < res.best_dbi) {
                have = true;
                res.best_dbi = entry.dbi;
                res.best_threshold = t;
                res.best_clusters = std::move(refined);
            }
        } catch (const std::exception& e) {
            entry.ok = false;
            entry.error = e.what();
        }
        res.entries.push_back(std::move(entry));
    }
    if (!have) {
        std::string msg = "sweep_threshold: every grid point failed:";
        for (const auto& e : res.entries) msg += "\n  t=" + std::to_string(e.threshold) + ": " + e.error;
        throw std::runtime_error(msg);
    }
    return res;
}

int auto_k(const FeatureSet& fs, const std::vector<int>& k_grid, const KmeansConfig& base) {
    if (k_grid.empty()) throw std::invalid_argument("auto_k: empty grid");
    int best_k = -1;
    double best_dbi = 0.0;
    for (int k : k_grid) {
        if (k < 2 || k > fs.n()) continue;
        KmeansConfig cfg = base;
        cfg.k = k;
        try {
            KmeansRun run = kmeans(fs, cfg);
            DbiReport rep = davies_bouldin(fs, run.clusters);
            if (best_k < 0 || rep.dbi < best_dbi) {
                best_k = k;
                best_dbi = rep.dbi;
            }
        } catch (const std::exception&) {
            // degenerate k (coincident centroids etc.) just drops out of the grid
        }
    }
    if (best_k < 0) throw std::runtime_error("auto_k: no feasible k in the grid");
    return best_k;
}

void save_clusters_csv(const std::string& path, const ClusterSet& clusters) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "source_id,cluster\n";
    for (const auto& [sid, c] : clusters.assignment) os << sid << "," << c << "\n";
}

ClusterSet load_clusters_csv(const std::string& path, const FeatureSet& fs,
                             ClusterSet::Stage stage) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty cluster CSV: " + path);
    ClusterSet cs;
    cs.stage = stage;
    int max_c = -1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("bad cluster CSV row: " + line);
        const int sid = std::stoi(line.substr(0, comma));
        const int c = std::stoi(line.substr(comma + 1));
        cs.assignment[sid] = c;
        max_c = std::max(max_c, c);
    }
    cs.k = max_c + 1;
    if (cs.k < 1) throw std::runtime_error("cluster CSV holds no clusters: " + path);
    // rebuild centroids as member means
    std::map<int, const Tensor*> by_id;
    for (const auto& v : fs.vectors) by_id[v.source_id] = &v.values;
    cs.centroids.assign(static_cast<std::size_t>(cs.k), Tensor());
    const auto mem = cs.members();
    for (int c = 0; c < cs.k; ++c) {
        const auto& rows = mem[static_cast<std::size_t>(c)];
        if (rows.empty()) throw std::runtime_error("cluster CSV has empty cluster " + std::to_string(c));
        Tensor mean = Tensor::zeros({fs.dim});
        for (int sid : rows)
            for (int j = 0; j < fs.dim; ++j) mean.ref1(j) += by_id.at(sid)->at1(j);
        for (int j = 0; j < fs.dim; ++j)
            mean.ref1(j) = static_cast<real_t>(mean.at1(j) / static_cast<double>(rows.size()));
        cs.centroids[static_cast<std::size_t>(c)] = std::move(mean);
    }
    return cs;
}

}  // namespace dfcp
