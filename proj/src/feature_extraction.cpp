#include "dfcp/feature_extraction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dfcp/rng.hpp"
#include "dfcp/util.hpp"

namespace dfcp {

void FeatureSet::validate() const {
    std::set<int> ids;
    for (const auto& v : vectors) {
        if (v.values.rank() != 1 || static_cast<int>(v.values.size()) != dim)
            throw std::invalid_argument("feature vector dimension mismatch for source " +
                                        std::to_string(v.source_id));
        if (!v.values.all_finite())
            throw std::invalid_argument("non-finite feature for source " +
                                        std::to_string(v.source_id));
        if (!ids.insert(v.source_id).second)
            throw std::invalid_argument("duplicate source id " + std::to_string(v.source_id));
    }
}

std::vector<int> FeatureSet::trusted_classes() const {
    std::set<int> cls;
    for (const auto& v : vectors)
        if (v.trusted_label) cls.insert(*v.trusted_label);
    return {cls.begin(), cls.end()};
}

std::string extractor_kind_name(ExtractorKind k) {
    switch (k) {
        case ExtractorKind::identity: return "identity";
        case ExtractorKind::random_projection: return "random-projection";
        case ExtractorKind::conv_encoder: return "conv-encoder";
    }
    return "identity";
}

ExtractorKind extractor_kind_from_name(const std::string& s) {
    if (s == "identity") return ExtractorKind::identity;
    if (s == "random-projection" || s == "random_projection") return ExtractorKind::random_projection;
    if (s == "conv-encoder" || s == "conv_encoder") return ExtractorKind::conv_encoder;
    throw std::invalid_argument("unknown extractor kind: " + s);
}

void ExtractorConfig::validate() const {
    if (output_dim <= 0) throw std::invalid_argument("extractor output_dim must be positive");
    if (kind == ExtractorKind::random_projection && input_dim <= 0)
        throw std::invalid_argument("random-projection extractor needs input_dim");
    if (kind == ExtractorKind::conv_encoder) {
        if (conv_layers.empty())
            throw std::invalid_argument("conv-encoder needs at least one conv layer");
        if (in_h <= 0 || in_w <= 0 || in_c <= 0)
            throw std::invalid_argument("conv-encoder needs input geometry (in_h, in_w, in_c)");
        const int d = conv_encoder_output_dim(*this);
        if (d != output_dim)
            throw std::invalid_argument("conv-encoder flattened dim " + std::to_string(d) +
                                        " != configured output_dim " + std::to_string(output_dim));
    }
}

std::uint64_t ExtractorConfig::hash() const {
    std::ostringstream os;
    os << extractor_kind_name(kind) << "|" << output_dim << "|" << seed << "|" << in_h << "x"
       << in_w << "x" << in_c << "|" << input_dim << "|" << standardize;
    for (const auto& l : conv_layers) os << "|" << l.filters << "x" << l.kernel;
    return fnv1a(os.str());
}

NetworkSpec ExtractorConfig::conv_spec() const {
    NetworkSpec spec;
    int h = in_h, w = in_w, c = in_c;
    for (const auto& l : conv_layers) {
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
    spec.validate();
    return spec;
}

int conv_encoder_output_dim(const ExtractorConfig& cfg) {
    int h = cfg.in_h, w = cfg.in_w;
    int c = cfg.in_c;
    for (const auto& l : cfg.conv_layers) {
        h = h - l.kernel + 1;
        w = w - l.kernel + 1;
        c = l.filters;
        if (h <= 0 || w <= 0)
            throw std::invalid_argument("conv-encoder kernel exceeds input size");
    }
    return h * w * c;
}

ParameterSet init_extractor_params(const ExtractorConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case ExtractorKind::identity: {
            ParameterSet p;
            p.set_seed(cfg.seed);
            return p;
        }
        case ExtractorKind::random_projection: {
            ParameterSet p;
            p.set_seed(cfg.seed);
            Rng rng(sub_seed(cfg.seed, "projection"));
            Tensor w = Tensor::zeros({cfg.input_dim, cfg.output_dim});
            const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.output_dim));
            for (auto& v : w.data) v = static_cast<real_t>(rng.normal() * scale);
            p.add_entry("projection", std::move(w), Tensor::zeros({cfg.output_dim}));
            return p;
        }
        case ExtractorKind::conv_encoder:
            return init_params(cfg.conv_spec(), cfg.seed, InitScheme::kaiming_uniform);
    }
    throw std::logic_error("unreachable");
}

FeatureVector extract(const Tensor& raw, const ExtractorConfig& cfg, const ParameterSet& params) {
    cfg.validate();
    FeatureVector out;
    switch (cfg.kind) {
        case ExtractorKind::identity: {
            Tensor flat = raw.flattened();
            if (static_cast<int>(flat.size()) != cfg.output_dim)
                throw std::invalid_argument("identity extractor: input size " +
                                            std::to_string(flat.size()) + " != output_dim " +
                                            std::to_string(cfg.output_dim));
            out.values = std::move(flat);
            break;
        }
        case ExtractorKind::random_projection: {
            Tensor flat = raw.flattened();
            if (static_cast<int>(flat.size()) != cfg.input_dim)
                throw std::invalid_argument("random-projection: input size " +
                                            std::to_string(flat.size()) + " != input_dim " +
                                            std::to_string(cfg.input_dim));
            const Tensor& w = params.at("projection").weights;
            Tensor z = Tensor::zeros({cfg.output_dim});
            for (int i = 0; i < cfg.input_dim; ++i) {
                const double x = flat.at1(i);
                if (x == 0.0) continue;
                const std::size_t row = static_cast<std::size_t>(i) * cfg.output_dim;
                for (int j = 0; j < cfg.output_dim; ++j)
                    z.data[static_cast<std::size_t>(j)] += static_cast<real_t>(x * w.data[row + j]);
            }
            out.values = std::move(z);
            break;
        }
        case ExtractorKind::conv_encoder: {
            Tensor flat = raw.flattened();
            const NetworkSpec spec = cfg.conv_spec();
            if (static_cast<int>(flat.size()) != spec.input_dim())
                throw std::invalid_argument("conv-encoder: input size " +
                                            std::to_string(flat.size()) + " != expected " +
                                            std::to_string(spec.input_dim()));
            out.values = net_forward(spec, params, flat);
            break;
        }
    }
    if (!out.values.all_finite()) throw std::runtime_error("extractor produced non-finite values");
    return out;
}

FeatureSet extract_set(const std::vector<Tensor>& raws, const ExtractorConfig& cfg,
                       const ParameterSet& params,
                       const std::vector<std::optional<int>>& trusted_labels, int threads) {
    if (raws.empty()) throw std::invalid_argument("extract_set: empty dataset");
    if (!trusted_labels.empty() && trusted_labels.size() != raws.size())
        throw std::invalid_argument("extract_set: label list length mismatch");
    FeatureSet fs;
    fs.dim = cfg.output_dim;
    fs.provenance = cfg.hash();
    fs.vectors.resize(raws.size());
    std::vector<std::string> errors(raws.size());
    parallel_for(static_cast<int>(raws.size()), threads, [&](int i) {
        try {
            FeatureVector v = extract(raws[static_cast<std::size_t>(i)], cfg, params);
            v.source_id = i;
            if (!trusted_labels.empty()) v.trusted_label = trusted_labels[static_cast<std::size_t>(i)];
            fs.vectors[static_cast<std::size_t>(i)] = std::move(v);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    });
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw std::runtime_error("extract_set failed at sample " + std::to_string(i) + ": " +
                                     errors[i]);
    if (cfg.standardize) {
        // per-feature standardization over the set; constant dims left as 0
        for (int j = 0; j < fs.dim; ++j) {
            double mean = 0.0;
            for (const auto& v : fs.vectors) mean += v.values.at1(j);
            mean /= fs.n();
            double var = 0.0;
            for (const auto& v : fs.vectors) {
                const double d = v.values.at1(j) - mean;
                var += d * d;
            }
            var /= fs.n();
            const double sd = std::sqrt(var);
            for (auto& v : fs.vectors)
                v.values.ref1(j) = static_cast<real_t>(sd > 0.0 ? (v.values.at1(j) - mean) / sd : 0.0);
        }
    }
    fs.validate();
    return fs;
}

void save_featureset_csv(const std::string& path, const FeatureSet& fs) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << "source_id,label";
    for (int j = 0; j < fs.dim; ++j) os << ",f" << j;
    os << "\n";
    for (const auto& v : fs.vectors) {
        os << v.source_id << ",";
        if (v.trusted_label) os << *v.trusted_label;
        for (int j = 0; j < fs.dim; ++j) os << "," << fmt_double(v.values.at1(j));
        os << "\n";
    }
}

FeatureSet load_featureset_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty feature CSV: " + path);
    int dim = -1;
    FeatureSet fs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        // a trailing empty label cell is swallowed by getline; recover it
        if (dim >= 0 && static_cast<int>(cells.size()) == dim + 1)
            cells.insert(cells.begin() + 1, "");
        if (cells.size() < 3) throw std::runtime_error("bad feature CSV row: " + line);
        FeatureVector v;
        v.source_id = std::stoi(cells[0]);
        if (!cells[1].empty()) v.trusted_label = std::stoi(cells[1]);
        std::vector<double> vals;
        for (std::size_t i = 2; i < cells.size(); ++i) vals.push_back(std::stod(cells[i]));
        if (dim < 0) dim = static_cast<int>(vals.size());
        v.values = Tensor::vec(std::move(vals));
        fs.vectors.push_back(std::move(v));
    }
    fs.dim = dim < 0 ? 0 : dim;
    fs.validate();
    return fs;
}

void save_featureset_bin(const std::string& path, const FeatureSet& fs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    Tensor values = Tensor::zeros({fs.n(), fs.dim});
    Tensor ids = Tensor::zeros({fs.n()});
    Tensor labels = Tensor::full({fs.n()}, -1.0);
    for (int i = 0; i < fs.n(); ++i) {
        const auto& v = fs.vectors[static_cast<std::size_t>(i)];
        for (int j = 0; j < fs.dim; ++j) values.ref2(i, j) = static_cast<real_t>(v.values.at1(j));
        ids.ref1(i) = static_cast<real_t>(v.source_id);
        if (v.trusted_label) labels.ref1(i) = static_cast<real_t>(*v.trusted_label);
    }
    save_tensor(os, values);
    save_tensor(os, ids);
    save_tensor(os, labels);
}

FeatureSet load_featureset_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    Tensor values = load_tensor(is);
    Tensor ids = load_tensor(is);
    Tensor labels = load_tensor(is);
    if (values.rank() != 2 || ids.rank() != 1 || labels.rank() != 1 ||
        ids.shape[0] != values.shape[0] || labels.shape[0] != values.shape[0])
        throw std::runtime_error("inconsistent feature binary: " + path);
    FeatureSet fs;
    fs.dim = values.shape[1];
    for (int i = 0; i < values.shape[0]; ++i) {
        FeatureVector v;
        v.source_id = static_cast<int>(ids.at1(i));
        std::vector<double> row(static_cast<std::size_t>(fs.dim));
        for (int j = 0; j < fs.dim; ++j) row[static_cast<std::size_t>(j)] = values.at2(i, j);
        v.values = Tensor::vec(std::move(row));
        const int lbl = static_cast<int>(labels.at1(i));
        if (lbl >= 0) v.trusted_label = lbl;
        fs.vectors.push_back(std::move(v));
    }
    fs.validate();
    return fs;
}

std::pair<Tensor, Tensor> minmax_bounds(const FeatureSet& fs) {
    if (fs.vectors.empty()) throw std::invalid_argument("minmax_bounds: empty feature set");
    Tensor lo = fs.vectors[0].values;
    Tensor hi = fs.vectors[0].values;
    for (const auto& v : fs.vectors) {
        for (int j = 0; j < fs.dim; ++j) {
            lo.ref1(j) = static_cast<real_t>(std::min(lo.at1(j), v.values.at1(j)));
            hi.ref1(j) = static_cast<real_t>(std::max(hi.at1(j), v.values.at1(j)));
        }
    }
    return {lo, hi};
}

double euclidean(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("euclidean distance shape mismatch: " + a.shape_str() +
                                    " vs " + b.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace dfcp
