#include "dfcp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dfcp/rng.hpp"

namespace dfcp {

void SyntheticSpec::validate() const {
    if (classes < 2) throw std::invalid_argument("synthetic data needs >= 2 classes");
    if (samples_per_class < 4) throw std::invalid_argument("synthetic data needs >= 4 samples per class");
    if (spread <= 0.0) throw std::invalid_argument("synthetic spread must be positive");
    if (separation <= 0.0) throw std::invalid_argument("synthetic separation must be positive");
    if (imbalance < 1.0) throw std::invalid_argument("synthetic imbalance ratio must be >= 1");
    if (dim < classes)
        throw std::invalid_argument("synthetic dim must be >= classes (simplex mean placement)");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Dataset data;
    data.classes = spec.classes;
    data.dim = spec.dim;
    // regular simplex: mean_c = (separation / sqrt(2)) * e_c, giving every
    // pair of class means the same distance `separation`
    const double coord = spec.separation / std::sqrt(2.0);
    Rng rng(sub_seed(spec.seed, "synthetic"));
    for (int c = 0; c < spec.classes; ++c) {
        // geometric size ramp from samples_per_class down by the imbalance ratio
        const double frac = spec.classes > 1 ? static_cast<double>(c) / (spec.classes - 1) : 0.0;
        const int n_c = std::max(
            4, static_cast<int>(std::llround(spec.samples_per_class *
                                             std::pow(1.0 / spec.imbalance, frac))));
        for (int i = 0; i < n_c; ++i) {
            Tensor x = Tensor::zeros({spec.dim});
            for (int j = 0; j < spec.dim; ++j)
                x.ref1(j) = static_cast<real_t>((j == c ? coord : 0.0) +
                                                spec.spread * rng.normal());
            data.x.push_back(std::move(x));
            data.y.push_back(c);
        }
    }
    return data;
}

Dataset load_csv_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    Dataset data;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            first = false;
            try {
                (void)std::stod(cells.at(0));
            } catch (...) {
                continue;  // header line
            }
        }
        if (cells.size() < 2) throw std::runtime_error("bad dataset row: " + line);
        data.y.push_back(std::stoi(cells[0]));
        std::vector<double> vals;
        for (std::size_t i = 1; i < cells.size(); ++i) vals.push_back(std::stod(cells[i]));
        if (data.dim == 0) data.dim = static_cast<int>(vals.size());
        else if (data.dim != static_cast<int>(vals.size()))
            throw std::runtime_error("ragged dataset row: " + line);
        data.x.push_back(Tensor::vec(std::move(vals)));
    }
    if (data.x.empty()) throw std::runtime_error("empty dataset: " + path);
    int max_label = 0;
    for (int y : data.y) {
        if (y < 0) throw std::runtime_error("negative label in " + path);
        max_label = std::max(max_label, y);
    }
    data.classes = max_label + 1;
    return data;
}

Dataset load_image_dir(const std::string& manifest, int height, int width, int channels) {
    if (height <= 0 || width <= 0 || channels <= 0)
        throw std::invalid_argument("image geometry must be positive");
    std::ifstream is(manifest);
    if (!is) throw std::runtime_error("cannot open " + manifest);
    const std::filesystem::path base = std::filesystem::path(manifest).parent_path();
    Dataset data;
    data.dim = height * width * channels;
    std::string line;
    bool first = true;
    const std::size_t bytes = static_cast<std::size_t>(data.dim);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("bad manifest row: " + line);
        const std::string rel = line.substr(0, comma);
        const std::string lbl = line.substr(comma + 1);
        if (first) {
            first = false;
            if (rel == "path") continue;  // header
        }
        std::ifstream img(base / rel, std::ios::binary);
        if (!img) throw std::runtime_error("cannot open image " + (base / rel).string());
        std::vector<char> buf(bytes);
        if (!img.read(buf.data(), static_cast<std::streamsize>(bytes)))
            throw std::runtime_error("image " + rel + " shorter than " + std::to_string(bytes) +
                                     " bytes");
        Tensor x = Tensor::zeros({height, width, channels});
        for (std::size_t i = 0; i < bytes; ++i)
            x.data[i] = static_cast<real_t>(static_cast<unsigned char>(buf[i]) / 255.0);
        data.x.push_back(std::move(x));
        data.y.push_back(std::stoi(lbl));
    }
    if (data.x.empty()) throw std::runtime_error("empty manifest: " + manifest);
    int max_label = 0;
    for (int y : data.y) max_label = std::max(max_label, y);
    data.classes = max_label + 1;
    return data;
}

SplitIdx stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("test fraction must be in (0, 1)");
    std::map<int, std::vector<int>> per_class;
    for (int i = 0; i < data.n(); ++i) per_class[data.y[static_cast<std::size_t>(i)]].push_back(i);
    SplitIdx split;
    Rng rng(sub_seed(seed, "split"));
    for (auto& [cls, rows] : per_class) {
        rng.shuffle(rows);
        const int n_test = std::max(1, static_cast<int>(std::llround(test_fraction * rows.size())));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (static_cast<int>(i) < n_test) split.test.push_back(rows[i]);
            else split.train.push_back(rows[i]);
        }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

std::vector<int> stratified_subset(const Dataset& data, const std::vector<int>& from,
                                   double fraction, int min_per_class, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("trusted fraction must be in (0, 1)");
    std::map<int, std::vector<int>> per_class;
    for (int i : from) per_class[data.y[static_cast<std::size_t>(i)]].push_back(i);
    std::vector<int> picked;
    Rng rng(sub_seed(seed, "trusted"));
    for (auto& [cls, rows] : per_class) {
        rng.shuffle(rows);
        int n_pick = std::max(min_per_class, static_cast<int>(std::llround(fraction * rows.size())));
        n_pick = std::min(n_pick, static_cast<int>(rows.size()));
        for (int i = 0; i < n_pick; ++i) picked.push_back(rows[static_cast<std::size_t>(i)]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

}  // namespace dfcp
