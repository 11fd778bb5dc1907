#include "dfcp/parameter_set.hpp"

#include <stdexcept>

namespace dfcp {

void ParameterSet::add_entry(std::string name, Tensor weights, Tensor bias) {
    if (find(name) >= 0) throw std::invalid_argument("duplicate parameter entry: " + name);
    entries_.push_back({std::move(name), std::move(weights), std::move(bias)});
}

int ParameterSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
}

const ParamEntry& ParameterSet::at(const std::string& name) const {
    int i = find(name);
    if (i < 0) throw std::out_of_range("no parameter entry named " + name);
    return entries_[static_cast<std::size_t>(i)];
}

ParameterSet ParameterSet::zeros_like(const ParameterSet& other) {
    ParameterSet p;
    p.seed_ = other.seed_;
    for (const auto& e : other.entries_)
        p.entries_.push_back({e.name, Tensor::zeros(e.weights.shape), Tensor::zeros(e.bias.shape)});
    return p;
}

std::size_t ParameterSet::coord_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.weights.size() + e.bias.size();
    return n;
}

namespace {
// Flat coordinate order: entries in insertion order, weights then bias.
std::pair<const Tensor*, std::size_t> locate(const std::vector<ParamEntry>& entries,
                                             std::size_t i) {
    for (const auto& e : entries) {
        if (i < e.weights.size()) return {&e.weights, i};
        i -= e.weights.size();
        if (i < e.bias.size()) return {&e.bias, i};
        i -= e.bias.size();
    }
    throw std::out_of_range("parameter coordinate out of range");
}
}  // namespace

double ParameterSet::get_coord(std::size_t i) const {
    auto [t, off] = locate(entries_, i);
    return static_cast<double>(t->data[off]);
}

void ParameterSet::set_coord(std::size_t i, double v) {
    auto [t, off] = locate(entries_, i);
    const_cast<Tensor*>(t)->data[off] = static_cast<real_t>(v);
}

void ParameterSet::add_coord(std::size_t i, double delta) {
    auto [t, off] = locate(entries_, i);
    const_cast<Tensor*>(t)->data[off] += static_cast<real_t>(delta);
}

bool ParameterSet::same_shapes(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name) return false;
        if (!entries_[i].weights.same_shape(other.entries_[i].weights)) return false;
        if (!entries_[i].bias.same_shape(other.entries_[i].bias)) return false;
    }
    return true;
}

bool ParameterSet::bitwise_equal(const ParameterSet& other) const {
    if (!same_shapes(other)) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].weights.data != other.entries_[i].weights.data) return false;
        if (entries_[i].bias.data != other.entries_[i].bias.data) return false;
    }
    return true;
}

bool ParameterSet::all_finite() const { return first_non_finite().empty(); }

std::string ParameterSet::first_non_finite() const {
    for (const auto& e : entries_)
        if (!e.weights.all_finite() || !e.bias.all_finite()) return e.name;
    return "";
}

void save_params(std::ostream& os, const ParameterSet& p) {
    write_u64(os, p.seed());
    write_u32(os, static_cast<std::uint32_t>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& e = p.entry(i);
        write_string(os, e.name);
        save_tensor(os, e.weights);
        save_tensor(os, e.bias);
    }
}

ParameterSet load_params(std::istream& is) {
    ParameterSet p;
    p.set_seed(read_u64(is));
    std::uint32_t n = read_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = read_string(is);
        Tensor w = load_tensor(is);
        Tensor b = load_tensor(is);
        p.add_entry(std::move(name), std::move(w), std::move(b));
    }
    return p;
}

}  // namespace dfcp
