#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dfcp/tensor.hpp"

namespace dfcp {

struct ParamEntry {
    std::string name;
    Tensor weights;
    Tensor bias;
};

/// Named map of layer parameters. Entry names are unique, shapes are fixed
/// at creation, and building twice from the same seed and architecture gives
/// bitwise-identical contents.
class ParameterSet {
public:
    ParameterSet() = default;

    void add_entry(std::string name, Tensor weights, Tensor bias);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const ParamEntry& entry(std::size_t i) const { return entries_[i]; }
    ParamEntry& entry(std::size_t i) { return entries_[i]; }
    int find(const std::string& name) const;
    const ParamEntry& at(const std::string& name) const;

    std::uint64_t seed() const { return seed_; }
    void set_seed(std::uint64_t s) { seed_ = s; }

    /// Zero-filled set with the same entry names and shapes.
    static ParameterSet zeros_like(const ParameterSet& other);

    std::size_t coord_count() const;
    double get_coord(std::size_t i) const;
    void set_coord(std::size_t i, double v);
    void add_coord(std::size_t i, double delta);

    bool same_shapes(const ParameterSet& other) const;
    bool bitwise_equal(const ParameterSet& other) const;
    bool all_finite() const;
    /// Name of the first entry holding a non-finite value, or empty string.
    std::string first_non_finite() const;

private:
    std::vector<ParamEntry> entries_;
    std::uint64_t seed_ = 0;
};

void save_params(std::ostream& os, const ParameterSet& p);
ParameterSet load_params(std::istream& is);

}  // namespace dfcp
