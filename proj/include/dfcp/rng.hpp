#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace dfcp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derives an independent stream seed from a master seed and a stage tag.
/// Every random choice in the library goes through a tagged stream so that
/// stages can be re-run in isolation with identical results.
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag) {
    return splitmix64(seed ^ fnv1a(tag));
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    return splitmix64(sub_seed(seed, tag) ^ splitmix64(index + 0x9E3779B97F4A7C15ULL));
}

/// mt19937_64 with hand-rolled distributions. The standard specifies the
/// engine's output sequence but not the library distributions, so uniform
/// and normal draws are implemented here to keep results identical across
/// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Inclusive integer range.
    int uniform_int(int lo, int hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    /// Standard normal via Box-Muller, caching the second value.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(v.size()) - 1))];
    }

    /// count indices drawn uniformly with replacement from [0, n).
    std::vector<int> sample_with_replacement(int n, int count) {
        std::vector<int> out(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = uniform_int(0, n - 1);
        return out;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(0, i);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dfcp
