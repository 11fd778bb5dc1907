#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dfcp {

#ifdef DFCP_REAL32
using real_t = float;
#else
using real_t = double;
#endif

/// Dense row-major numeric array of rank 1..4. All public operations keep
/// elements finite; a NaN/Inf result is an error state the caller must not
/// silently propagate.
struct Tensor {
    std::vector<int> shape;
    std::vector<real_t> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from(std::vector<int> shape, std::vector<double> values);
    static Tensor vec(std::vector<double> values);

    int rank() const { return static_cast<int>(shape.size()); }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    double at1(int i) const;
    real_t& ref1(int i);
    double at2(int i, int j) const;
    real_t& ref2(int i, int j);
    double at3(int i, int j, int k) const;
    real_t& ref3(int i, int j, int k);
    double at4(int i, int j, int k, int l) const;
    real_t& ref4(int i, int j, int k, int l);

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    std::string shape_str() const;

    /// Row-major flatten to rank 1; data is shared by copy.
    Tensor flattened() const;
};

std::string shape_to_string(const std::vector<int>& shape);

/// Standard matrix product of two rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid (no padding) stride-1 convolution of an HxWxC input with FxFxC
/// filters; output is H'xW'xL with H' = H-F+1, W' = W-F+1. No pooling is
/// applied anywhere in this library.
Tensor conv2d_forward(const Tensor& input, const std::vector<Tensor>& filters,
                      const std::vector<double>& bias);

// --- serialization ------------------------------------------------------
// Format: magic "DFMT", version u32, rank u8, extents u32[rank], then the
// elements as little-endian IEEE-754 f64.

void save_tensor(std::ostream& os, const Tensor& t);
Tensor load_tensor(std::istream& is);
void save_tensor_file(const std::string& path, const Tensor& t);
Tensor load_tensor_file(const std::string& path);

// little-endian scalar helpers shared by the checkpoint format
void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
void write_string(std::ostream& os, const std::string& s);
std::string read_string(std::istream& is);

}  // namespace dfcp
