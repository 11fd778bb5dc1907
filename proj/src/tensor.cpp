#include "dfcp/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfcp {

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 4)
        throw std::invalid_argument("tensor rank must be 1..4, got rank " +
                                    std::to_string(shape.size()));
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0)
            throw std::invalid_argument("tensor extents must be positive, got shape " +
                                        shape_to_string(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    std::size_t n = checked_size(shape);
    t.shape = std::move(shape);
    t.data.assign(n, real_t(0));
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.data) v = static_cast<real_t>(value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    std::size_t n = checked_size(shape);
    if (n != values.size())
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_to_string(shape));
    Tensor t;
    t.shape = std::move(shape);
    t.data.reserve(n);
    for (double v : values) t.data.push_back(static_cast<real_t>(v));
    return t;
}

Tensor Tensor::vec(std::vector<double> values) {
    return from({static_cast<int>(values.size())}, std::move(values));
}

double Tensor::at1(int i) const { return data[static_cast<std::size_t>(i)]; }
real_t& Tensor::ref1(int i) { return data[static_cast<std::size_t>(i)]; }
double Tensor::at2(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
}
real_t& Tensor::ref2(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
}
double Tensor::at3(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}
real_t& Tensor::ref3(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}
double Tensor::at4(int i, int j, int k, int l) const {
    return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
}
real_t& Tensor::ref4(int i, int j, int k, int l) {
    return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
}

bool Tensor::all_finite() const {
    for (real_t v : data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

Tensor Tensor::flattened() const {
    Tensor t;
    t.shape = {static_cast<int>(data.size())};
    t.data = data;
    return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul expects rank-2 tensors, got " + a.shape_str() +
                                    " and " + b.shape_str());
    if (a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul dimension mismatch: " + a.shape_str() + " x " +
                                    b.shape_str());
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a.data[static_cast<std::size_t>(i) * k + p];
            const std::size_t brow = static_cast<std::size_t>(p) * n;
            const std::size_t crow = static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j)
                c.data[crow + j] += static_cast<real_t>(av * b.data[brow + j]);
        }
    }
    return c;
}

Tensor conv2d_forward(const Tensor& input, const std::vector<Tensor>& filters,
                      const std::vector<double>& bias) {
    if (input.rank() != 3)
        throw std::invalid_argument("conv2d expects an HxWxC input, got " + input.shape_str());
    if (filters.empty()) throw std::invalid_argument("conv2d needs at least one filter");
    if (bias.size() != filters.size())
        throw std::invalid_argument("conv2d bias count " + std::to_string(bias.size()) +
                                    " != filter count " + std::to_string(filters.size()));
    const int h = input.shape[0], w = input.shape[1], c = input.shape[2];
    const int f = filters[0].shape[0];
    for (const Tensor& k : filters) {
        if (k.rank() != 3 || k.shape[0] != f || k.shape[1] != f)
            throw std::invalid_argument("conv2d filter must be FxFxC, got " + k.shape_str());
        if (k.shape[2] != c)
            throw std::invalid_argument("conv2d filter depth " + std::to_string(k.shape[2]) +
                                        " != input channels " + std::to_string(c));
    }
    if (f > h || f > w)
        throw std::invalid_argument("conv2d filter " + std::to_string(f) +
                                    " larger than input " + input.shape_str());
    const int oh = h - f + 1, ow = w - f + 1;
    const int l = static_cast<int>(filters.size());
    Tensor out = Tensor::zeros({oh, ow, l});
    for (int k = 0; k < l; ++k) {
        const Tensor& flt = filters[k];
        for (int a = 0; a < oh; ++a) {
            for (int q = 0; q < ow; ++q) {
                double acc = bias[k];
                for (int ci = 0; ci < c; ++ci)
                    for (int fa = 0; fa < f; ++fa)
                        for (int fq = 0; fq < f; ++fq)
                            acc += input.at3(a + fa, q + fq, ci) * flt.at3(fa, fq, ci);
                out.ref3(a, q, k) = acc;
            }
        }
    }
    if (!out.all_finite()) throw std::runtime_error("conv2d produced a non-finite value");
    return out;
}

// --- serialization ------------------------------------------------------

void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b, 8);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

std::uint8_t read_u8(std::istream& is) {
    int c = is.get();
    if (c < 0) throw std::runtime_error("unexpected end of stream");
    return static_cast<std::uint8_t>(c);
}

std::uint32_t read_u32(std::istream& is) {
    char b[4];
    if (!is.read(b, 4)) throw std::runtime_error("unexpected end of stream");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    char b[8];
    if (!is.read(b, 8)) throw std::runtime_error("unexpected end of stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw std::runtime_error("unexpected end of stream");
    return s;
}

static constexpr char kTensorMagic[4] = {'D', 'F', 'M', 'T'};
static constexpr std::uint32_t kTensorVersion = 1;

void save_tensor(std::ostream& os, const Tensor& t) {
    os.write(kTensorMagic, 4);
    write_u32(os, kTensorVersion);
    write_u8(os, static_cast<std::uint8_t>(t.rank()));
    for (int e : t.shape) write_u32(os, static_cast<std::uint32_t>(e));
    for (real_t v : t.data) write_f64(os, static_cast<double>(v));
}

Tensor load_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw std::runtime_error("bad tensor magic (expected DFMT)");
    std::uint32_t version = read_u32(is);
    if (version != kTensorVersion)
        throw std::runtime_error("unsupported tensor version " + std::to_string(version));
    int rank = read_u8(is);
    if (rank < 1 || rank > 4) throw std::runtime_error("bad tensor rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    for (int i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u32(is));
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = static_cast<real_t>(read_f64(is));
    return t;
}

void save_tensor_file(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    save_tensor(os, t);
}

Tensor load_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load_tensor(is);
}

}  // namespace dfcp
