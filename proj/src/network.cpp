#include "dfcp/network.hpp"

#include <cmath>
#include <stdexcept>

#include "dfcp/rng.hpp"

namespace dfcp {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh_fn: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation activation_from_name(const std::string& s) {
    if (s == "identity" || s == "none") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "sigmoid") return Activation::sigmoid;
    throw std::invalid_argument("unknown activation: " + s);
}

namespace {

double apply_act(Activation a, double v) {
    switch (a) {
        case Activation::identity: return v;
        case Activation::relu: return v > 0.0 ? v : 0.0;
        case Activation::tanh_fn: return std::tanh(v);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    }
    return v;
}

// derivative as a function of the pre-activation value
double act_grad(Activation a, double pre) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::tanh_fn: {
            double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            double s = 1.0 / (1.0 + std::exp(-pre));
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

Activation layer_act(const LayerSpec& l) {
    if (auto* d = std::get_if<DenseLayer>(&l)) return d->act;
    if (auto* c = std::get_if<Conv2dLayer>(&l)) return c->act;
    return std::get<BlockSumDenseLayer>(l).act;
}

}  // namespace

int layer_input_dim(const LayerSpec& l) {
    if (auto* d = std::get_if<DenseLayer>(&l)) return d->in;
    if (auto* c = std::get_if<Conv2dLayer>(&l)) return c->in_h * c->in_w * c->in_c;
    return std::get<BlockSumDenseLayer>(l).in;
}

int layer_output_dim(const LayerSpec& l) {
    if (auto* d = std::get_if<DenseLayer>(&l)) return d->out;
    if (auto* c = std::get_if<Conv2dLayer>(&l)) {
        int oh = c->in_h - c->kernel + 1;
        int ow = c->in_w - c->kernel + 1;
        return oh * ow * c->filters;
    }
    return std::get<BlockSumDenseLayer>(l).out;
}

int NetworkSpec::input_dim() const {
    if (layers.empty()) throw std::invalid_argument("empty network spec");
    return layer_input_dim(layers.front());
}

int NetworkSpec::output_dim() const {
    if (layers.empty()) throw std::invalid_argument("empty network spec");
    return layer_output_dim(layers.back());
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw std::invalid_argument("empty network spec");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (auto* c = std::get_if<Conv2dLayer>(&l)) {
            if (c->in_h <= 0 || c->in_w <= 0 || c->in_c <= 0 || c->filters <= 0 || c->kernel <= 0)
                throw std::invalid_argument("conv layer " + std::to_string(i) +
                                            " has non-positive dimensions");
            if (c->kernel > c->in_h || c->kernel > c->in_w)
                throw std::invalid_argument("conv layer " + std::to_string(i) +
                                            " kernel larger than input");
        } else if (auto* b = std::get_if<BlockSumDenseLayer>(&l)) {
            if (b->in <= 0 || b->out <= 0 || b->partitions <= 0)
                throw std::invalid_argument("block-sum layer " + std::to_string(i) +
                                            " has non-positive dimensions");
            if (b->in % b->partitions != 0)
                throw std::invalid_argument("block-sum layer " + std::to_string(i) + " input " +
                                            std::to_string(b->in) + " not divisible by " +
                                            std::to_string(b->partitions) + " partitions");
        } else {
            auto& d = std::get<DenseLayer>(l);
            if (d.in <= 0 || d.out <= 0)
                throw std::invalid_argument("dense layer " + std::to_string(i) +
                                            " has non-positive dimensions");
        }
        if (i > 0 && layer_input_dim(l) != layer_output_dim(layers[i - 1]))
            throw std::invalid_argument(
                "layer " + std::to_string(i) + " input dim " +
                std::to_string(layer_input_dim(l)) + " != previous output dim " +
                std::to_string(layer_output_dim(layers[i - 1])));
    }
}

ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed, InitScheme scheme) {
    spec.validate();
    ParameterSet p;
    p.set_seed(seed);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        Rng rng(sub_seed(seed, "layer", i));
        const LayerSpec& l = spec.layers[i];
        Tensor w, b;
        if (auto* d = std::get_if<DenseLayer>(&l)) {
            w = Tensor::zeros({d->in, d->out});
            b = Tensor::zeros({d->out});
            const double fan_in = d->in, fan_out = d->out;
            if (scheme == InitScheme::xavier_normal) {
                const double sd = std::sqrt(2.0 / (fan_in + fan_out));
                for (auto& v : w.data) v = static_cast<real_t>(rng.normal(0.0, sd));
            } else {
                const double bound = std::sqrt(6.0 / fan_in);
                for (auto& v : w.data) v = static_cast<real_t>(rng.uniform(-bound, bound));
            }
        } else if (auto* c = std::get_if<Conv2dLayer>(&l)) {
            w = Tensor::zeros({c->filters, c->kernel, c->kernel, c->in_c});
            b = Tensor::zeros({c->filters});
            const double fan_in = static_cast<double>(c->kernel) * c->kernel * c->in_c;
            const double fan_out = static_cast<double>(c->kernel) * c->kernel * c->filters;
            if (scheme == InitScheme::xavier_normal) {
                const double sd = std::sqrt(2.0 / (fan_in + fan_out));
                for (auto& v : w.data) v = static_cast<real_t>(rng.normal(0.0, sd));
            } else {
                const double bound = std::sqrt(6.0 / fan_in);
                for (auto& v : w.data) v = static_cast<real_t>(rng.uniform(-bound, bound));
            }
        } else {
            auto& bs = std::get<BlockSumDenseLayer>(l);
            const int block = bs.in / bs.partitions;
            w = Tensor::zeros({block, bs.out});
            b = Tensor::zeros({bs.out});
            const double fan_in = bs.in, fan_out = bs.out;
            if (scheme == InitScheme::xavier_normal) {
                const double sd = std::sqrt(2.0 / (fan_in + fan_out));
                for (auto& v : w.data) v = static_cast<real_t>(rng.normal(0.0, sd));
            } else {
                const double bound = std::sqrt(6.0 / fan_in);
                for (auto& v : w.data) v = static_cast<real_t>(rng.uniform(-bound, bound));
            }
        }
        p.add_entry("layer" + std::to_string(i), std::move(w), std::move(b));
    }
    return p;
}

namespace {

void check_input(const NetworkSpec& spec, const Tensor& x) {
    if (x.rank() != 1)
        throw std::invalid_argument("network input must be rank-1, got " + x.shape_str());
    if (static_cast<int>(x.size()) != spec.input_dim())
        throw std::invalid_argument("network input dim " + std::to_string(x.size()) +
                                    " != spec input dim " + std::to_string(spec.input_dim()));
}

// pre-activation forward of one layer on a flat input
Tensor layer_linear_forward(const LayerSpec& l, const ParamEntry& e, const Tensor& x) {
    if (auto* d = std::get_if<DenseLayer>(&l)) {
        Tensor out = Tensor::zeros({d->out});
        for (int i = 0; i < d->in; ++i) {
            const double xv = x.data[static_cast<std::size_t>(i)];
            if (xv == 0.0) continue;
            const std::size_t row = static_cast<std::size_t>(i) * d->out;
            for (int j = 0; j < d->out; ++j)
                out.data[static_cast<std::size_t>(j)] +=
                    static_cast<real_t>(xv * e.weights.data[row + j]);
        }
        for (int j = 0; j < d->out; ++j) out.data[static_cast<std::size_t>(j)] += e.bias.data[j];
        return out;
    }
    if (auto* c = std::get_if<Conv2dLayer>(&l)) {
        const int oh = c->in_h - c->kernel + 1, ow = c->in_w - c->kernel + 1;
        Tensor out = Tensor::zeros({oh * ow * c->filters});
        for (int k = 0; k < c->filters; ++k) {
            for (int a = 0; a < oh; ++a) {
                for (int q = 0; q < ow; ++q) {
                    double acc = e.bias.data[static_cast<std::size_t>(k)];
                    for (int fa = 0; fa < c->kernel; ++fa)
                        for (int fq = 0; fq < c->kernel; ++fq)
                            for (int ci = 0; ci < c->in_c; ++ci)
                                acc += x.data[(static_cast<std::size_t>(a + fa) * c->in_w +
                                               (q + fq)) * c->in_c + ci] *
                                       e.weights.at4(k, fa, fq, ci);
                    // output laid out as H' x W' x F row-major
                    out.data[(static_cast<std::size_t>(a) * ow + q) * c->filters + k] =
                        static_cast<real_t>(acc);
                }
            }
        }
        return out;
    }
    auto& bs = std::get<BlockSumDenseLayer>(l);
    const int block = bs.in / bs.partitions;
    Tensor out = Tensor::zeros({bs.out});
    for (int p = 0; p < bs.partitions; ++p) {
        const std::size_t base = static_cast<std::size_t>(p) * block;
        for (int i = 0; i < block; ++i) {
            const double xv = x.data[base + i];
            if (xv == 0.0) continue;
            const std::size_t row = static_cast<std::size_t>(i) * bs.out;
            for (int j = 0; j < bs.out; ++j)
                out.data[static_cast<std::size_t>(j)] +=
                    static_cast<real_t>(xv * e.weights.data[row + j]);
        }
    }
    for (int j = 0; j < bs.out; ++j) out.data[static_cast<std::size_t>(j)] += e.bias.data[j];
    return out;
}

void layer_backward(const LayerSpec& l, const ParamEntry& e, const Tensor& input,
                    const Tensor& grad_pre, ParamEntry& grad, Tensor* grad_input) {
    if (auto* d = std::get_if<DenseLayer>(&l)) {
        for (int i = 0; i < d->in; ++i) {
            const double xv = input.data[static_cast<std::size_t>(i)];
            const std::size_t row = static_cast<std::size_t>(i) * d->out;
            for (int j = 0; j < d->out; ++j)
                grad.weights.data[row + j] +=
                    static_cast<real_t>(xv * grad_pre.data[static_cast<std::size_t>(j)]);
        }
        for (int j = 0; j < d->out; ++j)
            grad.bias.data[static_cast<std::size_t>(j)] += grad_pre.data[static_cast<std::size_t>(j)];
        if (grad_input) {
            *grad_input = Tensor::zeros({d->in});
            for (int i = 0; i < d->in; ++i) {
                double acc = 0.0;
                const std::size_t row = static_cast<std::size_t>(i) * d->out;
                for (int j = 0; j < d->out; ++j)
                    acc += e.weights.data[row + j] * grad_pre.data[static_cast<std::size_t>(j)];
                grad_input->data[static_cast<std::size_t>(i)] = static_cast<real_t>(acc);
            }
        }
        return;
    }
    if (auto* c = std::get_if<Conv2dLayer>(&l)) {
        const int oh = c->in_h - c->kernel + 1, ow = c->in_w - c->kernel + 1;
        if (grad_input) *grad_input = Tensor::zeros({c->in_h * c->in_w * c->in_c});
        for (int k = 0; k < c->filters; ++k) {
            for (int a = 0; a < oh; ++a) {
                for (int q = 0; q < ow; ++q) {
                    const double g =
                        grad_pre.data[(static_cast<std::size_t>(a) * ow + q) * c->filters + k];
                    if (g == 0.0) continue;
                    grad.bias.data[static_cast<std::size_t>(k)] += static_cast<real_t>(g);
                    for (int fa = 0; fa < c->kernel; ++fa) {
                        for (int fq = 0; fq < c->kernel; ++fq) {
                            for (int ci = 0; ci < c->in_c; ++ci) {
                                const std::size_t xi =
                                    (static_cast<std::size_t>(a + fa) * c->in_w + (q + fq)) *
                                        c->in_c + ci;
                                grad.weights.ref4(k, fa, fq, ci) +=
                                    static_cast<real_t>(g * input.data[xi]);
                                if (grad_input)
                                    grad_input->data[xi] +=
                                        static_cast<real_t>(g * e.weights.at4(k, fa, fq, ci));
                            }
                        }
                    }
                }
            }
        }
        return;
    }
    auto& bs = std::get<BlockSumDenseLayer>(l);
    const int block = bs.in / bs.partitions;
    if (grad_input) *grad_input = Tensor::zeros({bs.in});
    for (int p = 0; p < bs.partitions; ++p) {
        const std::size_t base = static_cast<std::size_t>(p) * block;
        for (int i = 0; i < block; ++i) {
            const double xv = input.data[base + i];
            const std::size_t row = static_cast<std::size_t>(i) * bs.out;
            double acc = 0.0;
            for (int j = 0; j < bs.out; ++j) {
                const double g = grad_pre.data[static_cast<std::size_t>(j)];
                grad.weights.data[row + j] += static_cast<real_t>(xv * g);
                acc += e.weights.data[row + j] * g;
            }
            if (grad_input) grad_input->data[base + i] = static_cast<real_t>(acc);
        }
    }
    for (int j = 0; j < bs.out; ++j)
        grad.bias.data[static_cast<std::size_t>(j)] += grad_pre.data[static_cast<std::size_t>(j)];
}

}  // namespace

Tensor net_forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& x) {
    check_input(spec, x);
    Tensor cur = x;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        Tensor pre = layer_linear_forward(spec.layers[i], params.entry(i), cur);
        const Activation act = layer_act(spec.layers[i]);
        if (act != Activation::identity)
            for (auto& v : pre.data) v = static_cast<real_t>(apply_act(act, v));
        cur = std::move(pre);
    }
    return cur;
}

NetTrace net_forward_trace(const NetworkSpec& spec, const ParameterSet& params, const Tensor& x) {
    check_input(spec, x);
    NetTrace tr;
    Tensor cur = x;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        tr.inputs.push_back(cur);
        Tensor pre = layer_linear_forward(spec.layers[i], params.entry(i), cur);
        tr.preact.push_back(pre);
        const Activation act = layer_act(spec.layers[i]);
        if (act != Activation::identity)
            for (auto& v : pre.data) v = static_cast<real_t>(apply_act(act, v));
        cur = std::move(pre);
    }
    tr.output = cur;
    return tr;
}

void net_backward(const NetworkSpec& spec, const ParameterSet& params, const NetTrace& trace,
                  const Tensor& grad_out, ParameterSet& grad, Tensor* grad_input) {
    if (!params.same_shapes(grad))
        throw std::invalid_argument("gradient accumulator shapes do not mirror parameters");
    Tensor g = grad_out;
    for (int i = static_cast<int>(spec.layers.size()) - 1; i >= 0; --i) {
        const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
        const Activation act = layer_act(l);
        if (act != Activation::identity) {
            const Tensor& pre = trace.preact[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < g.data.size(); ++j)
                g.data[j] = static_cast<real_t>(g.data[j] * act_grad(act, pre.data[j]));
        }
        Tensor gin;
        const bool need_input = (i > 0) || (grad_input != nullptr);
        layer_backward(l, params.entry(static_cast<std::size_t>(i)),
                       trace.inputs[static_cast<std::size_t>(i)], g,
                       grad.entry(static_cast<std::size_t>(i)), need_input ? &gin : nullptr);
        if (i == 0) {
            if (grad_input) *grad_input = std::move(gin);
        } else {
            g = std::move(gin);
        }
    }
}

std::uint64_t net_flops(const NetworkSpec& spec) {
    std::uint64_t total = 0;
    for (const LayerSpec& l : spec.layers) {
        const std::uint64_t out = static_cast<std::uint64_t>(layer_output_dim(l));
        if (auto* d = std::get_if<DenseLayer>(&l)) {
            total += 2ULL * d->in * d->out + out;
        } else if (auto* c = std::get_if<Conv2dLayer>(&l)) {
            const std::uint64_t per_out = 2ULL * c->kernel * c->kernel * c->in_c;
            total += out * per_out + out;
        } else {
            auto& bs = std::get<BlockSumDenseLayer>(l);
            total += 2ULL * bs.in * bs.out + out;
        }
        if (layer_act(l) != Activation::identity) total += out;
    }
    return total;
}

std::uint64_t net_param_count(const NetworkSpec& spec) {
    std::uint64_t total = 0;
    for (const LayerSpec& l : spec.layers) {
        if (auto* d = std::get_if<DenseLayer>(&l))
            total += static_cast<std::uint64_t>(d->in) * d->out + d->out;
        else if (auto* c = std::get_if<Conv2dLayer>(&l))
            total += static_cast<std::uint64_t>(c->filters) * c->kernel * c->kernel * c->in_c +
                     c->filters;
        else {
            auto& bs = std::get<BlockSumDenseLayer>(l);
            total += static_cast<std::uint64_t>(bs.in / bs.partitions) * bs.out + bs.out;
        }
    }
    return total;
}

std::uint64_t softmax_flops(int n) { return 5ULL * static_cast<std::uint64_t>(n); }

void save_network_spec(std::ostream& os, const NetworkSpec& spec) {
    write_u32(os, static_cast<std::uint32_t>(spec.layers.size()));
    for (const LayerSpec& l : spec.layers) {
        if (auto* d = std::get_if<DenseLayer>(&l)) {
            write_u8(os, 0);
            write_u32(os, static_cast<std::uint32_t>(d->in));
            write_u32(os, static_cast<std::uint32_t>(d->out));
            write_u8(os, static_cast<std::uint8_t>(d->act));
        } else if (auto* c = std::get_if<Conv2dLayer>(&l)) {
            write_u8(os, 1);
            write_u32(os, static_cast<std::uint32_t>(c->in_h));
            write_u32(os, static_cast<std::uint32_t>(c->in_w));
            write_u32(os, static_cast<std::uint32_t>(c->in_c));
            write_u32(os, static_cast<std::uint32_t>(c->filters));
            write_u32(os, static_cast<std::uint32_t>(c->kernel));
            write_u8(os, static_cast<std::uint8_t>(c->act));
        } else {
            auto& bs = std::get<BlockSumDenseLayer>(l);
            write_u8(os, 2);
            write_u32(os, static_cast<std::uint32_t>(bs.in));
            write_u32(os, static_cast<std::uint32_t>(bs.out));
            write_u32(os, static_cast<std::uint32_t>(bs.partitions));
            write_u8(os, static_cast<std::uint8_t>(bs.act));
        }
    }
}

NetworkSpec load_network_spec(std::istream& is) {
    NetworkSpec spec;
    std::uint32_t n = read_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint8_t kind = read_u8(is);
        if (kind == 0) {
            DenseLayer d;
            d.in = static_cast<int>(read_u32(is));
            d.out = static_cast<int>(read_u32(is));
            d.act = static_cast<Activation>(read_u8(is));
            spec.layers.emplace_back(d);
        } else if (kind == 1) {
            Conv2dLayer c;
            c.in_h = static_cast<int>(read_u32(is));
            c.in_w = static_cast<int>(read_u32(is));
            c.in_c = static_cast<int>(read_u32(is));
            c.filters = static_cast<int>(read_u32(is));
            c.kernel = static_cast<int>(read_u32(is));
            c.act = static_cast<Activation>(read_u8(is));
            spec.layers.emplace_back(c);
        } else if (kind == 2) {
            BlockSumDenseLayer bs;
            bs.in = static_cast<int>(read_u32(is));
            bs.out = static_cast<int>(read_u32(is));
            bs.partitions = static_cast<int>(read_u32(is));
            bs.act = static_cast<Activation>(read_u8(is));
            spec.layers.emplace_back(bs);
        } else {
            throw std::runtime_error("bad layer kind in network spec");
        }
    }
    spec.validate();
    return spec;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.empty())
        throw std::invalid_argument("softmax expects a non-empty rank-1 tensor, got " +
                                    logits.shape_str());
    if (!logits.all_finite()) throw std::invalid_argument("softmax input has non-finite logits");
    double mx = logits.at1(0);
    for (std::size_t i = 1; i < logits.size(); ++i)
        mx = std::max(mx, static_cast<double>(logits.data[i]));
    Tensor out = Tensor::zeros(logits.shape);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp(static_cast<double>(logits.data[i]) - mx);
        out.data[i] = static_cast<real_t>(e);
        sum += e;
    }
    for (auto& v : out.data) v = static_cast<real_t>(v / sum);
    return out;
}

double cross_entropy(const Tensor& predicted, int true_class) {
    if (predicted.rank() != 1 || predicted.empty())
        throw std::invalid_argument("cross_entropy expects a rank-1 probability vector");
    if (true_class < 0 || true_class >= static_cast<int>(predicted.size()))
        throw std::out_of_range("cross_entropy class index " + std::to_string(true_class) +
                                " out of range for " + std::to_string(predicted.size()) +
                                " classes");
    double sum = 0.0;
    for (real_t v : predicted.data) sum += static_cast<double>(v);
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("cross_entropy input does not sum to 1 (sum=" +
                                    std::to_string(sum) + ")");
    const double p = std::max(static_cast<double>(predicted.at1(true_class)), kProbFloor);
    return -std::log(p);
}

Tensor classify_forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& x) {
    return softmax(net_forward(spec, params, x));
}

}  // namespace dfcp
