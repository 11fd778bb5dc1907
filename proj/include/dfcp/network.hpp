#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "dfcp/parameter_set.hpp"
#include "dfcp/tensor.hpp"

namespace dfcp {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh_fn = 2, sigmoid = 3 };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& s);

/// Fully connected layer: y = W^T x + b, W is in x out.
struct DenseLayer {
    int in = 0;
    int out = 0;
    Activation act = Activation::identity;
};

/// Valid stride-1 convolution over an input interpreted as in_h x in_w x in_c.
/// Output is flattened back to rank 1 between layers.
struct Conv2dLayer {
    int in_h = 0;
    int in_w = 0;
    int in_c = 0;
    int filters = 0;
    int kernel = 0;
    Activation act = Activation::identity;
};

/// Shared-weight partition map: the input is split into `partitions` equal
/// contiguous blocks and one (in/partitions) x out weight matrix is applied
/// to each block, summing the results. With partitions == 1 this is a plain
/// dense layer.
struct BlockSumDenseLayer {
    int in = 0;
    int out = 0;
    int partitions = 1;
    Activation act = Activation::identity;
};

using LayerSpec = std::variant<DenseLayer, Conv2dLayer, BlockSumDenseLayer>;

struct NetworkSpec {
    std::vector<LayerSpec> layers;

    int input_dim() const;
    int output_dim() const;
    /// Throws if consecutive layer dimensions do not chain.
    void validate() const;
};

int layer_input_dim(const LayerSpec& l);
int layer_output_dim(const LayerSpec& l);

enum class InitScheme : std::uint8_t { xavier_normal = 0, kaiming_uniform = 1 };

/// Deterministic parameter construction; entry i is named "layer<i>".
/// Biases start at zero.
ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed, InitScheme scheme);

Tensor net_forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& x);

struct NetTrace {
    std::vector<Tensor> inputs;   // input to each layer (flat)
    std::vector<Tensor> preact;   // pre-activation output of each layer (flat)
    Tensor output;
};

NetTrace net_forward_trace(const NetworkSpec& spec, const ParameterSet& params, const Tensor& x);

/// Accumulates dLoss/dParams into grad (shapes must mirror params) given
/// dLoss/dOutput. Optionally also produces dLoss/dInput.
void net_backward(const NetworkSpec& spec, const ParameterSet& params, const NetTrace& trace,
                  const Tensor& grad_out, ParameterSet& grad, Tensor* grad_input = nullptr);

/// Analytic cost model used for every latency claim: a multiply-accumulate
/// counts as 2 FLOPs, bias add 1, any activation 1 per element, softmax over
/// n elements 5n.
std::uint64_t net_flops(const NetworkSpec& spec);
std::uint64_t net_param_count(const NetworkSpec& spec);
std::uint64_t softmax_flops(int n);

void save_network_spec(std::ostream& os, const NetworkSpec& spec);
NetworkSpec load_network_spec(std::istream& is);

// --- core ops -----------------------------------------------------------

/// Max-subtraction stabilized softmax of a rank-1 tensor.
Tensor softmax(const Tensor& logits);

/// -log(predicted[true_class]) with the probability floored at 1e-12.
/// predicted must sum to 1 within 1e-6.
double cross_entropy(const Tensor& predicted, int true_class);

constexpr double kProbFloor = 1e-12;

/// softmax(net_forward(x)) convenience for classifier heads.
Tensor classify_forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& x);

}  // namespace dfcp
