#pragma once

#include "appp/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace appp {

enum class ActivationKind { tanh, leaky_relu, identity };

struct Activation {
    ActivationKind kind = ActivationKind::identity;
    double slope = 0.2; // leaky_relu only

    static Activation tanh() { return {ActivationKind::tanh, 0.2}; }
    static Activation leaky_relu(double slope = 0.2) { return {ActivationKind::leaky_relu, slope}; }
    static Activation identity() { return {ActivationKind::identity, 0.2}; }

    friend bool operator==(const Activation&, const Activation&) = default;
};

std::string to_string(ActivationKind k);
ActivationKind activation_from_string(const std::string& s);

struct MlpSpec {
    std::vector<std::size_t> widths; // input, hidden..., output
    Activation hidden = Activation::leaky_relu();
    Activation output = Activation::identity();
    std::uint64_t seed = 0;

    std::size_t input_dim() const { return widths.front(); }
    std::size_t output_dim() const { return widths.back(); }
    std::size_t layer_count() const { return widths.size() - 1; }
    /// Throws ShapeError / ConfigError on an invalid spec.
    void validate() const;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
    Tensor2 weight; // out x in
    std::vector<double> bias;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpParams {
    std::vector<DenseLayer> layers;

    std::size_t param_count() const;
    /// Flattened copy in layer order: weight (row-major) then bias.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    MlpParams zeros_like() const;
    bool all_finite() const;
    /// FNV-1a over every parameter byte; the frozen-prior check compares these.
    std::string hash() const;
    /// Throws ShapeError unless the shapes chain as spec.widths requires.
    void check_against(const MlpSpec& spec) const;

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct Mlp {
    MlpSpec spec;
    MlpParams params;

    /// Kaiming fan-in normal initialization seeded by spec.seed; biases zero.
    static Mlp create(const MlpSpec& spec);
};

/// Everything backward needs from one forward pass.
struct MlpTape {
    std::uint64_t params_sketch = 0;
    std::vector<Tensor2> inputs; // input to each layer
    std::vector<Tensor2> pre;    // pre-activation of each layer
    Tensor2 output;
};

struct MlpForward {
    Tensor2 output;
    MlpTape tape;
};

struct MlpGradients {
    MlpParams params;
    Tensor2 input;
};

MlpForward mlp_forward(const Mlp& net, const Tensor2& input);
/// Forward without recording a tape.
Tensor2 mlp_apply(const Mlp& net, const Tensor2& input);
/// Reverse-mode pass. With want_params=false only the input gradient is formed.
/// Throws TapeError if the tape was recorded against different parameters.
MlpGradients mlp_backward(const Mlp& net, const MlpTape& tape, const Tensor2& output_grad,
                          bool want_params = true);

/// Cheap structural checksum over shapes and strided samples of the parameters.
std::uint64_t params_sketch(const MlpParams& params);

} // namespace appp
