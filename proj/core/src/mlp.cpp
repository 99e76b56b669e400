#include "appp/mlp.hpp"

#include "appp/errors.hpp"
#include "appp/hash.hpp"
#include "appp/rng.hpp"
#include "eigen_view.hpp"

#include <cmath>

namespace appp {

namespace {

double activate(const Activation& a, double x) {
    switch (a.kind) {
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::leaky_relu: return x > 0.0 ? x : a.slope * x;
    case ActivationKind::identity: return x;
    }
    return x;
}

// Derivative expressed through the pre-activation.
double activate_grad(const Activation& a, double pre) {
    switch (a.kind) {
    case ActivationKind::tanh: {
        const double t = std::tanh(pre);
        return 1.0 - t * t;
    }
    case ActivationKind::leaky_relu: return pre > 0.0 ? 1.0 : a.slope;
    case ActivationKind::identity: return 1.0;
    }
    return 1.0;
}

double init_gain_sq(const Activation& a) {
    if (a.kind == ActivationKind::leaky_relu) return 2.0 / (1.0 + a.slope * a.slope);
    return 1.0;
}

void validate_activation(const Activation& a) {
    if (a.kind == ActivationKind::leaky_relu && !(a.slope > 0.0 && a.slope < 1.0)) {
        throw ConfigError("leaky_relu slope must lie in (0,1)");
    }
}

} // namespace

std::string to_string(ActivationKind k) {
    switch (k) {
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::identity: return "identity";
    }
    return "identity";
}

ActivationKind activation_from_string(const std::string& s) {
    if (s == "tanh") return ActivationKind::tanh;
    if (s == "leaky_relu") return ActivationKind::leaky_relu;
    if (s == "identity") return ActivationKind::identity;
    throw ParseError("unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ShapeError("MlpSpec needs at least two widths");
    for (auto w : widths) {
        if (w == 0) throw ShapeError("MlpSpec widths must be positive");
    }
    validate_activation(hidden);
    validate_activation(output);
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<double> MlpParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.weight.values().begin(), l.weight.values().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void MlpParams::assign(std::span<const double> flat) {
    if (flat.size() != param_count()) {
        throw ShapeError("MlpParams::assign: expected " + std::to_string(param_count()) + " values, got " +
                         std::to_string(flat.size()));
    }
    std::size_t k = 0;
    for (auto& l : layers) {
        for (auto& w : l.weight.values()) w = flat[k++];
        for (auto& b : l.bias) b = flat[k++];
    }
}

MlpParams MlpParams::zeros_like() const {
    MlpParams z;
    z.layers.reserve(layers.size());
    for (const auto& l : layers) {
        z.layers.push_back({Tensor2(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
    }
    return z;
}

bool MlpParams::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weight.all_finite()) return false;
        for (double b : l.bias) {
            if (!std::isfinite(b)) return false;
        }
    }
    return true;
}

std::string MlpParams::hash() const {
    Hasher h;
    for (const auto& l : layers) {
        h.u64(l.weight.rows()).u64(l.weight.cols()).reals(l.weight.values()).reals(l.bias);
    }
    return h.hex();
}

void MlpParams::check_against(const MlpSpec& spec) const {
    if (layers.size() != spec.layer_count()) throw ShapeError("MlpParams: layer count does not match spec");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.weight.rows() != spec.widths[i + 1] || l.weight.cols() != spec.widths[i] ||
            l.bias.size() != spec.widths[i + 1]) {
            throw ShapeError("MlpParams: layer " + std::to_string(i) + " shape does not match spec");
        }
    }
}

Mlp Mlp::create(const MlpSpec& spec) {
    spec.validate();
    Mlp net{spec, {}};
    Rng rng(derive_seed(spec.seed, "mlp-init"));
    for (std::size_t i = 0; i < spec.layer_count(); ++i) {
        const std::size_t in = spec.widths[i];
        const std::size_t out = spec.widths[i + 1];
        const Activation& act = (i + 1 == spec.layer_count()) ? spec.output : spec.hidden;
        const double stddev = std::sqrt(init_gain_sq(act) / static_cast<double>(in));
        DenseLayer layer{Tensor2(out, in), std::vector<double>(out, 0.0)};
        for (auto& w : layer.weight.values()) w = stddev * standard_normal(rng);
        net.params.layers.push_back(std::move(layer));
    }
    return net;
}

std::uint64_t params_sketch(const MlpParams& params) {
    Hasher h;
    for (const auto& l : params.layers) {
        h.u64(l.weight.rows()).u64(l.weight.cols());
        const auto w = l.weight.values();
        const std::size_t stride = w.size() / 8 + 1;
        for (std::size_t i = 0; i < w.size(); i += stride) h.f64(w[i]);
        if (!w.empty()) h.f64(w.back());
        const std::size_t bstride = l.bias.size() / 4 + 1;
        for (std::size_t i = 0; i < l.bias.size(); i += bstride) h.f64(l.bias[i]);
    }
    return h.value();
}

namespace {

void check_input(const Mlp& net, const Tensor2& input) {
    if (input.cols() != net.spec.input_dim()) {
        throw ShapeError("mlp_forward: input has " + std::to_string(input.cols()) + " columns, net expects " +
                         std::to_string(net.spec.input_dim()));
    }
    if (net.params.layers.size() != net.spec.layer_count()) {
        throw ShapeError("mlp_forward: params do not match spec");
    }
}

Tensor2 affine(const DenseLayer& layer, const Tensor2& x) {
    Tensor2 pre(x.rows(), layer.weight.rows());
    auto p = detail::view(pre);
    p.noalias() = detail::view(x) * detail::view(layer.weight).transpose();
    const Eigen::Map<const Eigen::RowVectorXd> b(layer.bias.data(), static_cast<Eigen::Index>(layer.bias.size()));
    p.rowwise() += b;
    return pre;
}

Tensor2 activated(const Activation& a, const Tensor2& pre) {
    Tensor2 out(pre.rows(), pre.cols());
    auto src = pre.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = activate(a, src[i]);
    return out;
}

} // namespace

MlpForward mlp_forward(const Mlp& net, const Tensor2& input) {
    check_input(net, input);
    MlpForward fw;
    fw.tape.params_sketch = params_sketch(net.params);
    const std::size_t n = net.spec.layer_count();
    fw.tape.inputs.reserve(n);
    fw.tape.pre.reserve(n);
    Tensor2 x = input;
    for (std::size_t i = 0; i < n; ++i) {
        const Activation& act = (i + 1 == n) ? net.spec.output : net.spec.hidden;
        Tensor2 pre = affine(net.params.layers[i], x);
        Tensor2 out = activated(act, pre);
        fw.tape.inputs.push_back(std::move(x));
        fw.tape.pre.push_back(std::move(pre));
        x = std::move(out);
    }
    fw.tape.output = x;
    fw.output = std::move(x);
    return fw;
}

Tensor2 mlp_apply(const Mlp& net, const Tensor2& input) {
    check_input(net, input);
    const std::size_t n = net.spec.layer_count();
    Tensor2 x = input;
    for (std::size_t i = 0; i < n; ++i) {
        const Activation& act = (i + 1 == n) ? net.spec.output : net.spec.hidden;
        Tensor2 pre = affine(net.params.layers[i], x);
        auto v = pre.values();
        for (auto& e : v) e = activate(act, e);
        x = std::move(pre);
    }
    return x;
}

MlpGradients mlp_backward(const Mlp& net, const MlpTape& tape, const Tensor2& output_grad, bool want_params) {
    const std::size_t n = net.spec.layer_count();
    if (tape.pre.size() != n || tape.inputs.size() != n) throw TapeError("mlp_backward: tape has wrong depth");
    if (tape.params_sketch != params_sketch(net.params)) {
        throw TapeError("mlp_backward: parameters changed since the forward pass");
    }
    if (output_grad.rows() != tape.output.rows() || output_grad.cols() != tape.output.cols()) {
        throw TapeError("mlp_backward: output gradient shape does not match the tape");
    }
    MlpGradients g;
    if (want_params) g.params = net.params.zeros_like();

    Tensor2 grad = output_grad;
    for (std::size_t li = n; li-- > 0;) {
        const Activation& act = (li + 1 == n) ? net.spec.output : net.spec.hidden;
        const Tensor2& pre = tape.pre[li];
        {
            auto gv = grad.values();
            auto pv = pre.values();
            for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= activate_grad(act, pv[i]);
        }
        const auto gpre = detail::view(std::as_const(grad));
        if (want_params) {
            auto& layer = g.params.layers[li];
            detail::view(layer.weight).noalias() = gpre.transpose() * detail::view(tape.inputs[li]);
            Eigen::Map<Eigen::RowVectorXd> gb(layer.bias.data(), static_cast<Eigen::Index>(layer.bias.size()));
            gb = gpre.colwise().sum();
        }
        Tensor2 gin(grad.rows(), net.spec.widths[li]);
        detail::view(gin).noalias() = gpre * detail::view(net.params.layers[li].weight);
        grad = std::move(gin);
    }
    g.input = std::move(grad);
    return g;
}

} // namespace appp
