#include "appp/prior_models.hpp"

#include "appp/errors.hpp"
#include "appp/rng.hpp"

#include <cmath>
#include <numbers>

namespace appp {

std::string to_string(ParamSpace s) {
    switch (s) {
    case ParamSpace::pose_only: return "pose_only";
    case ParamSpace::shape_only: return "shape_only";
    case ParamSpace::pose_and_shape: return "pose_and_shape";
    }
    return "pose_only";
}

ParamSpace param_space_from_string(const std::string& s) {
    if (s == "pose_only") return ParamSpace::pose_only;
    if (s == "shape_only") return ParamSpace::shape_only;
    if (s == "pose_and_shape") return ParamSpace::pose_and_shape;
    throw ParseError("unknown param space '" + s + "'");
}

std::size_t ParamLayout::discriminator_count() const {
    switch (space) {
    case ParamSpace::pose_only: return joints + 1;
    case ParamSpace::shape_only: return 1;
    case ParamSpace::pose_and_shape: return joints + 3;
    }
    return 0;
}

Generator Generator::create(const LatentSpace& latent, const ParamLayout& layout,
                            const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    latent.validate();
    if (layout.output_dim() == 0) throw ConfigError("generator output dimension is zero");
    MlpSpec spec;
    spec.widths.push_back(latent.dim);
    spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
    spec.widths.push_back(layout.output_dim());
    spec.hidden = Activation::tanh();
    spec.output = Activation::tanh();
    spec.seed = seed;
    return Generator{Mlp::create(spec), latent, layout};
}

std::vector<double> Generator::output_scale() const {
    std::vector<double> s(layout.output_dim(), kShapeBound);
    for (std::size_t i = 0; i < layout.pose_dim(); ++i) s[i] = std::numbers::pi;
    return s;
}

namespace {

void scale_columns(Tensor2& t, const std::vector<double>& scale) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        auto row = t.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] *= scale[c];
    }
}

// tanh rounds to exactly +-1 for large inputs; keep outputs strictly inside the bound.
void scale_outputs(Tensor2& t, const std::vector<double>& scale) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
        auto row = t.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double v = row[c] * scale[c];
            row[c] = std::abs(v) < scale[c] ? v : std::copysign(std::nextafter(scale[c], 0.0), v);
        }
    }
}

} // namespace

Tensor2 generate_batch(const Generator& g, const Tensor2& latents) {
    if (latents.cols() != g.latent.dim) throw SpaceError("generate: latent dimension does not match the generator");
    Tensor2 out = mlp_apply(g.net, latents);
    scale_outputs(out, g.output_scale());
    return out;
}

GeneratedParams generate(const Generator& g, const LatentVector& z) {
    if (!(z.space == g.latent)) throw SpaceError("generate: latent vector belongs to a different latent space");
    if (!z.satisfies_invariant()) throw SpaceError("generate: latent vector is outside its space's support");
    const Tensor2 out = generate_batch(g, row_tensor(z.values));
    const auto row = out.row(0);
    GeneratedParams p;
    const std::size_t pd = g.layout.pose_dim();
    p.pose.values.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(pd));
    p.shape.values.assign(row.begin() + static_cast<std::ptrdiff_t>(pd), row.end());
    return p;
}

GeneratorForward generator_forward(const Generator& g, const Tensor2& latents) {
    if (latents.cols() != g.latent.dim) throw SpaceError("generate: latent dimension does not match the generator");
    auto fw = mlp_forward(g.net, latents);
    GeneratorForward out{std::move(fw.output), std::move(fw.tape)};
    scale_outputs(out.output, g.output_scale());
    return out;
}

MlpGradients generator_backward(const Generator& g, const GeneratorForward& fw, const Tensor2& output_grad,
                                bool want_params) {
    Tensor2 scaled = output_grad;
    scale_columns(scaled, g.output_scale());
    return mlp_backward(g.net, fw.tape, scaled, want_params);
}

} // namespace appp
