#include "appp/prior_models.hpp"

#include "appp/errors.hpp"
#include "appp/rng.hpp"

#include <cmath>

namespace appp {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::size_t rot_dim(const ParamLayout& l) { return l.has_pose() ? 9 * l.joints : 0; }
std::size_t feature_dim(const ParamLayout& l) { return rot_dim(l) + (l.has_shape() ? l.shape_dim : 0); }

struct ColumnRange {
    std::size_t begin, count;
};

ColumnRange input_range(const DiscriminatorBank& bank, std::size_t i) {
    const auto& l = bank.layout;
    switch (bank.roles[i]) {
    case DiscriminatorRole::joint: return {9 * bank.joint_index[i], 9};
    case DiscriminatorRole::pose: return {0, rot_dim(l)};
    case DiscriminatorRole::shape: return {rot_dim(l), l.shape_dim};
    case DiscriminatorRole::full: return {0, feature_dim(l)};
    }
    return {0, 0};
}

Tensor2 gather_columns(const Tensor2& t, ColumnRange r) {
    Tensor2 out(t.rows(), r.count);
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto src = t.row(i);
        auto dst = out.row(i);
        for (std::size_t c = 0; c < r.count; ++c) dst[c] = src[r.begin + c];
    }
    return out;
}

void scatter_add_columns(Tensor2& t, ColumnRange r, const Tensor2& g) {
    for (std::size_t i = 0; i < t.rows(); ++i) {
        auto dst = t.row(i);
        const auto src = g.row(i);
        for (std::size_t c = 0; c < r.count; ++c) dst[r.begin + c] += src[c];
    }
}

Tensor2 stack(const Tensor2& a, const Tensor2& b) {
    std::vector<double> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.values().begin(), a.values().end());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return Tensor2(a.rows() + b.rows(), a.cols(), std::move(data));
}

void check_features(const DiscriminatorBank& bank, const Tensor2& f) {
    if (f.cols() != feature_dim(bank.layout)) throw ShapeError("discriminator features have the wrong width");
}

// Features plus the Rodrigues Jacobians needed to pull feature gradients back to axis-angle.
struct FeatureTape {
    Tensor2 features;
    std::vector<std::array<Mat3, 3>> jacobians; // row-major over (sample, joint)
};

FeatureTape features_with_tape(const ParamLayout& layout, const Tensor2& params) {
    if (params.cols() != layout.output_dim()) throw ShapeError("params width does not match the layout");
    FeatureTape ft{Tensor2(params.rows(), feature_dim(layout)), {}};
    const std::size_t K = layout.has_pose() ? layout.joints : 0;
    ft.jacobians.reserve(params.rows() * K);
    const std::size_t rd = rot_dim(layout);
    for (std::size_t i = 0; i < params.rows(); ++i) {
        const auto p = params.row(i);
        auto f = ft.features.row(i);
        for (std::size_t k = 0; k < K; ++k) {
            const Vec3 v(p[3 * k], p[3 * k + 1], p[3 * k + 2]);
            const Mat3 R = rodrigues(v);
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) f[9 * k + static_cast<std::size_t>(3 * a + b)] = R(a, b);
            }
            ft.jacobians.push_back(rodrigues_jacobian(v));
        }
        if (layout.has_shape()) {
            for (std::size_t j = 0; j < layout.shape_dim; ++j) f[rd + j] = p[layout.pose_dim() + j];
        }
    }
    return ft;
}

Tensor2 features_backward(const ParamLayout& layout, const FeatureTape& ft, const Tensor2& feature_grad) {
    Tensor2 g(feature_grad.rows(), layout.output_dim());
    const std::size_t K = layout.has_pose() ? layout.joints : 0;
    const std::size_t rd = rot_dim(layout);
    for (std::size_t i = 0; i < feature_grad.rows(); ++i) {
        const auto fg = feature_grad.row(i);
        auto out = g.row(i);
        for (std::size_t k = 0; k < K; ++k) {
            const auto& J = ft.jacobians[i * K + k];
            for (std::size_t c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) s += fg[9 * k + static_cast<std::size_t>(3 * a + b)] * J[c](a, b);
                }
                out[3 * k + c] = s;
            }
        }
        if (layout.has_shape()) {
            for (std::size_t j = 0; j < layout.shape_dim; ++j) out[layout.pose_dim() + j] = fg[rd + j];
        }
    }
    return g;
}

} // namespace

DiscriminatorBank DiscriminatorBank::create(const ParamLayout& layout, const std::vector<std::size_t>& hidden,
                                            std::uint64_t seed) {
    DiscriminatorBank bank;
    bank.layout = layout;
    auto add = [&](DiscriminatorRole role, std::size_t joint, std::size_t in) {
        MlpSpec spec;
        spec.widths.push_back(in);
        spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
        spec.widths.push_back(1);
        spec.hidden = Activation::leaky_relu(0.2);
        spec.output = Activation::identity();
        spec.seed = derive_seed(seed, "discriminator", bank.nets.size());
        bank.roles.push_back(role);
        bank.joint_index.push_back(joint);
        bank.nets.push_back(Mlp::create(spec));
    };
    if (layout.has_pose()) {
        for (std::size_t k = 0; k < layout.joints; ++k) add(DiscriminatorRole::joint, k, 9);
        add(DiscriminatorRole::pose, 0, 9 * layout.joints);
    }
    if (layout.has_shape()) add(DiscriminatorRole::shape, 0, layout.shape_dim);
    if (layout.space == ParamSpace::pose_and_shape) add(DiscriminatorRole::full, 0, feature_dim(layout));
    return bank;
}

std::vector<MlpParams> DiscriminatorBank::zero_grads() const {
    std::vector<MlpParams> g;
    g.reserve(nets.size());
    for (const auto& n : nets) g.push_back(n.params.zeros_like());
    return g;
}

Tensor2 discriminator_features(const ParamLayout& layout, const Tensor2& params) {
    return features_with_tape(layout, params).features;
}

GanLosses gan_losses(const DiscriminatorBank& bank, const Tensor2& real, const Tensor2& fake) {
    if (real.rows() == 0 || fake.rows() == 0) throw BatchError("gan_losses: empty batch");
    const Tensor2 rf = discriminator_features(bank.layout, real);
    const Tensor2 ff = discriminator_features(bank.layout, fake);
    GanLosses out;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto range = input_range(bank, i);
        const Tensor2 lr = mlp_apply(bank.nets[i], gather_columns(rf, range));
        const Tensor2 lf = mlp_apply(bank.nets[i], gather_columns(ff, range));
        double d = 0.0;
        double g = 0.0;
        for (double l : lr.values()) d += softplus(-l) / static_cast<double>(lr.rows());
        for (double l : lf.values()) {
            d += softplus(l) / static_cast<double>(lf.rows());
            g += softplus(-l) / static_cast<double>(lf.rows());
        }
        out.d_loss_per_net.push_back(d);
        out.g_loss_per_net.push_back(g);
        out.d_loss += d;
        out.g_loss += g;
    }
    return out;
}

double discriminator_loss_grad(const DiscriminatorBank& bank, const Tensor2& real_features,
                               const Tensor2& fake_features, std::vector<MlpParams>& grads) {
    if (real_features.rows() == 0 || fake_features.rows() == 0) throw BatchError("discriminator loss: empty batch");
    check_features(bank, real_features);
    check_features(bank, fake_features);
    grads.resize(bank.size());
    const std::size_t nr = real_features.rows();
    const std::size_t nf = fake_features.rows();
    double total = 0.0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto range = input_range(bank, i);
        const Tensor2 input = stack(gather_columns(real_features, range), gather_columns(fake_features, range));
        auto fw = mlp_forward(bank.nets[i], input);
        Tensor2 dl(nr + nf, 1);
        for (std::size_t r = 0; r < nr; ++r) {
            const double l = fw.output(r, 0);
            total += softplus(-l) / static_cast<double>(nr);
            dl(r, 0) = -sigmoid(-l) / static_cast<double>(nr);
        }
        for (std::size_t r = 0; r < nf; ++r) {
            const double l = fw.output(nr + r, 0);
            total += softplus(l) / static_cast<double>(nf);
            dl(nr + r, 0) = sigmoid(l) / static_cast<double>(nf);
        }
        grads[i] = mlp_backward(bank.nets[i], fw.tape, dl, true).params;
    }
    return total;
}

double generator_loss_grad(const Generator& g, const DiscriminatorBank& bank, const Tensor2& latents,
                           MlpParams* param_grad, Tensor2* latent_grad) {
    if (latents.rows() == 0) throw BatchError("generator loss: empty batch");
    if (!(g.layout == bank.layout)) throw ShapeError("generator and discriminator layouts differ");
    const auto gfw = generator_forward(g, latents);
    const auto ft = features_with_tape(g.layout, gfw.output);
    const std::size_t n = latents.rows();
    Tensor2 feature_grad(n, ft.features.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto range = input_range(bank, i);
        auto fw = mlp_forward(bank.nets[i], gather_columns(ft.features, range));
        Tensor2 dl(n, 1);
        for (std::size_t r = 0; r < n; ++r) {
            const double l = fw.output(r, 0);
            total += softplus(-l) / static_cast<double>(n);
            dl(r, 0) = -sigmoid(-l) / static_cast<double>(n);
        }
        const auto bw = mlp_backward(bank.nets[i], fw.tape, dl, false);
        scatter_add_columns(feature_grad, range, bw.input);
    }
    if (param_grad != nullptr || latent_grad != nullptr) {
        const Tensor2 out_grad = features_backward(g.layout, ft, feature_grad);
        auto bw = generator_backward(g, gfw, out_grad, param_grad != nullptr);
        if (param_grad != nullptr) *param_grad = std::move(bw.params);
        if (latent_grad != nullptr) *latent_grad = std::move(bw.input);
    }
    return total;
}

} // namespace appp
