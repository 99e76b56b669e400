#include "json_io.hpp"

#include "appp/errors.hpp"
#include "appp/hash.hpp"

#include <fstream>
#include <sstream>

namespace appp {

using nlohmann::json;

namespace detail {

namespace {

json tensor_to_json(const Tensor2& t) {
    return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.storage()}};
}

Tensor2 tensor_from_json(const json& j) {
    return Tensor2(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                   j.at("data").get<std::vector<double>>());
}

json activation_to_json(const Activation& a) { return json{{"kind", to_string(a.kind)}, {"slope", a.slope}}; }

Activation activation_from_json(const json& j) {
    return Activation{activation_from_string(j.at("kind").get<std::string>()), j.at("slope").get<double>()};
}

} // namespace

json mlp_to_json(const Mlp& net) {
    json layers = json::array();
    for (const auto& l : net.params.layers) layers.push_back({{"weight", tensor_to_json(l.weight)}, {"bias", l.bias}});
    return json{{"widths", net.spec.widths},
                {"hidden", activation_to_json(net.spec.hidden)},
                {"output", activation_to_json(net.spec.output)},
                {"seed", net.spec.seed},
                {"layers", layers}};
}

Mlp mlp_from_json(const json& j) {
    Mlp net;
    net.spec.widths = j.at("widths").get<std::vector<std::size_t>>();
    net.spec.hidden = activation_from_json(j.at("hidden"));
    net.spec.output = activation_from_json(j.at("output"));
    net.spec.seed = j.at("seed").get<std::uint64_t>();
    net.spec.validate();
    for (const auto& l : j.at("layers")) {
        net.params.layers.push_back({tensor_from_json(l.at("weight")), l.at("bias").get<std::vector<double>>()});
    }
    net.params.check_against(net.spec);
    return net;
}

json adam_to_json(const AdamConfig& c) {
    return json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}

json layout_to_json(const ParamLayout& l) {
    return json{{"param_space", to_string(l.space)}, {"joints", l.joints}, {"shape_dim", l.shape_dim}};
}

json latent_to_json(const LatentSpace& s) { return json{{"kind", to_string(s.kind)}, {"dim", s.dim}}; }

json gan_config_to_json(const GanTrainConfig& c) {
    return json{{"prior_kind", "gan"},
                {"latent_space", latent_to_json(c.latent)},
                {"layout", layout_to_json(c.layout)},
                {"generator_hidden", c.generator_hidden},
                {"discriminator_hidden", c.discriminator_hidden},
                {"d_steps_per_g_step", c.d_steps_per_g_step},
                {"batch_size", c.batch_size},
                {"generator_steps", c.generator_steps},
                {"generator_adam", adam_to_json(c.generator_adam)},
                {"discriminator_adam", adam_to_json(c.discriminator_adam)}};
}

json vae_config_to_json(const VaeTrainConfig& c) {
    return json{{"prior_kind", "vae"},
                {"latent_space", latent_to_json(c.latent)},
                {"layout", layout_to_json(c.layout)},
                {"hidden", c.hidden},
                {"kl_weight", c.kl_weight},
                {"batch_size", c.batch_size},
                {"steps", c.steps},
                {"adam", adam_to_json(c.adam)}};
}

json gmm_config_to_json(const GmmTrainConfig& c) {
    return json{{"prior_kind", "gmm"}, {"components", c.components}, {"max_iterations", c.max_iterations}};
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("write to '" + path + "' failed");
}

} // namespace detail

namespace {

json parse_or_throw(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

void check_version(const json& j, int expected) {
    const int found = j.at("format_version").get<int>();
    if (found != expected) throw VersionError(expected, found);
}

json vec3_array(const std::vector<Vec3>& v) {
    json a = json::array();
    for (const auto& p : v) a.push_back({p.x(), p.y(), p.z()});
    return a;
}

std::vector<Vec3> vec3_from(const json& a) {
    std::vector<Vec3> v;
    for (const auto& p : a) {
        const auto c = p.get<std::vector<double>>();
        if (c.size() != 3) throw ParseError("expected a 3-vector");
        v.emplace_back(c[0], c[1], c[2]);
    }
    return v;
}

} // namespace

std::string body_to_json(const KinematicTree& tree) {
    json skin = json::array();
    for (const auto& row : tree.skin) {
        json r = json::array();
        for (const auto& inf : row) r.push_back({inf.node, inf.weight});
        skin.push_back(r);
    }
    json j{{"format_version", kBodyFormatVersion},
           {"names", tree.names},
           {"parent", tree.parent},
           {"rest_offsets", vec3_array(tree.rest_offsets)},
           {"rest_vertices", vec3_array(tree.rest_vertices)},
           {"skin", skin},
           {"shape_basis", {{"rows", tree.shape_basis.rows()},
                            {"cols", tree.shape_basis.cols()},
                            {"data", tree.shape_basis.storage()}}},
           {"fingerprint", tree.fingerprint()}};
    return j.dump();
}

KinematicTree body_from_json(const std::string& text) {
    const json j = parse_or_throw(text, "body");
    KinematicTree tree;
    try {
        check_version(j, kBodyFormatVersion);
        tree.names = j.at("names").get<std::vector<std::string>>();
        tree.parent = j.at("parent").get<std::vector<int>>();
        tree.rest_offsets = vec3_from(j.at("rest_offsets"));
        tree.rest_vertices = vec3_from(j.at("rest_vertices"));
        for (const auto& r : j.at("skin")) {
            std::vector<SkinInfluence> row;
            for (const auto& inf : r) row.push_back({inf.at(0).get<std::uint32_t>(), inf.at(1).get<double>()});
            tree.skin.push_back(std::move(row));
        }
        const auto& b = j.at("shape_basis");
        tree.shape_basis = Tensor2(b.at("rows").get<std::size_t>(), b.at("cols").get<std::size_t>(),
                                   b.at("data").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw ParseError(std::string("body: ") + e.what());
    } catch (const ShapeError& e) {
        throw ParseError(std::string("body: ") + e.what());
    }
    tree.validate();
    return tree;
}

std::string checkpoint_to_json(const Checkpoint& c) {
    json j{{"format_version", c.format_version},
           {"prior_kind", to_string(c.kind)},
           {"prior_name", c.prior_name},
           {"layout", detail::layout_to_json(c.layout)},
           {"kl_weight", c.kl_weight},
           {"training_config", c.training_config},
           {"config_hash", c.config_hash},
           {"corpus_fingerprint", c.corpus_fingerprint},
           {"seed", c.seed},
           {"generator_updates", c.generator_updates},
           {"discriminator_updates", c.discriminator_updates},
           {"params_hash", c.params_hash()}};
    if (c.generator) {
        j["latent_space"] = detail::latent_to_json(c.generator->latent);
        j["generator"] = detail::mlp_to_json(c.generator->net);
    }
    if (c.encoder) j["encoder"] = detail::mlp_to_json(*c.encoder);
    if (c.gmm) {
        j["gmm"] = {{"weights", c.gmm->weights},
                    {"means", {{"rows", c.gmm->means.rows()}, {"cols", c.gmm->means.cols()}, {"data", c.gmm->means.storage()}}},
                    {"variances",
                     {{"rows", c.gmm->variances.rows()}, {"cols", c.gmm->variances.cols()}, {"data", c.gmm->variances.storage()}}}};
    }
    return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    const json j = parse_or_throw(text, "checkpoint");
    Checkpoint c;
    try {
        check_version(j, kCheckpointVersion);
        const auto kind = j.at("prior_kind").get<std::string>();
        if (kind == "gan") c.kind = PriorKind::gan;
        else if (kind == "vae") c.kind = PriorKind::vae;
        else if (kind == "gmm") c.kind = PriorKind::gmm;
        else throw ParseError("checkpoint: unknown prior kind '" + kind + "'");
        c.prior_name = j.at("prior_name").get<std::string>();
        const auto& l = j.at("layout");
        c.layout = ParamLayout{param_space_from_string(l.at("param_space").get<std::string>()),
                               l.at("joints").get<std::size_t>(), l.at("shape_dim").get<std::size_t>()};
        c.kl_weight = j.at("kl_weight").get<double>();
        c.training_config = j.at("training_config").get<std::string>();
        c.config_hash = j.at("config_hash").get<std::string>();
        c.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.generator_updates = j.at("generator_updates").get<std::size_t>();
        c.discriminator_updates = j.at("discriminator_updates").get<std::size_t>();
        if (j.contains("generator")) {
            const auto& ls = j.at("latent_space");
            const LatentSpace latent{latent_kind_from_string(ls.at("kind").get<std::string>()), ls.at("dim").get<std::size_t>()};
            Mlp net = detail::mlp_from_json(j.at("generator"));
            if (net.spec.input_dim() != latent.dim || net.spec.output_dim() != c.layout.output_dim()) {
                throw ParseError("checkpoint: generator shape does not match its latent space and layout");
            }
            c.generator = Generator{std::move(net), latent, c.layout};
        }
        if (j.contains("encoder")) c.encoder = detail::mlp_from_json(j.at("encoder"));
        if (j.contains("gmm")) {
            const auto& g = j.at("gmm");
            auto t = [](const json& x) {
                return Tensor2(x.at("rows").get<std::size_t>(), x.at("cols").get<std::size_t>(),
                               x.at("data").get<std::vector<double>>());
            };
            c.gmm = GmmPrior{g.at("weights").get<std::vector<double>>(), t(g.at("means")), t(g.at("variances"))};
        }
        if (j.at("params_hash").get<std::string>() != c.params_hash()) {
            throw ParseError("checkpoint: parameter hash mismatch (file is corrupt)");
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    } catch (const ShapeError& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    if (c.kind != PriorKind::gmm && !c.generator) throw ParseError("checkpoint: missing generator");
    if (c.kind == PriorKind::gmm && !c.gmm) throw ParseError("checkpoint: missing gmm");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    detail::write_text_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(detail::read_text_file(path)); }

} // namespace appp
