#include "appp/pose_corpus.hpp"

#include "appp/errors.hpp"
#include "appp/hash.hpp"
#include "appp/rng.hpp"
#include "json_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace appp {

ManifoldSpec build_manifold(std::uint64_t seed, const ManifoldConfig& config) {
    if (config.intrinsic_dim < 1 || config.joints < 1 || config.hidden < 1 || config.blobs < 1) {
        throw ConfigError("build_manifold: dimensions must be positive");
    }
    ManifoldSpec spec;
    spec.config = config;
    spec.seed = seed;
    MlpSpec net;
    net.widths = {config.intrinsic_dim, config.hidden, config.hidden, spec.pose_dim()};
    net.hidden = Activation::tanh();
    net.output = Activation::identity();
    net.seed = derive_seed(seed, "manifold-map");
    spec.map = Mlp::create(net);

    Rng rng(derive_seed(seed, "manifold-box"));
    spec.box_lo.resize(spec.pose_dim());
    spec.box_hi.resize(spec.pose_dim());
    for (std::size_t i = 0; i < spec.pose_dim(); ++i) {
        const double center = uniform(rng, -0.5, 0.5);
        const double half = uniform(rng, 0.4, 1.2);
        spec.box_lo[i] = center - half;
        spec.box_hi[i] = center + half;
    }
    Rng blob_rng(derive_seed(seed, "manifold-blobs"));
    spec.blob_means = Tensor2(config.blobs, config.intrinsic_dim);
    for (auto& v : spec.blob_means.values()) v = config.blob_spread * standard_normal(blob_rng);
    return spec;
}

Tensor2 ManifoldSpec::map_batch(const Tensor2& factors) const {
    Tensor2 raw = mlp_apply(map, factors);
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        auto row = raw.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double center = 0.5 * (box_lo[c] + box_hi[c]);
            const double half = 0.5 * (box_hi[c] - box_lo[c]);
            row[c] = center + half * std::tanh(row[c]);
        }
    }
    return raw;
}

bool ManifoldSpec::in_box(std::span<const double> pose) const {
    if (pose.size() != pose_dim()) return false;
    for (std::size_t c = 0; c < pose.size(); ++c) {
        if (!(pose[c] >= box_lo[c] && pose[c] <= box_hi[c])) return false;
    }
    return true;
}

std::string ManifoldSpec::fingerprint() const {
    Hasher h;
    h.u64(config.intrinsic_dim).u64(config.joints).u64(config.hidden).u64(config.blobs);
    h.f64(config.blob_spread).f64(config.blob_sigma).u64(seed);
    h.reals(map.params.flatten()).reals(box_lo).reals(box_hi).reals(blob_means.values());
    return h.hex();
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ParseError("unknown split '" + s + "' (expected train or test)");
}

PoseVector PoseCorpus::pose(std::size_t i) const {
    const auto r = poses.row(i);
    return PoseVector(std::vector<double>(r.begin(), r.end()));
}

PoseCorpus sample_corpus(const ManifoldSpec& spec, std::size_t n, std::uint64_t split_seed, Split split) {
    if (n == 0) throw ConfigError("sample_corpus: n must be at least 1");
    const std::size_t m = spec.config.intrinsic_dim;
    const std::string label = to_string(split);
    Tensor2 poses(n, spec.pose_dim());
    // Row by row: a batched product may round differently depending on n.
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(split_seed, label, i));
        const std::size_t b = std::uniform_int_distribution<std::size_t>(0, spec.config.blobs - 1)(rng);
        Tensor2 factor(1, m);
        for (std::size_t j = 0; j < m; ++j) {
            factor(0, j) = spec.blob_means(b, j) + spec.config.blob_sigma * standard_normal(rng);
        }
        const Tensor2 pose = spec.map_batch(factor);
        std::copy(pose.values().begin(), pose.values().end(), poses.row(i).begin());
    }
    return PoseCorpus{std::move(poses), split, spec.fingerprint()};
}

namespace {

void put_u64(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

std::uint64_t parse_fingerprint(const std::string& hex) {
    if (hex.size() != 16) throw ConfigError("corpus fingerprint must be 16 hex digits");
    return std::stoull(hex, nullptr, 16);
}

} // namespace

std::string corpus_to_bytes(const PoseCorpus& corpus) {
    std::string out = "APPP";
    out.push_back(static_cast<char>(kCorpusVersion));
    put_u64(out, corpus.joints(), 4);
    put_u64(out, corpus.size(), 8);
    out.push_back(static_cast<char>(corpus.split == Split::train ? 0 : 1));
    put_u64(out, parse_fingerprint(corpus.fingerprint), 8);
    out.reserve(out.size() + 8 * corpus.poses.size());
    for (double v : corpus.poses.values()) put_u64(out, std::bit_cast<std::uint64_t>(v), 8);
    return out;
}

PoseCorpus corpus_from_bytes(const std::string& in) {
    if (in.size() < kCorpusHeaderBytes) throw ParseError("corpus: truncated header");
    if (in.compare(0, 4, "APPP") != 0) throw ParseError("corpus: bad magic");
    const int version = static_cast<unsigned char>(in[4]);
    if (version != kCorpusVersion) throw VersionError(kCorpusVersion, version);
    const std::uint64_t K = get_u64(in, 5, 4);
    const std::uint64_t count = get_u64(in, 9, 8);
    const int split = static_cast<unsigned char>(in[17]);
    if (split > 1) throw ParseError("corpus: bad split byte");
    const std::uint64_t fp = get_u64(in, 18, 8);
    if (K == 0 || count > (in.size() / 8) / (3 * K)) throw ParseError("corpus: truncated pose data");
    const std::size_t values = static_cast<std::size_t>(count * 3 * K);
    if (in.size() != kCorpusHeaderBytes + 8 * values) {
        throw ParseError(in.size() < kCorpusHeaderBytes + 8 * values ? "corpus: truncated pose data"
                                                                      : "corpus: trailing bytes");
    }
    std::vector<double> data(values);
    for (std::size_t i = 0; i < values; ++i) data[i] = std::bit_cast<double>(get_u64(in, kCorpusHeaderBytes + 8 * i, 8));
    return PoseCorpus{Tensor2(static_cast<std::size_t>(count), static_cast<std::size_t>(3 * K), std::move(data)),
                      split == 0 ? Split::train : Split::test, to_hex(fp)};
}

void write_corpus(const PoseCorpus& corpus, const std::string& path) {
    detail::write_text_file(path, corpus_to_bytes(corpus));
}

PoseCorpus read_corpus(const std::string& path) { return corpus_from_bytes(detail::read_text_file(path)); }

void write_corpus_csv(const PoseCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    static const char axis[] = {'x', 'y', 'z'};
    for (std::size_t c = 0; c < corpus.poses.cols(); ++c) {
        out << (c ? "," : "") << "joint_" << c / 3 << "_" << axis[c % 3];
    }
    out << "\n";
    out.precision(17);
    for (std::size_t r = 0; r < corpus.size(); ++r) {
        const auto row = corpus.poses.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << "\n";
    }
}

Tensor2 sample_shapes(std::size_t n, std::size_t shape_dim, std::uint64_t seed) {
    Tensor2 out(n, shape_dim);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "shape", i));
        for (auto& v : out.row(i)) {
            do {
                v = standard_normal(rng);
            } while (std::abs(v) > 2.5);
        }
    }
    return out;
}

TrainingData make_training_data(const PoseCorpus& corpus, const ParamLayout& layout, std::uint64_t shape_seed) {
    if (layout.has_pose() && corpus.joints() != layout.joints) {
        throw ShapeError("corpus has " + std::to_string(corpus.joints()) + " joints, layout expects " +
                         std::to_string(layout.joints));
    }
    const std::size_t n = corpus.size();
    Tensor2 params(n, layout.output_dim());
    const Tensor2 shapes = layout.has_shape() ? sample_shapes(n, layout.shape_dim, shape_seed) : Tensor2();
    for (std::size_t i = 0; i < n; ++i) {
        auto dst = params.row(i);
        std::size_t c = 0;
        if (layout.has_pose()) {
            for (double v : corpus.poses.row(i)) dst[c++] = v;
        }
        if (layout.has_shape()) {
            for (double v : shapes.row(i)) dst[c++] = v;
        }
    }
    return TrainingData{std::move(params), corpus.fingerprint};
}

Tensor2 circle_corpus(std::size_t n, std::uint64_t seed) {
    Tensor2 out(n, 3 * kCircleJoints);
    Rng rng(derive_seed(seed, "circle"));
    for (std::size_t i = 0; i < n; ++i) {
        const double phi = uniform(rng, -std::numbers::pi, std::numbers::pi);
        out(i, 2) = std::cos(phi);
        out(i, 5) = std::sin(phi);
    }
    return out;
}

double circle_distance(std::span<const double> p) {
    if (p.size() != 3 * kCircleJoints) throw ShapeError("circle_distance: expected a 6-dim pose");
    const double off = p[0] * p[0] + p[1] * p[1] + p[3] * p[3] + p[4] * p[4];
    const double radial = std::hypot(p[2], p[5]) - 1.0;
    return std::sqrt(off + radial * radial);
}

} // namespace appp
