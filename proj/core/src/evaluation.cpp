#include "appp/evaluation.hpp"

#include "appp/errors.hpp"
#include "appp/parallel.hpp"
#include "appp/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace appp {

Tensor2 pose_meshes(const KinematicTree& tree, const Tensor2& poses) {
    if (poses.cols() != 3 * tree.joint_count()) throw ShapeError("pose_meshes: pose width does not match the body");
    const ShapeVector zero = ShapeVector::zeros(tree.shape_dim());
    Tensor2 out(poses.rows(), 3 * tree.vertex_count());
    parallel_for(poses.rows(), [&](std::size_t i) {
        const auto row = poses.row(i);
        const BodyMesh m = skin(tree, PoseVector(std::vector<double>(row.begin(), row.end())), zero);
        std::copy(m.vertices.values().begin(), m.vertices.values().end(), out.row(i).begin());
    });
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sum of per-vertex norms in millimeters, abandoned (returning +inf) once it exceeds bound.
// The accumulation order matches vertex_distance_mm, so completed sums agree bit for bit.
double abandoning_sum(std::span<const double> a, std::span<const double> b, double bound) {
    const std::size_t nv = a.size() / 3;
    double sum = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
        const double dx = 1000.0 * (a[3 * v] - b[3 * v]);
        const double dy = 1000.0 * (a[3 * v + 1] - b[3 * v + 1]);
        const double dz = 1000.0 * (a[3 * v + 2] - b[3 * v + 2]);
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
        if ((v & 15) == 15 && sum > bound) return kInf;
    }
    return sum;
}

// Running best per query while pool blocks stream past in index order.
struct NnState {
    std::vector<double> best_sum;
    std::vector<std::size_t> best_index;

    explicit NnState(std::size_t n) : best_sum(n, kInf), best_index(n, 0) {}

    void scan(const Tensor2& queries, const Tensor2& block, std::size_t offset, bool parallel) {
        constexpr std::size_t kQueryBlock = 16;
        const std::size_t nq = queries.rows();
        const std::size_t blocks = (nq + kQueryBlock - 1) / kQueryBlock;
        auto work = [&](std::size_t qb) {
            const std::size_t q_end = std::min(nq, (qb + 1) * kQueryBlock);
            for (std::size_t p = 0; p < block.rows(); ++p) {
                for (std::size_t q = qb * kQueryBlock; q < q_end; ++q) {
                    const double s = abandoning_sum(queries.row(q), block.row(p), best_sum[q]);
                    if (s < best_sum[q]) {
                        best_sum[q] = s;
                        best_index[q] = offset + p;
                    }
                }
            }
        };
        if (parallel) {
            parallel_for(blocks, work);
        } else {
            for (std::size_t qb = 0; qb < blocks; ++qb) work(qb);
        }
    }

    std::vector<NnResult> results(std::size_t vertices) const {
        std::vector<NnResult> out(best_sum.size());
        for (std::size_t q = 0; q < out.size(); ++q) {
            out[q] = {q, best_index[q], best_sum[q] / static_cast<double>(vertices)};
        }
        return out;
    }
};

void check_nn_inputs(const Tensor2& queries, const Tensor2& pool) {
    if (pool.rows() == 0) throw ConfigError("nearest neighbors: empty pool");
    if (queries.cols() != pool.cols() || pool.cols() % 3 != 0 || pool.cols() == 0) {
        throw ShapeError("nearest neighbors: queries and pool must share a vertex layout");
    }
}

Tensor2 slice_rows(const Tensor2& t, std::size_t begin, std::size_t end) {
    std::vector<double> data(t.values().begin() + static_cast<std::ptrdiff_t>(begin * t.cols()),
                             t.values().begin() + static_cast<std::ptrdiff_t>(end * t.cols()));
    return Tensor2(end - begin, t.cols(), std::move(data));
}

} // namespace

std::vector<NnResult> nearest_neighbors(const Tensor2& queries, const Tensor2& pool, const NnOptions& options) {
    check_nn_inputs(queries, pool);
    const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
    NnState state(queries.rows());
    for (std::size_t begin = 0; begin < pool.rows(); begin += chunk) {
        const std::size_t end = std::min(pool.rows(), begin + chunk);
        state.scan(queries, slice_rows(pool, begin, end), begin, options.parallel);
    }
    return state.results(pool.cols() / 3);
}

std::vector<NnResult> nearest_neighbors_brute(const Tensor2& queries, const Tensor2& pool) {
    check_nn_inputs(queries, pool);
    std::vector<NnResult> out(queries.rows());
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        out[q] = {q, 0, kInf};
        for (std::size_t p = 0; p < pool.rows(); ++p) {
            const double d = vertex_distance_mm(queries.row(q), pool.row(p));
            if (d < out[q].distance_mm) out[q] = {q, p, d};
        }
    }
    return out;
}

ManifoldOracle::ManifoldOracle(const ManifoldSpec& spec, const KinematicTree& tree, std::size_t samples,
                               std::uint64_t seed)
    : tree_(&tree) {
    if (spec.config.joints != tree.joint_count()) throw ShapeError("ManifoldOracle: manifold and body joint counts differ");
    meshes_ = pose_meshes(tree, sample_corpus(spec, samples, derive_seed(seed, "oracle"), Split::train).poses);
}

double ManifoldOracle::distance_mm(const PoseVector& pose) const {
    const Tensor2 q = pose_meshes(*tree_, row_tensor(pose.values));
    return nearest_neighbors(q, meshes_, {4096, false}).front().distance_mm;
}

// ---------------------------------------------------------------------------

DistanceStats distance_stats(std::vector<double> v) {
    DistanceStats s;
    s.n = v.size();
    if (v.empty()) return s;
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / n);
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    s.median = v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    return s;
}

std::vector<CurvePoint> cumulative_curve(std::vector<double> d, std::size_t max_points) {
    std::vector<CurvePoint> curve;
    if (d.empty()) return curve;
    std::sort(d.begin(), d.end());
    const double n = static_cast<double>(d.size());
    // Last index of each distinct value gives P(dist <= value).
    std::vector<std::size_t> ends;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i + 1 == d.size() || d[i + 1] != d[i]) ends.push_back(i);
    }
    max_points = std::max<std::size_t>(max_points, 2);
    if (ends.size() > max_points) {
        std::vector<std::size_t> picked;
        for (std::size_t k = 0; k < max_points; ++k) {
            picked.push_back(ends[(k * (ends.size() - 1)) / (max_points - 1)]);
        }
        picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
        ends = std::move(picked);
    }
    for (std::size_t e : ends) curve.push_back({d[e], static_cast<double>(e + 1) / n});
    return curve;
}

std::string to_string(Direction d) { return d == Direction::recall ? "recall" : "precision"; }

Tensor2 prior_pose_samples(const Checkpoint& prior, std::size_t n, std::uint64_t seed) {
    if (!prior.layout.has_pose()) throw ConfigError("prior '" + prior.prior_name + "' does not generate poses");
    const Tensor2 all = sample_params(prior, n, seed);
    if (all.cols() == prior.layout.pose_dim()) return all;
    Tensor2 out(n, prior.layout.pose_dim());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(all.row(i).begin(), out.cols(), out.row(i).begin());
    }
    return out;
}

void require_same_manifold(const Checkpoint& prior, const PoseCorpus& corpus) {
    if (prior.corpus_fingerprint.empty() || corpus.fingerprint.empty()) return;
    if (prior.corpus_fingerprint != corpus.fingerprint) {
        throw ConsistencyError("prior '" + prior.prior_name + "' was trained on manifold " + prior.corpus_fingerprint +
                               " but the corpus comes from " + corpus.fingerprint);
    }
}

namespace {

constexpr std::size_t kStreamChunk = 4096;

void check_compatible(const Checkpoint& prior, const KinematicTree& tree, const PoseCorpus& corpus) {
    if (!prior.layout.has_pose()) throw ConfigError("prior '" + prior.prior_name + "' does not generate poses");
    if (prior.layout.joints != tree.joint_count() || corpus.joints() != tree.joint_count()) {
        throw ShapeError("prior, body and corpus disagree on the joint count");
    }
    require_same_manifold(prior, corpus);
}

void fill_report(CoverageReport& r, const std::vector<NnResult>& matches, std::size_t worst_k) {
    std::vector<double> d(matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) d[i] = matches[i].distance_mm;
    r.stats = distance_stats(d);
    r.curve = cumulative_curve(d);
    r.matches = matches;
    if (worst_k > 0) {
        std::vector<std::size_t> order(matches.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
        order.resize(std::min(worst_k, order.size()));
        r.worst = std::move(order);
    }
}

} // namespace

CoverageReport recall_experiment(const Checkpoint& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                 const CoverageConfig& config) {
    check_compatible(prior, tree, corpus);
    if (config.n_fakes == 0) throw ConfigError("recall: empty fake pool");
    if (config.n_queries == 0) throw ConfigError("recall: no queries");
    // Queries: a seeded subset of the corpus (all of it when it is smaller).
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(config.seed, "recall-queries"));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(config.n_queries, idx.size()));
    std::sort(idx.begin(), idx.end());
    Tensor2 qposes(idx.size(), corpus.poses.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(corpus.poses.row(idx[i]).begin(), qposes.cols(), qposes.row(i).begin());
    const Tensor2 queries = pose_meshes(tree, qposes);

    NnState state(queries.rows());
    for (std::size_t begin = 0, c = 0; begin < config.n_fakes; begin += kStreamChunk, ++c) {
        const std::size_t n = std::min(kStreamChunk, config.n_fakes - begin);
        const Tensor2 fakes = pose_meshes(tree, prior_pose_samples(prior, n, derive_seed(config.seed, "fakes", c)));
        state.scan(queries, fakes, begin, true);
    }
    CoverageReport r;
    r.direction = Direction::recall;
    r.split = corpus.split;
    r.prior = prior.prior_name;
    r.n_fakes = config.n_fakes;
    r.n_queries = queries.rows();
    r.prior_fingerprint = prior.params_hash();
    r.corpus_fingerprint = corpus.fingerprint;
    auto matches = state.results(tree.vertex_count());
    for (auto& m : matches) m.query = idx[m.query];
    fill_report(r, matches, 0);
    return r;
}

CoverageReport precision_experiment(const Checkpoint& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                    const CoverageConfig& config) {
    check_compatible(prior, tree, corpus);
    if (config.n_fakes == 0) throw ConfigError("precision: no generated samples");
    const Tensor2 pool = pose_meshes(tree, corpus.poses);
    std::vector<NnResult> matches;
    matches.reserve(config.n_fakes);
    for (std::size_t begin = 0, c = 0; begin < config.n_fakes; begin += kStreamChunk, ++c) {
        const std::size_t n = std::min(kStreamChunk, config.n_fakes - begin);
        const Tensor2 fakes = pose_meshes(tree, prior_pose_samples(prior, n, derive_seed(config.seed, "fakes", c)));
        for (auto m : nearest_neighbors(fakes, pool)) {
            m.query += begin;
            matches.push_back(m);
        }
    }
    CoverageReport r;
    r.direction = Direction::precision;
    r.split = corpus.split;
    r.prior = prior.prior_name;
    r.n_fakes = config.n_fakes;
    r.n_queries = config.n_fakes;
    r.prior_fingerprint = prior.params_hash();
    r.corpus_fingerprint = corpus.fingerprint;
    fill_report(r, matches, config.worst_k);
    return r;
}

CoverageReport coverage_from_poses(Direction direction, const KinematicTree& tree, const Tensor2& queries,
                                   const Tensor2& pool, std::size_t worst_k) {
    CoverageReport r;
    r.direction = direction;
    r.n_queries = queries.rows();
    r.n_fakes = direction == Direction::recall ? pool.rows() : queries.rows();
    fill_report(r, nearest_neighbors(pose_meshes(tree, queries), pose_meshes(tree, pool)), worst_k);
    return r;
}

// ---------------------------------------------------------------------------

double smoothness_ratio(std::span<const double> delta) {
    if (delta.empty()) return 1.0;
    const auto [lo, hi] = std::minmax_element(delta.begin(), delta.end());
    if (*hi == 0.0) return 1.0;
    if (*lo == 0.0) return kInf;
    return *hi / *lo;
}

InterpolationRecord record_from_path(const Tensor2& path, std::size_t pair_id) {
    if (path.rows() < 2) throw ConfigError("interpolation path needs at least two meshes");
    InterpolationRecord r;
    r.pair_id = pair_id;
    r.steps = path.rows() - 1;
    for (std::size_t i = 0; i + 1 < path.rows(); ++i) r.delta.push_back(vertex_distance_mm(path.row(i), path.row(i + 1)));
    const double unit = vertex_distance_mm(path.row(0), path.row(r.steps)) / static_cast<double>(r.steps);
    for (double d : r.delta) r.normalized.push_back(unit > 0.0 ? d / unit : (d == 0.0 ? 0.0 : kInf));
    r.ratio = smoothness_ratio(r.delta);
    return r;
}

InterpolationSequence make_interpolation_sequence(const Generator& prior, const KinematicTree& tree,
                                                  const LatentVector& z0, const LatentVector& zT, std::size_t steps,
                                                  std::size_t pair_id) {
    if (steps < 2) throw ConfigError("interpolation needs T >= 2");
    if (!(z0.space == prior.latent) || !(zT.space == prior.latent)) {
        throw SpaceError("interpolation endpoints are not in the prior's latent space");
    }
    if (!prior.layout.has_pose() || prior.layout.joints != tree.joint_count()) {
        throw ShapeError("interpolation: prior does not match the body");
    }
    InterpolationSequence s;
    s.poses = Tensor2(steps + 1, prior.layout.pose_dim());
    for (std::size_t t = 0; t <= steps; ++t) {
        s.latents.push_back(interpolate(z0, zT, static_cast<double>(t), static_cast<double>(steps)));
        // One row at a time: equal latents must give bit-identical poses.
        const Tensor2 out = generate_batch(prior, row_tensor(s.latents.back().values));
        std::copy_n(out.row(0).begin(), s.poses.cols(), s.poses.row(t).begin());
    }
    s.vertices = pose_meshes(tree, s.poses);
    s.record = record_from_path(s.vertices, pair_id);
    return s;
}

SmoothnessReport summarize_records(std::vector<InterpolationRecord> records) {
    SmoothnessReport rep;
    std::vector<double> ratios;
    for (const auto& r : records) {
        if (std::isfinite(r.ratio)) ratios.push_back(r.ratio);
    }
    rep.ratio_stats = distance_stats(ratios);
    if (!records.empty()) {
        const std::size_t T = records.front().steps;
        rep.mean_normalized.assign(T, 0.0);
        std::size_t used = 0;
        for (const auto& r : records) {
            if (r.steps != T) continue;
            bool finite = true;
            for (double v : r.normalized) finite = finite && std::isfinite(v);
            if (!finite) continue;
            for (std::size_t i = 0; i < T; ++i) rep.mean_normalized[i] += r.normalized[i];
            ++used;
        }
        if (used > 0) {
            for (double& v : rep.mean_normalized) v /= static_cast<double>(used);
        }
    }
    rep.records = std::move(records);
    return rep;
}

SmoothnessReport smoothness_experiment(const Checkpoint& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                       const SmoothnessConfig& config) {
    check_compatible(prior, tree, corpus);
    const Generator& g = prior.require_generator();
    if (config.n_pairs == 0) throw ConfigError("smoothness: n_pairs must be positive");
    if (corpus.size() < 2 * config.n_pairs) throw ConfigError("smoothness: corpus has fewer than 2 * n_pairs poses");
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(config.seed, "smoothness-pairs"));
    std::shuffle(idx.begin(), idx.end(), rng);

    struct PairOutcome {
        bool ok = false;
        std::string failure;
        InterpolationRecord record;
        double fit0 = 0.0, fit1 = 0.0;
    };
    std::vector<PairOutcome> outcomes(config.n_pairs);
    const ShapeVector zero = ShapeVector::zeros(tree.shape_dim());
    parallel_for(config.n_pairs, [&](std::size_t i) {
        auto& o = outcomes[i];
        try {
            auto target = [&](std::size_t row) { return skin(tree, corpus.pose(row), zero).vertices; };
            const auto a = fit_mesh_target(g, tree, target(idx[2 * i]), config.fit, config.fit_restarts,
                                           derive_seed(config.seed, "endpoint", 2 * i));
            const auto b = fit_mesh_target(g, tree, target(idx[2 * i + 1]), config.fit, config.fit_restarts,
                                           derive_seed(config.seed, "endpoint", 2 * i + 1));
            if (!std::isfinite(a.distance_mm) || !std::isfinite(b.distance_mm)) throw NumericsError("endpoint fit diverged");
            o.record = make_interpolation_sequence(g, tree, a.z, b.z, config.steps, i).record;
            o.fit0 = a.distance_mm;
            o.fit1 = b.distance_mm;
            o.ok = true;
        } catch (const Error& e) {
            o.failure = "pair " + std::to_string(i) + ": " + e.what();
        }
    });
    std::vector<InterpolationRecord> records;
    std::vector<double> fits;
    std::vector<std::string> failures;
    for (auto& o : outcomes) {
        if (o.ok) {
            records.push_back(std::move(o.record));
            fits.push_back(o.fit0);
            fits.push_back(o.fit1);
        } else {
            failures.push_back(std::move(o.failure));
        }
    }
    SmoothnessReport rep = summarize_records(std::move(records));
    rep.prior = prior.prior_name;
    rep.endpoint_fit_mm = std::move(fits);
    rep.requested_pairs = config.n_pairs;
    rep.failed_pairs = failures.size();
    rep.failures = std::move(failures);
    rep.prior_fingerprint = prior.params_hash();
    rep.corpus_fingerprint = corpus.fingerprint;
    return rep;
}

// ---------------------------------------------------------------------------

ScatterResult project_2d_scatter(const Tensor2& real, const Tensor2& fake) {
    if (real.rows() == 0) throw ConfigError("scatter: no real samples");
    if (fake.rows() > 0 && fake.cols() != real.cols()) throw ShapeError("scatter: real and fake widths differ");
    const std::size_t D = real.cols();
    if (D < 2) throw ShapeError("scatter: need at least two dimensions");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D));
    for (std::size_t i = 0; i < real.rows(); ++i) {
        for (std::size_t j = 0; j < D; ++j) mean[static_cast<Eigen::Index>(j)] += real(i, j);
    }
    mean /= static_cast<double>(real.rows());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
    for (std::size_t i = 0; i < real.rows(); ++i) {
        Eigen::VectorXd x(static_cast<Eigen::Index>(D));
        for (std::size_t j = 0; j < D; ++j) x[static_cast<Eigen::Index>(j)] = real(i, j) - mean[static_cast<Eigen::Index>(j)];
        cov.noalias() += x * x.transpose();
    }
    ScatterResult res;
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D), 2);
    bool degenerate = real.rows() < 3;
    if (!degenerate) {
        cov /= static_cast<double>(real.rows());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        const auto& ev = eig.eigenvalues(); // ascending
        const Eigen::Index n = ev.size();
        if (!(ev[n - 2] > 1e-12 * std::max(1.0, ev[n - 1]))) {
            degenerate = true;
        } else {
            basis.col(0) = eig.eigenvectors().col(n - 1);
            basis.col(1) = eig.eigenvectors().col(n - 2);
        }
    }
    if (degenerate) {
        res.warnings.push_back("degenerate covariance; using the first two coordinates");
        basis(0, 0) = 1.0;
        basis(1, 1) = 1.0;
    } else {
        for (int c = 0; c < 2; ++c) {
            Eigen::Index arg = 0;
            basis.col(c).cwiseAbs().maxCoeff(&arg);
            if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
        }
    }
    auto apply = [&](const Tensor2& t) {
        Tensor2 out(t.rows(), 2);
        for (std::size_t i = 0; i < t.rows(); ++i) {
            for (int c = 0; c < 2; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < D; ++j) {
                    s += (t(i, j) - mean[static_cast<Eigen::Index>(j)]) * basis(static_cast<Eigen::Index>(j), c);
                }
                out(i, static_cast<std::size_t>(c)) = s;
            }
        }
        return out;
    };
    res.real = apply(real);
    res.fake = apply(fake);
    return res;
}

} // namespace appp
