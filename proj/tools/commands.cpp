#include "commands.hpp"

#include "run_dir.hpp"

#include "appp/body_model.hpp"
#include "appp/errors.hpp"
#include "appp/evaluation.hpp"
#include "appp/latent_fit.hpp"
#include "appp/pose_corpus.hpp"
#include "appp/prior_models.hpp"
#include "appp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;

namespace appp::cli {

namespace {

const KinematicTree& body() {
    static const KinematicTree tree = build_body();
    return tree;
}

void note_body(RunDir& run) { run.inputs()["body_fingerprint"] = body().fingerprint(); }

// A corpus argument is either a directory written by `corpus` or a single .bin file.
std::string corpus_file(const std::string& arg, const std::string& split) {
    if (fs::is_directory(arg)) return (fs::path(arg) / (split + ".bin")).string();
    return arg;
}

PoseCorpus load_corpus(RunDir& run, const std::string& arg, const std::string& split) {
    const std::string path = corpus_file(arg, split);
    const std::string bytes = read_file(path);
    PoseCorpus corpus = corpus_from_bytes(bytes);
    run.inputs()["corpus"] = {{"path", path},
                              {"split", to_string(corpus.split)},
                              {"size", corpus.size()},
                              {"manifold_fingerprint", corpus.fingerprint},
                              {"file_hash", bytes_hash(bytes)}};
    return corpus;
}

Checkpoint load_prior(RunDir& run, const std::string& path) {
    const std::string bytes = read_file(path);
    Checkpoint ckpt = checkpoint_from_json(bytes);
    run.inputs()["checkpoint"] = {{"path", path},
                                  {"prior", ckpt.prior_name},
                                  {"params_hash", ckpt.params_hash()},
                                  {"config_hash", ckpt.config_hash},
                                  {"manifold_fingerprint", ckpt.corpus_fingerprint},
                                  {"file_hash", bytes_hash(bytes)}};
    return ckpt;
}

json stats_json(const DistanceStats& s) {
    return {{"mean", s.mean}, {"std", s.std}, {"median", s.median}, {"n", s.n}};
}

json adam_json(const AdamConfig& a) {
    return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

json sizes_json(const std::vector<std::size_t>& v) { return json(v); }

std::string loss_csv(const std::vector<LossRecord>& trace) {
    std::string out = "step,loss_name,value\n";
    for (const auto& r : trace) out += std::to_string(r.step) + "," + r.name + "," + num(r.value) + "\n";
    return out;
}

std::string pose_header(const ParamLayout& layout) {
    std::string h;
    for (std::size_t k = 0; k < layout.pose_dim() / 3; ++k) {
        for (const char* c : {"x", "y", "z"}) h += (h.empty() ? "" : ",") + ("joint_" + std::to_string(k) + "_") + c;
    }
    if (layout.has_shape()) {
        for (std::size_t b = 0; b < layout.shape_dim; ++b) h += (h.empty() ? "" : ",") + ("shape_" + std::to_string(b));
    }
    return h + "\n";
}

std::string rows_csv(const std::string& header, const Tensor2& t) {
    std::string out = header;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const auto r = t.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out += (j ? "," : "") + num(r[j]);
        out += "\n";
    }
    return out;
}

std::string vertices_csv(const Tensor2& v) { return rows_csv("x,y,z\n", v); }

// Parses a numeric CSV with a header line. Every row must have `cols` fields (or min_cols..cols).
std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::size_t min_cols, std::size_t cols) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line); // header
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(field, &used));
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": not a number: '" + field + "'");
            }
        }
        if (row.size() < min_cols || row.size() > cols) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) + " fields");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

LatentKind latent_for(const std::string& prior) {
    if (prior == "gan-s") return LatentKind::spherical;
    if (prior == "gan-u") return LatentKind::uniform;
    return LatentKind::normal;
}

std::string kind_name(LatentKind k) { return to_string(k); }

} // namespace

// ---------------------------------------------------------------------------

void cmd_corpus(const Global& g, const CorpusArgs& a) {
    const Preset p = preset_for(g.scale);
    const std::size_t n_train = a.n_train.value_or(p.n_train);
    const std::size_t n_test = a.n_test.value_or(p.n_test);
    if (n_train == 0 || n_test == 0) throw ConfigError("corpus sizes must be positive");

    RunDir run(a.out, "corpus", g.scale, g.seed);
    ManifoldConfig mc;
    mc.intrinsic_dim = a.intrinsic_dim;
    mc.joints = body().joint_count();
    const ManifoldSpec spec = build_manifold(g.seed, mc);
    run.config() = {{"n_train", n_train},     {"n_test", n_test},     {"intrinsic_dim", mc.intrinsic_dim},
                    {"joints", mc.joints},     {"hidden", mc.hidden},  {"blobs", mc.blobs},
                    {"blob_spread", mc.blob_spread}, {"blob_sigma", mc.blob_sigma}, {"csv", a.csv}};
    note_body(run);

    for (const auto& [split, n] : {std::pair{Split::train, n_train}, std::pair{Split::test, n_test}}) {
        const PoseCorpus corpus = sample_corpus(spec, n, g.seed, split);
        const std::string name = to_string(split);
        run.write(name + ".bin", corpus_to_bytes(corpus));
        if (a.csv) {
            write_corpus_csv(corpus, run.path(name + ".csv"));
            run.record(name + ".csv");
        }
    }
    const json manifold = {{"seed", g.seed},
                           {"intrinsic_dim", mc.intrinsic_dim},
                           {"joints", mc.joints},
                           {"hidden", mc.hidden},
                           {"blobs", mc.blobs},
                           {"blob_spread", mc.blob_spread},
                           {"blob_sigma", mc.blob_sigma},
                           {"fingerprint", spec.fingerprint()}};
    run.write("manifold.json", manifold.dump(2) + "\n");
    run.results()["manifold_fingerprint"] = spec.fingerprint();
    run.finish();
    std::cout << "corpus " << spec.fingerprint() << ": " << n_train << " train, " << n_test << " test -> " << a.out
              << "\n";
}

// ---------------------------------------------------------------------------

void cmd_train(const Global& g, const TrainArgs& a) {
    const Preset p = preset_for(g.scale);
    RunDir run(a.out, "train", g.scale, g.seed);
    const PoseCorpus corpus = load_corpus(run, a.corpus, "train");
    note_body(run);
    ParamLayout layout{param_space_from_string(a.layout), body().joint_count(), body().shape_dim()};
    const TrainingData data = make_training_data(corpus, layout, derive_seed(g.seed, "shapes"));

    const std::size_t batch = a.batch.value_or(p.batch_size);
    const std::size_t dim = a.latent_dim.value_or(p.latent_dim);
    json& c = run.config();
    c["prior"] = a.prior;
    c["layout"] = a.layout;

    TrainResult result;
    if (a.prior == "gmm") {
        GmmTrainConfig gc;
        gc.components = a.components.value_or(p.gmm_components);
        gc.max_iterations = a.steps.value_or(200);
        gc.seed = g.seed;
        c["components"] = gc.components;
        c["max_iterations"] = gc.max_iterations;
        result = train_gmm(gc, data, layout);
    } else if (a.prior == "vae") {
        VaeTrainConfig vc;
        vc.latent = {LatentKind::normal, dim};
        vc.layout = layout;
        vc.hidden = p.vae_hidden;
        vc.kl_weight = a.kl_weight;
        vc.batch_size = batch;
        vc.steps = a.steps.value_or(p.vae_steps);
        vc.seed = g.seed;
        c["latent"] = {{"kind", "normal"}, {"dim", dim}};
        c["hidden"] = sizes_json(vc.hidden);
        c["kl_weight"] = vc.kl_weight;
        c["batch_size"] = batch;
        c["steps"] = vc.steps;
        c["adam"] = adam_json(vc.adam);
        result = train_vae(vc, data);
    } else {
        GanTrainConfig gc;
        gc.latent = {latent_for(a.prior), dim};
        gc.layout = layout;
        gc.generator_hidden = p.generator_hidden;
        gc.discriminator_hidden = p.discriminator_hidden;
        gc.d_steps_per_g_step = a.d_steps;
        gc.batch_size = batch;
        gc.generator_steps = a.steps.value_or(p.gan_steps);
        gc.seed = g.seed;
        c["latent"] = {{"kind", kind_name(gc.latent.kind)}, {"dim", dim}};
        c["generator_hidden"] = sizes_json(gc.generator_hidden);
        c["discriminator_hidden"] = sizes_json(gc.discriminator_hidden);
        c["d_steps_per_g_step"] = gc.d_steps_per_g_step;
        c["batch_size"] = batch;
        c["generator_steps"] = gc.generator_steps;
        c["generator_adam"] = adam_json(gc.generator_adam);
        c["discriminator_adam"] = adam_json(gc.discriminator_adam);
        try {
            result = train_gan(gc, data, a.prior);
        } catch (const TrainingAborted& e) {
            save_checkpoint(e.last_good(), run.path("checkpoint_last_good.json"));
            run.record("checkpoint_last_good.json");
            run.write("loss.csv", loss_csv(e.trace()));
            run.results()["last_good_generator_updates"] = e.last_good().generator_updates;
            run.results()["error"] = e.what();
            run.finish("aborted");
            throw;
        }
        const Checkpoint& ck = result.checkpoint;
        run.results()["schedule"] = {
            {"d_steps_per_g_step", gc.d_steps_per_g_step},
            {"generator_updates", ck.generator_updates},
            {"discriminator_updates", ck.discriminator_updates},
            {"consistent", ck.discriminator_updates == gc.d_steps_per_g_step * ck.generator_updates &&
                               ck.generator_updates == gc.generator_steps}};
    }

    save_checkpoint(result.checkpoint, run.path("checkpoint.json"));
    run.record("checkpoint.json");
    run.write("loss.csv", loss_csv(result.trace));

    if (a.prior == "gmm") {
        std::string em = "iteration,log_likelihood\n";
        bool monotone = true;
        double prev = -std::numeric_limits<double>::infinity();
        std::size_t i = 0;
        for (const auto& r : result.trace) {
            em += std::to_string(i++) + "," + num(r.value) + "\n";
            monotone = monotone && r.value >= prev - 1e-10 * std::max(1.0, std::abs(prev));
            prev = r.value;
        }
        run.write("em_log_likelihood.csv", em);
        run.results()["em_monotone"] = monotone;
        run.results()["em_iterations"] = result.trace.size();
    } else {
        std::vector<SvgSeries> series;
        for (const auto& r : result.trace) {
            auto it = std::find_if(series.begin(), series.end(), [&](const SvgSeries& s) { return s.name == r.name; });
            if (it == series.end()) it = series.insert(series.end(), SvgSeries{r.name, {}, {}});
            it->x.push_back(static_cast<double>(r.step));
            it->y.push_back(r.value);
        }
        run.write("loss.svg", svg_plot(a.prior + " training", "step", "loss", series));
    }
    run.results()["params_hash"] = result.checkpoint.params_hash();
    run.results()["config_hash"] = result.checkpoint.config_hash;
    run.results()["manifold_fingerprint"] = result.checkpoint.corpus_fingerprint;
    run.finish();
    std::cout << "trained " << a.prior << " (params " << result.checkpoint.params_hash() << ") -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------

void cmd_sample(const Global& g, const SampleArgs& a) {
    if (a.n == 0) throw ConfigError("--n must be positive");
    RunDir run(a.out, "sample", g.scale, g.seed);
    const Checkpoint ckpt = load_prior(run, a.checkpoint);
    note_body(run);
    run.config() = {{"n", a.n}, {"meshes", a.meshes}};

    const Tensor2 params = sample_params(ckpt, a.n, derive_seed(g.seed, "sample"));
    run.write("samples.csv", rows_csv(pose_header(ckpt.layout), params));

    std::size_t outside = 0;
    for (std::size_t i = 0; i < params.rows(); ++i) {
        for (std::size_t j = 0; j < ckpt.layout.pose_dim(); ++j) {
            const double v = params(i, j);
            if (!(v > -std::numbers::pi && v < std::numbers::pi)) ++outside;
        }
    }
    run.results()["n"] = params.rows();
    run.results()["pose_components_outside_open_bounds"] = outside;

    if (a.meshes) {
        if (!ckpt.layout.has_pose()) throw ConfigError("--meshes needs a prior that generates poses");
        Tensor2 verts(params.rows(), 3 * body().vertex_count());
        for (std::size_t i = 0; i < params.rows(); ++i) {
            const auto r = params.row(i);
            const PoseVector pose(std::vector<double>(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(ckpt.layout.pose_dim())));
            ShapeVector shape = ShapeVector::zeros(body().shape_dim());
            if (ckpt.layout.has_shape()) {
                std::copy(r.begin() + static_cast<std::ptrdiff_t>(ckpt.layout.pose_dim()), r.end(), shape.values.begin());
            }
            const BodyMesh m = skin(body(), pose, shape);
            std::copy(m.vertices.values().begin(), m.vertices.values().end(), verts.row(i).begin());
        }
        std::string header;
        for (std::size_t v = 0; v < body().vertex_count(); ++v) {
            for (const char* c : {"x", "y", "z"}) header += (header.empty() ? "" : ",") + ("v" + std::to_string(v) + "_") + c;
        }
        run.write("vertices.csv", rows_csv(header + "\n", verts));
    }
    run.finish();
    std::cout << "sampled " << params.rows() << " from " << ckpt.prior_name << " -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------

void cmd_interp(const Global& g, const InterpArgs& a) {
    if (a.pairs == 0) throw ConfigError("--pairs must be positive");
    if (a.steps < 2) throw ConfigError("--steps must be at least 2");
    RunDir run(a.out, "interp", g.scale, g.seed);
    const Checkpoint ckpt = load_prior(run, a.checkpoint);
    if (!a.corpus.empty()) require_same_manifold(ckpt, load_corpus(run, a.corpus, "test"));
    note_body(run);
    run.config() = {{"pairs", a.pairs}, {"steps", a.steps}, {"dump_paths", a.dump_paths}};

    const Generator& gen = ckpt.require_generator();
    std::vector<InterpolationRecord> records;
    for (std::size_t i = 0; i < a.pairs; ++i) {
        const LatentVector z0 = sample(gen.latent, derive_seed(g.seed, "interp-start", i));
        const LatentVector zT = sample(gen.latent, derive_seed(g.seed, "interp-end", i));
        auto seq = make_interpolation_sequence(gen, body(), z0, zT, a.steps, i);
        if (a.dump_paths) run.write("path_" + std::to_string(i) + ".csv", rows_csv(pose_header(gen.layout), seq.poses));
        records.push_back(std::move(seq.record));
    }
    SmoothnessReport rep = summarize_records(records);
    rep.prior = ckpt.prior_name;
    run.write("records.csv", interpolation_csv(rep.records));
    run.write("summary.csv", smoothness_csv(rep));
    run.write("normalized.csv", normalized_curve_csv(rep.mean_normalized));
    std::vector<double> steps(rep.mean_normalized.size());
    for (std::size_t t = 0; t < steps.size(); ++t) steps[t] = static_cast<double>(t);
    run.write("normalized.svg", svg_plot("normalized transitions, " + ckpt.prior_name, "step", "delta / mean delta",
                                         {{ckpt.prior_name, steps, rep.mean_normalized}}));
    run.results()["ratio"] = stats_json(rep.ratio_stats);
    run.results()["records"] = rep.records.size();
    run.finish();
    std::cout << "interpolated " << rep.records.size() << " pairs, median ratio " << rep.ratio_stats.median << " -> "
              << a.out << "\n";
}

// ---------------------------------------------------------------------------

namespace {

void eval_coverage(const Global& g, const EvalArgs& a, RunDir& run, const Checkpoint& ckpt, const PoseCorpus& corpus) {
    const Preset p = preset_for(g.scale);
    CoverageConfig cc;
    cc.n_fakes = a.n_fakes.value_or(p.n_fakes);
    cc.n_queries = a.n_queries.value_or(p.n_queries);
    cc.seed = g.seed;
    run.config() = {{"metric", a.metric}, {"split", a.split}, {"n_fakes", cc.n_fakes}, {"worst_k", cc.worst_k}};
    if (a.metric == "recall") run.config()["n_queries"] = cc.n_queries;

    const CoverageReport rep = a.metric == "recall" ? recall_experiment(ckpt, body(), corpus, cc)
                                                    : precision_experiment(ckpt, body(), corpus, cc);
    run.write("coverage.csv", coverage_csv_header() + coverage_csv_row(rep));
    run.write("curve.csv", curve_csv(rep.curve));
    SvgSeries s{ckpt.prior_name, {}, {}};
    for (const auto& pt : rep.curve) {
        s.x.push_back(pt.epsilon);
        s.y.push_back(pt.probability);
    }
    run.write("curve.svg", svg_plot(a.metric + ", " + to_string(corpus.split) + " split", "epsilon (mm)",
                                    "fraction within epsilon", {s}));
    if (a.metric == "recall") {
        std::string m = "query,match,distance_mm\n";
        for (const auto& r : rep.matches) m += std::to_string(r.query) + "," + std::to_string(r.match) + "," + num(r.distance_mm) + "\n";
        run.write("matches.csv", m);
    } else {
        std::string w = "fake,match,distance_mm\n";
        for (std::size_t i : rep.worst) {
            const auto& r = rep.matches[i];
            w += std::to_string(r.query) + "," + std::to_string(r.match) + "," + num(r.distance_mm) + "\n";
        }
        run.write("worst.csv", w);
    }
    run.results()["distance_mm"] = stats_json(rep.stats);
    run.results()["table_cell"] = coverage_table_cell(rep);
    run.results()["full_scale_counts"] = {{"n_fakes", rep.full_scale_n_fakes}, {"n_queries", rep.full_scale_n_queries}};
    std::cout << a.metric << " " << ckpt.prior_name << ": " << coverage_table_cell(rep) << " mm\n";
}

void eval_smoothness(const Global& g, const EvalArgs& a, RunDir& run, const Checkpoint& ckpt, const PoseCorpus& corpus) {
    SmoothnessConfig sc;
    sc.n_pairs = a.pairs;
    sc.steps = a.steps;
    sc.fit_restarts = a.restarts;
    sc.fit = {40, a.fit_iterations};
    sc.seed = g.seed;
    run.config() = {{"metric", a.metric},       {"split", a.split},
                    {"pairs", sc.n_pairs},      {"steps", sc.steps},
                    {"fit_restarts", sc.fit_restarts},
                    {"fit", {{"memory", sc.fit.memory}, {"max_iterations", sc.fit.max_iterations}}}};
    const SmoothnessReport rep = smoothness_experiment(ckpt, body(), corpus, sc);
    run.write("smoothness.csv", smoothness_csv(rep));
    run.write("records.csv", interpolation_csv(rep.records));
    run.write("normalized.csv", normalized_curve_csv(rep.mean_normalized));
    std::vector<double> steps(rep.mean_normalized.size());
    for (std::size_t t = 0; t < steps.size(); ++t) steps[t] = static_cast<double>(t);
    run.write("normalized.svg", svg_plot("normalized transitions, " + ckpt.prior_name, "step", "delta / mean delta",
                                         {{ckpt.prior_name, steps, rep.mean_normalized}}));
    run.results()["ratio"] = stats_json(rep.ratio_stats);
    run.results()["failed_pairs"] = rep.failed_pairs;
    run.results()["failures"] = rep.failures;
    run.results()["endpoint_fit_mm"] = rep.endpoint_fit_mm;
    std::cout << "smoothness " << ckpt.prior_name << ": median ratio " << rep.ratio_stats.median << " over "
              << rep.ratio_stats.n << " pairs\n";
}

void eval_scatter(const Global& g, const EvalArgs& a, RunDir& run, const Checkpoint& ckpt, const PoseCorpus& corpus) {
    const std::size_t n_real = std::min(a.scatter_n, corpus.size());
    run.config() = {{"metric", a.metric}, {"split", a.split}, {"n_real", n_real}, {"n_fake", a.scatter_n}};
    Tensor2 real(n_real, corpus.poses.cols());
    for (std::size_t i = 0; i < n_real; ++i) std::copy_n(corpus.poses.row(i).begin(), real.cols(), real.row(i).begin());
    const Tensor2 fake = prior_pose_samples(ckpt, a.scatter_n, derive_seed(g.seed, "scatter"));
    const ScatterResult s = project_2d_scatter(real, fake);
    std::string csv = "set,x,y\n";
    SvgSeries rs{"real", {}, {}}, fs_{ckpt.prior_name, {}, {}};
    for (std::size_t i = 0; i < s.real.rows(); ++i) {
        csv += "real," + num(s.real(i, 0)) + "," + num(s.real(i, 1)) + "\n";
        rs.x.push_back(s.real(i, 0));
        rs.y.push_back(s.real(i, 1));
    }
    for (std::size_t i = 0; i < s.fake.rows(); ++i) {
        csv += "fake," + num(s.fake(i, 0)) + "," + num(s.fake(i, 1)) + "\n";
        fs_.x.push_back(s.fake(i, 0));
        fs_.y.push_back(s.fake(i, 1));
    }
    run.write("scatter.csv", csv);
    run.write("scatter.svg", svg_plot("real vs " + ckpt.prior_name, "pc 1", "pc 2", {rs, fs_}, true));
    run.results()["warnings"] = s.warnings;
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "scatter " << ckpt.prior_name << ": " << n_real << " real, " << a.scatter_n << " fake\n";
}

} // namespace

void cmd_eval(const Global& g, const EvalArgs& a) {
    RunDir run(a.out, "eval " + a.metric, g.scale, g.seed);
    const Checkpoint ckpt = load_prior(run, a.checkpoint);
    const PoseCorpus corpus = load_corpus(run, a.corpus, a.split);
    require_same_manifold(ckpt, corpus);
    note_body(run);
    if (a.metric == "recall" || a.metric == "precision") {
        eval_coverage(g, a, run, ckpt, corpus);
    } else if (a.metric == "smoothness") {
        eval_smoothness(g, a, run, ckpt, corpus);
    } else {
        eval_scatter(g, a, run, ckpt, corpus);
    }
    run.finish();
}

// ---------------------------------------------------------------------------

namespace {

struct Target {
    std::optional<PoseVector> truth;
    std::optional<Tensor2> vertices; // V x 3, meters
    Keypoints2D keypoints;
};

Keypoints2D read_keypoints(const std::string& path) {
    const auto rows = read_numeric_csv(path, 2, 3);
    Keypoints2D kp;
    kp.points = Tensor2(rows.size(), 2);
    kp.visible.assign(rows.size(), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        kp.points(i, 0) = rows[i][0];
        kp.points(i, 1) = rows[i][1];
        if (rows[i].size() == 3) kp.visible[i] = rows[i][2] != 0.0;
    }
    return kp;
}

Tensor2 read_vertices(const std::string& path) {
    const auto rows = read_numeric_csv(path, 3, 3);
    Tensor2 v(rows.size(), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), v.row(i).begin());
    return v;
}

std::string keypoints_csv(const Keypoints2D& kp) {
    std::string out = "u,v,visible\n";
    for (std::size_t i = 0; i < kp.size(); ++i) {
        out += num(kp.points(i, 0)) + "," + num(kp.points(i, 1)) + "," + (kp.visible[i] ? "1" : "0") + "\n";
    }
    return out;
}

json restarts_json(const std::vector<RestartLog>& logs) {
    json out = json::array();
    for (const auto& r : logs) {
        out.push_back({{"restart", r.restart}, {"loss", r.loss}, {"iterations", r.iterations}, {"converged", r.converged}});
    }
    return out;
}

} // namespace

void cmd_fit(const Global& g, const FitArgs& a) {
    RunDir run(a.out, "fit " + a.target, g.scale, g.seed);
    const Checkpoint ckpt = load_prior(run, a.checkpoint);
    note_body(run);
    const Camera camera = Camera::frontal(a.camera_distance);
    const LbfgsConfig lc{a.memory, a.max_iterations};
    lc.validate();
    run.config() = {{"target", a.target},
                    {"restarts", a.restarts},
                    {"lbfgs", {{"memory", lc.memory}, {"max_iterations", lc.max_iterations},
                               {"gradient_tolerance", lc.gradient_tolerance}}}};

    Target t;
    if (a.index) {
        if (a.corpus.empty()) throw ConfigError("--index needs --corpus");
        const PoseCorpus corpus = load_corpus(run, a.corpus, a.split);
        require_same_manifold(ckpt, corpus);
        if (*a.index >= corpus.size()) {
            throw ConfigError("--index " + std::to_string(*a.index) + " out of range (corpus has " +
                              std::to_string(corpus.size()) + " poses)");
        }
        t.truth = corpus.pose(*a.index);
        t.vertices = skin(body(), *t.truth, ShapeVector::zeros(body().shape_dim())).vertices;
        run.config()["index"] = *a.index;
        run.config()["split"] = a.split;
    }

    json& res = run.results();
    if (a.target == "keypoints") {
        run.config()["camera_distance"] = a.camera_distance;
        if (!a.keypoints_csv.empty()) {
            t.keypoints = read_keypoints(a.keypoints_csv);
            run.inputs()["keypoints"] = {{"path", a.keypoints_csv}, {"file_hash", bytes_hash(read_file(a.keypoints_csv))}};
        } else if (t.truth) {
            t.keypoints = project_points(camera, pose_joints(body(), *t.truth));
            if (a.noise_px > 0.0) {
                Rng rng(derive_seed(g.seed, "keypoint-noise"));
                for (auto& v : t.keypoints.points.values()) v += a.noise_px * standard_normal(rng);
            }
            run.config()["noise_px"] = a.noise_px;
            run.write("keypoints.csv", keypoints_csv(t.keypoints));
        } else {
            throw ConfigError("fit keypoints needs --keypoints or --corpus with --index");
        }

        FitResult r;
        if (ckpt.kind == PriorKind::gmm) {
            if (ckpt.layout.has_shape()) throw ConfigError("GMM keypoint fits need a pose-only prior");
            GmmFitProblem gp{&*ckpt.gmm, &body(), camera, t.keypoints, Vec3::Zero()};
            run.config()["lambda"] = a.lambda;
            r = gmm_fit_keypoints(gp, a.lambda, lc);
            if (t.vertices) {
                r.mesh_error_mm = vertex_distance_mm(
                    skin(body(), r.pose, ShapeVector::zeros(body().shape_dim())).vertices.values(), t.vertices->values());
            }
        } else {
            FitProblem fp;
            fp.prior = &ckpt.require_generator();
            fp.tree = &body();
            fp.camera = camera;
            fp.targets = t.keypoints;
            fp.truth_vertices = t.vertices;
            r = fit_keypoints(fp, lc, a.restarts, derive_seed(g.seed, "fit"));
            res["z"] = r.z.values;
            res["restarts"] = restarts_json(r.restarts);
        }
        res["loss"] = r.loss;
        res["reprojection_px"] = r.reprojection_px;
        if (r.mesh_error_mm) res["mesh_error_mm"] = *r.mesh_error_mm;
        res["iterations"] = r.iterations;
        res["converged"] = r.converged;
        res["behind_camera"] = r.behind_camera;
        res["degenerate"] = r.degenerate;
        res["pose"] = r.pose.values;
        run.write("trace.csv", lbfgs_trace_csv(r.trace));
        run.write("vertices.csv",
                  vertices_csv(skin(body(), r.pose, ShapeVector::zeros(body().shape_dim())).vertices));
        std::cout << "fit keypoints: " << r.reprojection_px << " px";
        if (r.mesh_error_mm) std::cout << ", " << *r.mesh_error_mm << " mm";
        std::cout << "\n";
    } else {
        if (!a.vertices_csv.empty()) {
            t.vertices = read_vertices(a.vertices_csv);
            run.inputs()["vertices"] = {{"path", a.vertices_csv}, {"file_hash", bytes_hash(read_file(a.vertices_csv))}};
        }
        if (!t.vertices) throw ConfigError("fit mesh needs --vertices or --corpus with --index");
        const auto r = fit_mesh_target(ckpt.require_generator(), body(), *t.vertices, lc, a.restarts,
                                       derive_seed(g.seed, "fit"));
        res["z"] = r.z.values;
        res["pose"] = r.pose.values;
        res["distance_mm"] = r.distance_mm;
        res["iterations"] = r.iterations;
        res["converged"] = r.converged;
        run.write("trace.csv", lbfgs_trace_csv(r.trace));
        run.write("vertices.csv",
                  vertices_csv(skin(body(), r.pose, ShapeVector::zeros(body().shape_dim())).vertices));
        std::cout << "fit mesh: " << r.distance_mm << " mm\n";
    }
    run.finish();
}

// ---------------------------------------------------------------------------

void cmd_regress(const Global& g, const RegressArgs& a) {
    const Preset p = preset_for(g.scale);
    RunDir run(a.out, "regress", g.scale, g.seed);
    const Checkpoint ckpt = load_prior(run, a.checkpoint);
    const PoseCorpus train = load_corpus(run, a.corpus, "train");
    require_same_manifold(ckpt, train);
    const json train_input = run.inputs()["corpus"];
    const PoseCorpus test = load_corpus(run, a.corpus, "test");
    require_same_manifold(ckpt, test);
    run.inputs()["corpus_test"] = run.inputs()["corpus"];
    run.inputs()["corpus"] = train_input;
    note_body(run);

    RegressorConfig rc;
    rc.hidden = p.regressor_hidden;
    rc.steps = a.steps.value_or(p.regressor_steps);
    rc.batch_size = a.batch;
    rc.keypoint_noise_px = a.noise_px;
    rc.seed = g.seed;
    run.config() = {{"hidden", sizes_json(rc.hidden)},
                    {"steps", rc.steps},
                    {"batch_size", rc.batch_size},
                    {"keypoint_noise_px", rc.keypoint_noise_px},
                    {"adam", adam_json(rc.adam)},
                    {"cameras",
                     {{"distance_min", rc.cameras.distance_min},
                      {"distance_max", rc.cameras.distance_max},
                      {"principal_jitter_px", rc.cameras.principal_jitter_px},
                      {"focal_jitter", rc.cameras.focal_jitter}}},
                    {"eval_n", a.eval_n}};

    const Generator& gen = ckpt.require_generator();
    const auto trained = train_regressor(gen, body(), train, rc);
    const auto errors = evaluate_regressor(trained.regressor, gen, body(), test, a.eval_n, rc.cameras, a.noise_px,
                                           derive_seed(g.seed, "regress-eval"));
    run.write("loss.csv", loss_csv(trained.trace));
    std::string e = "index,mesh_error_mm\n";
    for (std::size_t i = 0; i < errors.size(); ++i) e += std::to_string(i) + "," + num(errors[i]) + "\n";
    run.write("errors.csv", e);

    const Mlp& net = trained.regressor.net;
    json layers = json::array();
    for (const auto& l : net.params.layers) {
        layers.push_back({{"rows", l.weight.rows()}, {"cols", l.weight.cols()}, {"weight", l.weight.storage()}, {"bias", l.bias}});
    }
    const json reg = {{"widths", net.spec.widths},
                      {"hidden_activation", to_string(net.spec.hidden.kind)},
                      {"output_activation", to_string(net.spec.output.kind)},
                      {"latent", {{"kind", to_string(trained.regressor.space.kind)}, {"dim", trained.regressor.space.dim}}},
                      {"neck_node", trained.regressor.neck_node},
                      {"prior_params_hash", trained.regressor.prior_params_hash},
                      {"layers", layers}};
    run.write("regressor.json", reg.dump() + "\n");

    const DistanceStats s = distance_stats(errors);
    run.results()["mesh_error_mm"] = stats_json(s);
    run.results()["prior_params_hash_after"] = ckpt.params_hash();
    run.finish();
    std::cout << "regressor on " << ckpt.prior_name << ": " << s.mean << " mm mean over " << s.n << " test poses\n";
}

} // namespace appp::cli
