#include "commands.hpp"

#include "appp/errors.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

namespace {

enum Exit { ok = 0, failure = 1, usage = 2, numeric = 3, consistency = 4 };

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return ok;
    } catch (const appp::ConsistencyError& e) {
        std::cerr << "consistency error: " << e.what() << "\n";
        return consistency;
    } catch (const appp::NumericsError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return numeric;
    } catch (const appp::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const appp::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const appp::VersionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
}

const CLI::Validator kCount(
    [](std::string& s) {
        const bool digits = !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
        return digits && s.find_first_not_of('0') != std::string::npos ? std::string() : "must be a positive integer, got '" + s + "'";
    },
    "COUNT");

const std::vector<std::string> kPriors{"gan-s", "gan-u", "gan-n", "vae", "gmm"};

} // namespace

int main(int argc, char** argv) {
    using namespace appp::cli;

    CLI::App app{"Pose-prior toolkit: synthetic corpora, prior training, evaluation and fitting."};
    app.require_subcommand(1);
    app.fallthrough();

    Global g;
    std::map<std::string, Scale> scales{{"desk", Scale::desk}, {"full", Scale::full}};
    app.add_option("--scale", g.scale, "Preset: desk or full")->transform(CLI::CheckedTransformer(scales, CLI::ignore_case));
    app.add_option("--seed", g.seed, "Root seed for every random stream");

    std::function<void()> action;

    CorpusArgs corpus;
    auto* c = app.add_subcommand("corpus", "Sample train/test pose corpora from a seeded synthetic manifold");
    c->add_option("--out,-o", corpus.out, "Output directory")->required();
    c->add_option("--n-train", corpus.n_train, "Training poses")->check(kCount);
    c->add_option("--n-test", corpus.n_test, "Test poses")->check(kCount);
    c->add_option("--intrinsic-dim", corpus.intrinsic_dim, "Manifold dimension")->check(kCount);
    c->add_flag("--csv", corpus.csv, "Also write CSV copies");
    c->callback([&] { action = [&] { cmd_corpus(g, corpus); }; });

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a prior on a corpus");
    t->add_option("--corpus", train.corpus, "Corpus directory or train .bin")->required();
    t->add_option("--out,-o", train.out, "Output directory")->required();
    t->add_option("--prior", train.prior, "Prior model")->check(CLI::IsMember(kPriors))->capture_default_str();
    t->add_option("--layout", train.layout, "Generated parameters")
        ->check(CLI::IsMember({"pose_only", "shape_only", "pose_and_shape"}))
        ->capture_default_str();
    t->add_option("--d-steps", train.d_steps, "Discriminator updates per generator update")
        ->check(kCount)
        ->capture_default_str();
    t->add_option("--steps", train.steps, "Generator updates (GAN), steps (VAE) or EM iterations (GMM)")
        ->check(kCount);
    t->add_option("--batch", train.batch, "Batch size")->check(kCount);
    t->add_option("--latent-dim", train.latent_dim, "Latent dimension")->check(CLI::Range(2, 4096));
    t->add_option("--components", train.components, "GMM components")->check(kCount);
    t->add_option("--kl-weight", train.kl_weight, "VAE KL weight")->check(CLI::NonNegativeNumber)->capture_default_str();
    t->callback([&] { action = [&] { cmd_train(g, train); }; });

    SampleArgs smp;
    auto* s = app.add_subcommand("sample", "Draw body parameters from a trained prior");
    s->add_option("--checkpoint", smp.checkpoint, "Checkpoint JSON")->required();
    s->add_option("--out,-o", smp.out, "Output directory")->required();
    s->add_option("--n", smp.n, "Samples")->check(kCount)->capture_default_str();
    s->add_flag("--meshes", smp.meshes, "Also write skinned vertices");
    s->callback([&] { action = [&] { cmd_sample(g, smp); }; });

    InterpArgs interp;
    auto* i = app.add_subcommand("interp", "Interpolate between random latent pairs");
    i->add_option("--checkpoint", interp.checkpoint, "Checkpoint JSON")->required();
    i->add_option("--corpus", interp.corpus, "Corpus to check the checkpoint against");
    i->add_option("--out,-o", interp.out, "Output directory")->required();
    i->add_option("--pairs", interp.pairs, "Latent pairs")->check(kCount)->capture_default_str();
    i->add_option("--steps", interp.steps, "Steps per path")->check(CLI::Range(2, 1 << 20))->capture_default_str();
    i->add_flag("--dump-paths", interp.dump_paths, "Write every path's poses");
    i->callback([&] { action = [&] { cmd_interp(g, interp); }; });

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a prior against a corpus");
    e->require_subcommand(1);
    for (const char* metric : {"recall", "precision", "smoothness", "scatter"}) {
        auto* m = e->add_subcommand(metric);
        m->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required();
        m->add_option("--corpus", ev.corpus, "Corpus directory or .bin")->required();
        m->add_option("--out,-o", ev.out, "Output directory")->required();
        m->add_option("--split", ev.split, "Corpus split")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
        m->callback([&, metric] {
            ev.metric = metric;
            action = [&] { cmd_eval(g, ev); };
        });
        if (std::string(metric) == "recall" || std::string(metric) == "precision") {
            m->add_option("--n-fakes", ev.n_fakes, "Generated poses")->check(kCount);
        }
        if (std::string(metric) == "recall") {
            m->add_option("--n-queries", ev.n_queries, "Corpus queries")->check(kCount);
        }
        if (std::string(metric) == "smoothness") {
            m->add_option("--pairs", ev.pairs, "Corpus pose pairs")->check(kCount)->capture_default_str();
            m->add_option("--steps", ev.steps, "Steps per path")->check(CLI::Range(2, 1 << 20))->capture_default_str();
            m->add_option("--restarts", ev.restarts, "Endpoint fit restarts")->check(kCount)->capture_default_str();
            m->add_option("--fit-iterations", ev.fit_iterations, "L-BFGS iterations per endpoint fit")
                ->check(kCount)
                ->capture_default_str();
        }
        if (std::string(metric) == "scatter") {
            m->add_option("--n", ev.scatter_n, "Points per set")->check(kCount)->capture_default_str();
        }
    }

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Fit a prior's latent to keypoints or a mesh");
    f->require_subcommand(1);
    for (const char* target : {"keypoints", "mesh"}) {
        auto* m = f->add_subcommand(target);
        m->add_option("--checkpoint", fit.checkpoint, "Checkpoint JSON")->required();
        m->add_option("--out,-o", fit.out, "Output directory")->required();
        m->add_option("--corpus", fit.corpus, "Corpus directory or .bin (with --index)");
        m->add_option("--split", fit.split, "Corpus split")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
        m->add_option("--index", fit.index, "Corpus pose to use as the target");
        m->add_option("--restarts", fit.restarts, "Random restarts")->check(kCount)->capture_default_str();
        m->add_option("--max-iterations", fit.max_iterations, "L-BFGS iterations")->check(kCount)->capture_default_str();
        m->add_option("--memory", fit.memory, "L-BFGS memory")->check(kCount)->capture_default_str();
        if (std::string(target) == "keypoints") {
            m->add_option("--keypoints", fit.keypoints_csv, "CSV u,v[,visible], one row per body node");
            m->add_option("--camera-distance", fit.camera_distance, "Frontal camera distance, m")
                ->check(CLI::PositiveNumber)
                ->capture_default_str();
            m->add_option("--noise-px", fit.noise_px, "Noise on synthesized keypoints")->check(CLI::NonNegativeNumber);
            m->add_option("--lambda", fit.lambda, "GMM penalty weight")->check(CLI::NonNegativeNumber)->capture_default_str();
        } else {
            m->add_option("--vertices", fit.vertices_csv, "CSV x,y,z in meters, one row per vertex");
        }
        m->callback([&, target] {
            fit.target = target;
            action = [&] { cmd_fit(g, fit); };
        });
    }

    RegressArgs reg;
    auto* r = app.add_subcommand("regress", "Train a keypoint-to-latent regressor through a frozen prior");
    r->add_option("--checkpoint", reg.checkpoint, "Checkpoint JSON")->required();
    r->add_option("--corpus", reg.corpus, "Corpus directory")->required();
    r->add_option("--out,-o", reg.out, "Output directory")->required();
    r->add_option("--steps", reg.steps, "Training steps")->check(kCount);
    r->add_option("--batch", reg.batch, "Batch size")->check(kCount)->capture_default_str();
    r->add_option("--eval-n", reg.eval_n, "Test poses to evaluate")->check(kCount)->capture_default_str();
    r->add_option("--noise-px", reg.noise_px, "Keypoint noise")->check(CLI::NonNegativeNumber)->capture_default_str();
    r->callback([&] { action = [&] { cmd_regress(g, reg); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForVersion& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return usage;
    }
    return run_guarded(action);
}
