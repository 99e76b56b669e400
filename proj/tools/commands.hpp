#pragma once

#include "presets.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace appp::cli {

struct Global {
    Scale scale = Scale::desk;
    std::uint64_t seed = 0;
};

struct CorpusArgs {
    std::string out;
    std::optional<std::size_t> n_train;
    std::optional<std::size_t> n_test;
    std::size_t intrinsic_dim = 8;
    bool csv = false;
};

struct TrainArgs {
    std::string corpus;
    std::string out;
    std::string prior = "gan-s";
    std::string layout = "pose_only";
    std::size_t d_steps = 10;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> batch;
    std::optional<std::size_t> latent_dim;
    std::optional<std::size_t> components;
    double kl_weight = 5e-3;
};

struct SampleArgs {
    std::string checkpoint;
    std::string out;
    std::size_t n = 100;
    bool meshes = false;
};

struct InterpArgs {
    std::string checkpoint;
    std::string corpus; // optional, checked for consistency when given
    std::string out;
    std::size_t pairs = 16;
    std::size_t steps = 100;
    bool dump_paths = false;
};

struct EvalArgs {
    std::string metric; // recall, precision, smoothness, scatter
    std::string checkpoint;
    std::string corpus;
    std::string out;
    std::string split = "test";
    std::optional<std::size_t> n_fakes;
    std::optional<std::size_t> n_queries;
    std::size_t pairs = 32;
    std::size_t steps = 100;
    std::size_t restarts = 2;
    std::size_t fit_iterations = 300;
    std::size_t scatter_n = 2000;
};

struct FitArgs {
    std::string target; // keypoints or mesh
    std::string checkpoint;
    std::string corpus;
    std::string out;
    std::string split = "test";
    std::optional<std::size_t> index;
    std::string keypoints_csv;
    std::string vertices_csv;
    double camera_distance = 3.0;
    double noise_px = 0.0;
    std::size_t restarts = 8;
    std::size_t max_iterations = 4000;
    std::size_t memory = 40;
    double lambda = 1.0; // GMM penalty weight
};

struct RegressArgs {
    std::string checkpoint;
    std::string corpus;
    std::string out;
    std::optional<std::size_t> steps;
    std::size_t batch = 16;
    std::size_t eval_n = 200;
    double noise_px = 1.0;
};

void cmd_corpus(const Global& g, const CorpusArgs& a);
void cmd_train(const Global& g, const TrainArgs& a);
void cmd_sample(const Global& g, const SampleArgs& a);
void cmd_interp(const Global& g, const InterpArgs& a);
void cmd_eval(const Global& g, const EvalArgs& a);
void cmd_fit(const Global& g, const FitArgs& a);
void cmd_regress(const Global& g, const RegressArgs& a);

} // namespace appp::cli
