#pragma once

#include "appp/body_model.hpp"
#include "appp/mlp.hpp"
#include "appp/prior_models.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace appp {

struct ManifoldConfig {
    std::size_t intrinsic_dim = 8; // m
    std::size_t joints = 21;       // K
    std::size_t hidden = 32;
    std::size_t blobs = 3;
    double blob_spread = 1.5; // std of blob centers
    double blob_sigma = 0.5;  // std within a blob
};

/// Synthetic plausible-pose manifold: a fixed random tanh net from R^m to R^3K, squashed into a
/// per-component joint-limit box by center + halfwidth * tanh(.).
struct ManifoldSpec {
    ManifoldConfig config;
    std::uint64_t seed = 0;
    Mlp map;                      // m -> hidden -> hidden -> 3K
    std::vector<double> box_lo;   // 3K
    std::vector<double> box_hi;   // 3K
    Tensor2 blob_means;           // blobs x m

    std::size_t pose_dim() const { return 3 * config.joints; }
    /// Maps intrinsic factors (one row each) to poses (one row each).
    Tensor2 map_batch(const Tensor2& factors) const;
    bool in_box(std::span<const double> pose) const;
    std::string fingerprint() const;
};

ManifoldSpec build_manifold(std::uint64_t seed, const ManifoldConfig& config = {});

enum class Split { train, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct PoseCorpus {
    Tensor2 poses; // n x 3K
    Split split = Split::train;
    std::string fingerprint; // of the manifold it was drawn from

    std::size_t size() const { return poses.rows(); }
    std::size_t joints() const { return poses.cols() / 3; }
    PoseVector pose(std::size_t i) const;
};

/// Pose i is drawn from its own counter-based stream derive_seed(split_seed, split, i).
/// Throws ConfigError for n == 0.
PoseCorpus sample_corpus(const ManifoldSpec& spec, std::size_t n, std::uint64_t split_seed, Split split);

/// "APPP", version byte, K (u32), count (u64), split byte, fingerprint (u64), then the poses as
/// little-endian doubles.
inline constexpr std::size_t kCorpusHeaderBytes = 26;
inline constexpr std::uint8_t kCorpusVersion = 1;

void write_corpus(const PoseCorpus& corpus, const std::string& path);
/// Throws ParseError on bad magic, truncation or trailing bytes; VersionError on a version mismatch.
PoseCorpus read_corpus(const std::string& path);
std::string corpus_to_bytes(const PoseCorpus& corpus);
PoseCorpus corpus_from_bytes(const std::string& bytes);

/// Header joint_0_x,joint_0_y,joint_0_z,joint_1_x,...
void write_corpus_csv(const PoseCorpus& corpus, const std::string& path);

/// Synthetic shape coefficients: N(0, 1) truncated to [-2.5, 2.5].
Tensor2 sample_shapes(std::size_t n, std::size_t shape_dim, std::uint64_t seed);

/// Rows in ParamLayout order; shape columns (if any) come from sample_shapes(shape_seed).
TrainingData make_training_data(const PoseCorpus& corpus, const ParamLayout& layout, std::uint64_t shape_seed);

// Two-joint toy: pose = (0, 0, cos phi, 0, 0, sin phi), a unit circle in the z-rotation angles.
inline constexpr std::size_t kCircleJoints = 2;

Tensor2 circle_corpus(std::size_t n, std::uint64_t seed);
/// Euclidean distance (radians) from a 6-dim pose to the toy circle.
double circle_distance(std::span<const double> pose);

} // namespace appp
