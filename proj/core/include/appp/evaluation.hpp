#pragma once

#include "appp/body_model.hpp"
#include "appp/latent_fit.hpp"
#include "appp/pose_corpus.hpp"
#include "appp/prior_models.hpp"

#include <string>
#include <vector>

namespace appp {

// ---------------------------------------------------------------------------
// Nearest-neighbor search under the mean per-vertex distance.

/// Skinned vertices of every pose (shape zero), one mesh per row: n x 3V, meters.
Tensor2 pose_meshes(const KinematicTree& tree, const Tensor2& poses);

struct NnResult {
    std::size_t query = 0;
    std::size_t match = 0;
    double distance_mm = 0.0;
};

struct NnOptions {
    std::size_t chunk = 256; // pool rows per block
    bool parallel = true;
};

/// For each query row, the pool row with the smallest distance (lowest index on ties).
/// Blocked scan with exact early abandoning; results do not depend on chunking or threads.
std::vector<NnResult> nearest_neighbors(const Tensor2& queries, const Tensor2& pool, const NnOptions& options = {});

/// Reference O(n*m) scan without blocking or early abandoning.
std::vector<NnResult> nearest_neighbors_brute(const Tensor2& queries, const Tensor2& pool);

/// Membership oracle for the synthetic manifold: a pose is on-manifold within eps when its nearest
/// neighbor among n seeded manifold samples is within eps millimeters.
class ManifoldOracle {
public:
    ManifoldOracle(const ManifoldSpec& spec, const KinematicTree& tree, std::size_t samples = 20'000,
                   std::uint64_t seed = 0);
    double distance_mm(const PoseVector& pose) const;
    bool contains(const PoseVector& pose, double eps_mm) const { return distance_mm(pose) <= eps_mm; }
    std::size_t size() const { return meshes_.rows(); }

private:
    const KinematicTree* tree_;
    Tensor2 meshes_;
};

/// Throws ConsistencyError when the prior was trained on a different manifold than the corpus
/// was drawn from. An empty fingerprint on either side is not checked.
void require_same_manifold(const Checkpoint& prior, const PoseCorpus& corpus);

// ---------------------------------------------------------------------------
// Recall / precision.

struct DistanceStats {
    double mean = 0.0;
    double std = 0.0; // population standard deviation
    double median = 0.0;
    std::size_t n = 0;
};

DistanceStats distance_stats(std::vector<double> values);

struct CurvePoint {
    double epsilon = 0.0;
    double probability = 0.0; // fraction of distances <= epsilon
};

/// Empirical CDF at up to max_points distinct thresholds; the last point is (max, 1).
std::vector<CurvePoint> cumulative_curve(std::vector<double> distances, std::size_t max_points = 200);

enum class Direction { recall, precision };
std::string to_string(Direction d);

struct CoverageReport {
    Direction direction = Direction::recall;
    Split split = Split::train;
    std::string prior;
    DistanceStats stats;
    std::vector<CurvePoint> curve;
    std::size_t n_fakes = 0;
    std::size_t n_queries = 0;
    std::size_t full_scale_n_fakes = 6'000'000;
    std::size_t full_scale_n_queries = 10'000;
    std::string prior_fingerprint;  // checkpoint params hash
    std::string corpus_fingerprint;
    std::vector<NnResult> matches;
    std::vector<std::size_t> worst; // precision: fake indices with the largest distances
};

struct CoverageConfig {
    std::size_t n_fakes = 200'000;
    std::size_t n_queries = 2'000; // recall only
    std::size_t worst_k = 16;      // precision only
    std::uint64_t seed = 0;
};

/// For each sampled corpus pose, distance to the nearest generated pose.
CoverageReport recall_experiment(const Checkpoint& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                 const CoverageConfig& config);
/// For each generated pose, distance to the nearest corpus pose.
CoverageReport precision_experiment(const Checkpoint& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                    const CoverageConfig& config);

/// Same statistics from explicit pose sets (rows are poses).
CoverageReport coverage_from_poses(Direction direction, const KinematicTree& tree, const Tensor2& queries,
                                   const Tensor2& pool, std::size_t worst_k = 0);

/// Pose-only columns of prior samples (shape dropped, since evaluation fixes shape to zero).
Tensor2 prior_pose_samples(const Checkpoint& prior, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Interpolation and smoothness.

struct InterpolationRecord {
    std::size_t pair_id = 0;
    std::size_t steps = 0;          // T
    std::vector<double> delta;      // T consecutive transitions, mm
    std::vector<double> normalized; // delta / (d(M_0, M_T) / T)
    double ratio = 1.0;             // max / min of delta
};

/// max/min of the transitions. All-zero gives 1; a zero minimum with positive maximum gives +inf.
double smoothness_ratio(std::span<const double> delta);

/// Record from a path of meshes (rows of V x 3 vertices, meters).
InterpolationRecord record_from_path(const Tensor2& path_vertices, std::size_t pair_id = 0);

struct InterpolationSequence {
    std::vector<LatentVector> latents; // T+1
    Tensor2 poses;                     // (T+1) x 3K
    Tensor2 vertices;                  // (T+1) x 3V
    InterpolationRecord record;
};

/// lerp on normal/uniform spaces, slerp on the sphere. Throws ConfigError for T < 2.
InterpolationSequence make_interpolation_sequence(const Generator& prior, const KinematicTree& tree,
                                                  const LatentVector& z_start, const LatentVector& z_end,
                                                  std::size_t steps, std::size_t pair_id = 0);

struct SmoothnessConfig {
    std::size_t n_pairs = 32;
    std::size_t steps = 100;
    std::size_t fit_restarts = 2;
    LbfgsConfig fit{10, 150};
    std::uint64_t seed = 0;
};

struct SmoothnessReport {
    std::string prior;
    std::vector<InterpolationRecord> records;
    DistanceStats ratio_stats;            // over finite R
    std::vector<double> mean_normalized;  // step-indexed mean of the normalized transitions
    std::vector<double> endpoint_fit_mm;  // per fitted endpoint
    std::size_t requested_pairs = 0;
    std::size_t failed_pairs = 0;
    std::vector<std::string> failures;
    std::string prior_fingerprint;
    std::string corpus_fingerprint;
};

/// Corpus poses (2i, 2i+1) of a seeded permutation are fitted with fit_mesh_target, then the
/// latents are interpolated. Pairs whose fits or interpolation fail are skipped and counted.
SmoothnessReport smoothness_experiment(const Checkpoint& prior, const KinematicTree& tree, const PoseCorpus& corpus,
                                       const SmoothnessConfig& config);

/// Statistics of a set of records (used by smoothness_experiment, exposed for injected data).
SmoothnessReport summarize_records(std::vector<InterpolationRecord> records);

// ---------------------------------------------------------------------------
// 2D scatter.

struct ScatterResult {
    Tensor2 real; // n x 2
    Tensor2 fake; // m x 2
    std::vector<std::string> warnings;
};

/// Centers on the real mean and projects both sets on the top two principal directions of the
/// real set. Each direction's sign makes its largest-magnitude component positive.
ScatterResult project_2d_scatter(const Tensor2& real, const Tensor2& fake);

// ---------------------------------------------------------------------------
// Reports.

/// metric,split,prior,mean,std,median,n
std::string coverage_csv_header();
std::string coverage_csv_row(const CoverageReport& r);
/// epsilon,probability
std::string curve_csv(const std::vector<CurvePoint>& curve);
/// "4.0±1.9" style cell plus the median, mirroring the layout of a results table.
std::string coverage_table_cell(const CoverageReport& r);
/// pair_id,steps,ratio,mean_delta
std::string interpolation_csv(const std::vector<InterpolationRecord>& records);
/// metric,prior,mean,std,median,n
std::string smoothness_csv(const SmoothnessReport& r);
/// step,mean_normalized
std::string normalized_curve_csv(const std::vector<double>& curve);

struct SvgSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Standalone line/scatter plot; the data is repeated in a comment block so files diff cleanly.
std::string svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series, bool scatter = false);

} // namespace appp
