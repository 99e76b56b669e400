#include "doctest.h"
#include "support.hpp"

#include "appp/errors.hpp"
#include "appp/evaluation.hpp"
#include "appp/pose_corpus.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace appp;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("appp_test_" + name)).string();
}

const ManifoldSpec& manifold() {
    static const ManifoldSpec m = build_manifold(7);
    return m;
}

} // namespace

TEST_CASE("manifold fingerprints follow the seed") {
    CHECK(build_manifold(7).fingerprint() == manifold().fingerprint());
    CHECK(build_manifold(8).fingerprint() != manifold().fingerprint());
    CHECK(manifold().pose_dim() == 63);
    for (std::size_t i = 0; i < 63; ++i) {
        CHECK(manifold().box_lo[i] < manifold().box_hi[i]);
        CHECK(manifold().box_lo[i] > -std::numbers::pi);
        CHECK(manifold().box_hi[i] < std::numbers::pi);
    }
}

TEST_CASE("mapped factors stay inside the joint-limit box") {
    Rng rng(1);
    const Tensor2 factors = test::normal_tensor(rng, 10000, 8, 4.0);
    const Tensor2 poses = manifold().map_batch(factors);
    std::size_t outside = 0;
    for (std::size_t r = 0; r < poses.rows(); ++r) outside += manifold().in_box(poses.row(r)) ? 0 : 1;
    CHECK(outside == 0);
}

TEST_CASE("corpus sampling") {
    CHECK_THROWS_AS(sample_corpus(manifold(), 0, 1, Split::train), ConfigError);
    const auto train = sample_corpus(manifold(), 10000, 3, Split::train);
    const auto test = sample_corpus(manifold(), 10000, 3, Split::test);
    CHECK(train.size() == 10000);
    CHECK(train.joints() == 21);
    CHECK(train.fingerprint == manifold().fingerprint());
    CHECK(train.split == Split::train);

    std::set<std::vector<double>> seen;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto r = train.poses.row(i);
        seen.emplace(r.begin(), r.end());
    }
    std::size_t shared = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto r = test.poses.row(i);
        shared += seen.count(std::vector<double>(r.begin(), r.end()));
    }
    CHECK(shared == 0);

    std::vector<double> mean(63, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i) {
        CHECK(train.pose(i).valid());
        CHECK(manifold().in_box(train.poses.row(i)));
        for (std::size_t c = 0; c < 63; ++c) mean[c] += train.poses(i, c) / 10000.0;
    }
    CHECK(manifold().in_box(mean));
}

TEST_CASE("corpus rows do not depend on n") {
    const auto a = sample_corpus(manifold(), 50, 9, Split::train);
    const auto b = sample_corpus(manifold(), 120, 9, Split::train);
    for (std::size_t i = 0; i < 50; ++i) {
        const auto ra = a.poses.row(i), rb = b.poses.row(i);
        CHECK(std::equal(ra.begin(), ra.end(), rb.begin()));
    }
    CHECK(sample_corpus(manifold(), 50, 9, Split::train).poses == a.poses);
    CHECK(sample_corpus(manifold(), 50, 10, Split::train).poses != a.poses);
}

TEST_CASE("binary corpus round trip and size") {
    const auto c = sample_corpus(manifold(), 10000, 4, Split::test);
    const std::string path = temp_path("corpus.bin");
    write_corpus(c, path);
    CHECK(std::filesystem::file_size(path) == kCorpusHeaderBytes + 10000 * 63 * 8);
    const auto back = read_corpus(path);
    CHECK(back.poses == c.poses);
    CHECK(back.split == Split::test);
    CHECK(back.fingerprint == c.fingerprint);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt corpus bytes are rejected") {
    const auto c = sample_corpus(manifold(), 5, 4, Split::train);
    const std::string bytes = corpus_to_bytes(c);
    CHECK(bytes.substr(0, 4) == "APPP");
    CHECK(corpus_from_bytes(bytes).poses == c.poses);

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(corpus_from_bytes(bad), ParseError);
    CHECK_THROWS_AS(corpus_from_bytes(bytes.substr(0, bytes.size() - 1)), ParseError);
    CHECK_THROWS_AS(corpus_from_bytes(bytes.substr(0, 10)), ParseError);
    CHECK_THROWS_AS(corpus_from_bytes(bytes + "x"), ParseError);
    std::string v2 = bytes;
    v2[4] = 2;
    CHECK_THROWS_AS(corpus_from_bytes(v2), VersionError);
    CHECK_THROWS_AS(read_corpus(temp_path("missing.bin")), ParseError);
}

TEST_CASE("corpus CSV export") {
    const auto c = sample_corpus(manifold(), 3, 4, Split::train);
    const std::string path = temp_path("corpus.csv");
    write_corpus_csv(c, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("joint_0_x,joint_0_y,joint_0_z,joint_1_x", 0) == 0);
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 3);
    std::filesystem::remove(path);
}

TEST_CASE("split names") {
    CHECK(split_from_string(to_string(Split::train)) == Split::train);
    CHECK(split_from_string("test") == Split::test);
    CHECK_THROWS(split_from_string("val"));
}

TEST_CASE("shape samples are truncated") {
    const Tensor2 s = sample_shapes(2000, 10, 5);
    for (double v : s.values()) CHECK(std::abs(v) <= 2.5);
    const auto data = make_training_data(sample_corpus(manifold(), 10, 1, Split::train),
                                         {ParamSpace::pose_and_shape, 21, 10}, 5);
    CHECK(data.params.cols() == 73);
    CHECK(data.fingerprint == manifold().fingerprint());
    CHECK_THROWS_AS(make_training_data(sample_corpus(manifold(), 10, 1, Split::train), {ParamSpace::pose_only, 20, 10}, 5),
                    ShapeError);
}

TEST_CASE("circle toy corpus") {
    const Tensor2 c = circle_corpus(500, 3);
    CHECK(c.cols() == 6);
    for (std::size_t i = 0; i < c.rows(); ++i) {
        CHECK(circle_distance(c.row(i)) < 1e-12);
        CHECK(c(i, 0) == 0.0);
        CHECK(c(i, 4) == 0.0);
    }
    const std::vector<double> off{0.0, 0.0, 2.0, 0.0, 0.0, 0.0};
    CHECK(circle_distance(off) == doctest::Approx(1.0));
    const std::vector<double> lifted{0.3, 0.0, 1.0, 0.0, 0.4, 0.0};
    CHECK(circle_distance(lifted) == doctest::Approx(0.5));
}

TEST_CASE("membership oracle accepts corpus poses and rejects far ones") {
    const auto tree = build_body();
    const ManifoldOracle oracle(manifold(), tree, 2000, 1);
    CHECK(oracle.size() == 2000);
    const auto same = sample_corpus(manifold(), 2000, derive_seed(1, "oracle"), Split::train);
    CHECK(oracle.distance_mm(same.pose(17)) == 0.0);
    const auto other = sample_corpus(manifold(), 20, 99, Split::test);
    PoseVector far = other.pose(0);
    for (auto& v : far.values) v = std::clamp(-v * 3.0, -3.0, 3.0);
    CHECK(oracle.distance_mm(far) > oracle.distance_mm(other.pose(0)));
    CHECK(oracle.contains(other.pose(0), 1e9));
}
