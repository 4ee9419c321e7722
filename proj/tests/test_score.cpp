#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "score_oracle.hpp"
#include "vad/models.hpp"
#include "vad/score.hpp"
#include "vad/train.hpp"

using namespace vad;
namespace fs = std::filesystem;

namespace {

Frame uniform_frame(int h, int w, float value) {
    Frame f;
    f.height = h;
    f.width = w;
    f.pixels.assign(static_cast<std::size_t>(h) * w, value);
    return f;
}

std::vector<Frame> random_frames(int count, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Frame> frames;
    for (int i = 0; i < count; ++i) {
        Frame f = uniform_frame(h, w, 0.0f);
        for (auto& p : f.pixels) p = static_cast<float>(rng.uniform());
        frames.push_back(std::move(f));
    }
    return frames;
}

bool close_or_both_nan(double a, double b, double tol = 1e-6) {
    if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
    return std::abs(a - b) <= tol;
}

}  // namespace

TEST_CASE("pixel error is the absolute difference and is symmetric", "[score]") {
    Frame a = uniform_frame(2, 2, 0.2f);
    Frame b = uniform_frame(2, 2, 0.5f);
    const auto map = pixel_error(a, b);
    for (double v : map) REQUIRE(v == Catch::Approx(0.3).margin(1e-7));
    const auto swapped = pixel_error(b, a);
    for (std::size_t i = 0; i < map.size(); ++i) REQUIRE(map[i] == swapped[i]);

    const auto zero = pixel_error(a, a);
    for (double v : zero) REQUIRE(v == 0.0);

    Frame c = uniform_frame(3, 2, 0.0f);
    CHECK_THROWS_AS(pixel_error(a, c), ShapeError);
}

TEST_CASE("frame error sums the map and is linear", "[score]") {
    CHECK(frame_error({0.1, 0.2, 0.3, 0.4}) == Catch::Approx(1.0));
    CHECK(frame_error({0.0, 0.0}) == 0.0);
    CHECK(frame_error({0.2, 0.4, 0.6, 0.8}) == Catch::Approx(2.0));
}

TEST_CASE("sequence cost sums exactly window terms", "[score]") {
    std::vector<double> e;
    for (int i = 1; i <= 12; ++i) e.push_back(i);
    CHECK(sequence_cost(e, 0, 10) == 55.0);  // 1 + ... + 10
    CHECK(sequence_cost(e, 3, 1) == 4.0);
    CHECK(sequence_cost(std::vector<double>(10, 0.5), 0, 10) == Catch::Approx(5.0));
    CHECK_THROWS_AS(sequence_cost(e, 3, 10), DataError);
    CHECK_THROWS_AS(sequence_cost(e, -1, 10), DataError);
}

TEST_CASE("anomaly scaling in both normalization modes", "[score]") {
    const std::vector<double> costs{2.0, 4.0, 6.0};
    const auto minmax = anomaly_score(costs, NormalizationMode::minmax);
    CHECK(minmax[0] == 0.0);
    CHECK(minmax[1] == Catch::Approx(0.5));
    CHECK(minmax[2] == 1.0);

    const auto literal = anomaly_score(costs, NormalizationMode::paper_literal);
    CHECK(literal[0] == 0.0);
    CHECK(literal[1] == Catch::Approx(1.0 / 3.0));
    CHECK(literal[2] == Catch::Approx(2.0 / 3.0));

    const auto flat = anomaly_score({3.0, 3.0, 3.0}, NormalizationMode::minmax);
    for (double v : flat) REQUIRE(v == 0.0);
    const auto reg = regularity(flat);
    for (double v : reg) REQUIRE(v == 1.0);

    const auto zeros = anomaly_score({0.0, 0.0}, NormalizationMode::paper_literal);
    for (double v : zeros) REQUIRE(v == 0.0);
}

TEST_CASE("regularity is one minus the anomaly score", "[score]") {
    const auto r = regularity({0.0, 0.5, 1.0});
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.5);
    CHECK(r[2] == 0.0);
}

TEST_CASE("minmax anomaly score is invariant to scaling the errors", "[score]") {
    Rng rng(40);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> costs;
        for (int i = 0; i < 12; ++i) costs.push_back(rng.uniform(0.5, 9.0));
        const double lambda = rng.uniform(0.1, 50.0);
        std::vector<double> scaled = costs;
        for (double& c : scaled) c *= lambda;
        const auto a = anomaly_score(costs, NormalizationMode::minmax);
        const auto b = anomaly_score(scaled, NormalizationMode::minmax);
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-9));
    }
}

TEST_CASE("a perfect reconstructor yields zero errors and unit regularity", "[score]") {
    const auto frames = random_frames(14, 8, 8, 1);
    auto identity = [](const Tensor<float>& clip) { return clip; };
    const auto s = score_video_with(identity, frames, 10, 1, NormalizationMode::minmax, "v");
    for (int t = 0; t < s.n_frames(); ++t) {
        REQUIRE(s.frame_error[static_cast<std::size_t>(t)] == 0.0);
        if (!std::isnan(s.cost[static_cast<std::size_t>(t)])) {
            REQUIRE(s.cost[static_cast<std::size_t>(t)] == 0.0);
            REQUIRE(s.regularity[static_cast<std::size_t>(t)] == 1.0);
        }
    }
}

TEST_CASE("stride equal to window covers each frame exactly once", "[score]") {
    const auto frames = random_frames(12, 8, 8, 2);
    // phase-dependent reconstructor: only slice 0 of each clip is zeroed
    auto phase0 = [](const Tensor<float>& clip) {
        Tensor<float> out = clip;
        const long long slice = out.size() / out.dim(0);
        std::fill(out.ptr(), out.ptr() + slice, 0.0f);
        return out;
    };
    const auto s = score_video_with(phase0, frames, 4, 4, NormalizationMode::minmax, "v");
    for (int t = 0; t < 12; ++t) {
        const double e = s.frame_error[static_cast<std::size_t>(t)];
        if (t % 4 == 0)
            REQUIRE(e > 0.0);  // the single covering clip sees this frame at phase 0
        else
            REQUIRE(e == 0.0);
    }

    // overlapping clips average: with stride 1 interior frames mix zeroed and
    // exact phases, so errors shrink with coverage
    const auto dense = score_video_with(phase0, frames, 4, 1, NormalizationMode::minmax, "v");
    double full_sum = 0.0;
    for (float p : frames[6].pixels) full_sum += p;
    // frame 6 is covered by 4 clips, one of which sees it at phase 0
    REQUIRE(dense.frame_error[6] == Catch::Approx(full_sum / 4.0).margin(1e-9));
}

TEST_CASE("score series invariants hold on a real model", "[score]") {
    auto model = build_vae<float>({10, 8, 8, 1}, 4, 1.0, 0.1);
    xavier_init(model, 3);
    const auto frames = random_frames(16, 8, 8, 3);
    const auto s = score_video(model, frames, 10, 1, NormalizationMode::minmax, "v");

    double lo = 2.0, hi = -1.0;
    for (int t = 0; t < s.n_frames(); ++t) {
        const double sa = s.anomaly[static_cast<std::size_t>(t)];
        const double sr = s.regularity[static_cast<std::size_t>(t)];
        if (std::isnan(sa)) {
            REQUIRE(std::isnan(sr));
            REQUIRE(t > s.n_frames() - s.window);  // only trailing starts lack a window
            continue;
        }
        REQUIRE(sr == 1.0 - sa);  // exact
        REQUIRE(sa >= 0.0);
        REQUIRE(sa <= 1.0);
        lo = std::min(lo, sa);
        hi = std::max(hi, sa);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
}

TEST_CASE("pipeline matches the straight-line oracle on random videos", "[score][oracle]") {
    auto model = build_baseline_ae<float>({10, 8, 8, 1}, 0.05);
    xavier_init(model, 17);
    auto recon = [&model](const Tensor<float>& clip) {
        return reconstruct(model, clip, RngMode::mean).first;
    };

    for (int video = 0; video < 6; ++video) {
        const auto frames = random_frames(12, 8, 8, 100 + static_cast<std::uint64_t>(video));
        for (auto mode : {NormalizationMode::minmax, NormalizationMode::paper_literal}) {
            const auto s = score_video(model, frames, 10, 1, mode, "v");
            const auto o = vadtest::oracle_score_video(recon, frames, 10, 1, mode == NormalizationMode::minmax);
            for (int t = 0; t < 12; ++t) {
                const auto i = static_cast<std::size_t>(t);
                REQUIRE(close_or_both_nan(s.frame_error[i], o.e[i]));
                REQUIRE(close_or_both_nan(s.cost[i], o.cost[i]));
                REQUIRE(close_or_both_nan(s.anomaly[i], o.anomaly[i]));
                REQUIRE(close_or_both_nan(s.regularity[i], o.regularity[i]));
            }
        }
    }
}

TEST_CASE("scores csv round trips including empty trailing fields", "[score]") {
    auto model = build_baseline_ae<float>({10, 8, 8, 1}, 0.05);
    xavier_init(model, 23);
    const auto frames = random_frames(13, 8, 8, 5);
    const auto s = score_video(model, frames, 10, 1, NormalizationMode::paper_literal, "vid7");

    const fs::path path = fs::temp_directory_path() / "vad_test_scores.csv";
    write_scores_csv(s, path);
    const auto r = read_scores_csv(path);
    CHECK(r.video == "vid7");
    CHECK(r.window == 10);
    CHECK(r.normalization == NormalizationMode::paper_literal);
    REQUIRE(r.n_frames() == s.n_frames());
    for (int t = 0; t < s.n_frames(); ++t) {
        const auto i = static_cast<std::size_t>(t);
        REQUIRE(close_or_both_nan(r.frame_error[i], s.frame_error[i], 0.0));
        REQUIRE(close_or_both_nan(r.cost[i], s.cost[i], 0.0));
        REQUIRE(close_or_both_nan(r.anomaly[i], s.anomaly[i], 0.0));
        REQUIRE(close_or_both_nan(r.regularity[i], s.regularity[i], 0.0));
    }
}

TEST_CASE("score_video validates its stride", "[score]") {
    auto model = build_baseline_ae<float>({10, 8, 8, 1}, 0.05);
    xavier_init(model, 1);
    const auto frames = random_frames(12, 8, 8, 9);
    CHECK_THROWS_AS(score_video(model, frames, 10, 0, NormalizationMode::minmax), ConfigError);
    CHECK_THROWS_AS(score_video(model, frames, 10, 11, NormalizationMode::minmax), ConfigError);
    CHECK_THROWS_AS(score_video(model, random_frames(5, 8, 8, 9), 10, 1, NormalizationMode::minmax),
                    DataError);
}
