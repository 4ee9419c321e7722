#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "vad/eval.hpp"
#include "vad/rng.hpp"

using namespace vad;
namespace fs = std::filesystem;

namespace {
const std::vector<double> kScores{0.9, 0.2, 0.8, 0.1};
const std::vector<std::uint8_t> kLabels{0, 1, 0, 1};  // N, A, N, A
}  // namespace

TEST_CASE("confusion counts by hand", "[eval]") {
    const auto c = confusion_at_threshold(kScores, kLabels, 0.5);
    CHECK(c.tp == 2);
    CHECK(c.fp == 0);
    CHECK(c.tn == 2);
    CHECK(c.fn == 0);

    const auto none = confusion_at_threshold(kScores, kLabels, 0.0);
    CHECK(none.tp == 0);
    CHECK(none.fp == 0);

    const auto all = confusion_at_threshold(kScores, kLabels, 1.9);  // above every score
    CHECK(all.tn == 0);
    CHECK(all.fn == 0);

    CHECK_THROWS_AS(confusion_at_threshold(kScores, {0, 1}, 0.5), DataError);
}

TEST_CASE("ties classify as normal (strict inequality)", "[eval]") {
    const auto c = confusion_at_threshold({0.5, 0.5}, {1, 0}, 0.5);
    CHECK(c.tp == 0);
    CHECK(c.fn == 1);
    CHECK(c.tn == 1);
}

TEST_CASE("sweep rates by hand", "[eval]") {
    const auto table = sweep(kScores, kLabels, {0.5, 0.95});
    REQUIRE(table.rows.size() == 2);

    CHECK(table.rows[0].f1 == Catch::Approx(1.0));
    CHECK(table.rows[1].tp == 2);
    CHECK(table.rows[1].fp == 2);
    CHECK(table.rows[1].fn == 0);
    CHECK(table.rows[1].precision == Catch::Approx(0.5));
    CHECK(table.rows[1].tpr == Catch::Approx(1.0));
    CHECK(table.rows[1].f1 == Catch::Approx(2.0 / 3.0));

    const auto [theta, f1] = best_f1(table);
    CHECK(theta == 0.5);
    CHECK(f1 == Catch::Approx(1.0));

    CHECK_THROWS_AS(sweep(kScores, kLabels, {}), ConfigError);
}

TEST_CASE("perfect separation reaches F1 = 1 on the default grid", "[eval]") {
    const auto table = sweep(kScores, kLabels, default_threshold_grid());
    REQUIRE(table.rows.size() == 101);
    CHECK(best_f1(table).second == Catch::Approx(1.0));
}

TEST_CASE("all-normal labels pin precision and F1 to zero", "[eval]") {
    const std::vector<std::uint8_t> normals{0, 0, 0, 0};
    const auto table = sweep(kScores, normals, default_threshold_grid());
    for (const auto& r : table.rows) {
        CHECK(r.precision == 0.0);
        CHECK(r.f1 == 0.0);
    }
}

TEST_CASE("row conservation and monotone predicted positives", "[eval]") {
    Rng rng(5);
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (int i = 0; i < 200; ++i) {
        scores.push_back(rng.uniform());
        labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
    }
    const auto table = sweep(scores, labels, default_threshold_grid());
    long long prev_pos = -1;
    for (const auto& r : table.rows) {
        REQUIRE(r.tp + r.fp + r.tn + r.fn == 200);
        const long long pos = r.tp + r.fp;
        REQUIRE(pos >= prev_pos);
        prev_pos = pos;
        REQUIRE(r.f1 >= 0.0);
        REQUIRE(r.f1 <= 1.0);
        REQUIRE(r.fpr >= 0.0);
        REQUIRE(r.fpr <= 1.0);
    }
    // recall is non-decreasing in theta
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        REQUIRE(table.rows[i].tpr >= table.rows[i - 1].tpr);
}

TEST_CASE("confusion counts depend only on score ranks", "[eval]") {
    Rng rng(6);
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (int i = 0; i < 100; ++i) {
        scores.push_back(rng.uniform());
        labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
    }
    auto monotone = [](double x) { return x * x * x + 0.5 * x; };  // strictly increasing
    std::vector<double> tscores;
    for (double s : scores) tscores.push_back(monotone(s));

    const auto grid = default_threshold_grid();
    std::vector<double> tgrid;
    for (double g : grid) tgrid.push_back(monotone(g));

    const auto a = sweep(scores, labels, grid);
    const auto b = sweep(tscores, labels, tgrid);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        REQUIRE(a.rows[i].tp == b.rows[i].tp);
        REQUIRE(a.rows[i].fp == b.rows[i].fp);
        REQUIRE(a.rows[i].tn == b.rows[i].tn);
        REQUIRE(a.rows[i].fn == b.rows[i].fn);
    }
}

TEST_CASE("pr curve sorts by recall and collapses duplicates", "[eval]") {
    const auto table = sweep(kScores, kLabels, default_threshold_grid());
    const auto pts = pr_curve(table);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        REQUIRE(pts[i - 1] != pts[i]);
        REQUIRE(pts[i - 1].first <= pts[i].first);
    }

    MetricsTable single;
    single.rows.push_back(metrics_row(0.4, confusion_at_threshold(kScores, kLabels, 0.4)));
    CHECK(pr_curve(single).size() == 1);
    CHECK(best_f1(single).first == 0.4);
}

TEST_CASE("eval frames are window starts; trailing frames are excluded and counted", "[eval]") {
    ScoreSeries s;
    s.video = "v000";
    s.window = 4;
    const double nan = score_nan();
    s.frame_error = {1, 1, 1, 1, 1, 1, 1, 1};
    s.cost = {4, 4, 4, 4, 4, nan, nan, nan};
    s.anomaly = {0, 0, 0.5, 1, 0, nan, nan, nan};
    s.regularity = {1, 1, 0.5, 0, 1, nan, nan, nan};

    FrameLabels labels;
    labels.video = "v000";
    labels.anomalous_ranges = {{2, 3}};
    const auto ev = collect_eval_frames(s, labels);
    CHECK(ev.excluded == 3);
    REQUIRE(ev.s_r.size() == 5);
    CHECK(ev.anomalous == std::vector<std::uint8_t>{0, 0, 1, 1, 0});

    FrameLabels bad;
    bad.video = "v000";
    bad.anomalous_ranges = {{6, 9}};
    CHECK_THROWS_AS(collect_eval_frames(s, bad), DataError);
}

TEST_CASE("metrics csv round trips", "[eval]") {
    auto table = sweep(kScores, kLabels, default_threshold_grid());
    table.excluded_frames = 9;
    const fs::path path = fs::temp_directory_path() / "vad_test_metrics.csv";
    write_metrics_csv(table, path);
    const auto r = read_metrics_csv(path);
    CHECK(r.evaluated_frames == table.evaluated_frames);
    CHECK(r.excluded_frames == 9);
    REQUIRE(r.rows.size() == table.rows.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        REQUIRE(r.rows[i].threshold == table.rows[i].threshold);
        REQUIRE(r.rows[i].tp == table.rows[i].tp);
        REQUIRE(r.rows[i].f1 == table.rows[i].f1);
    }
}
