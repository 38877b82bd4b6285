#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "agfuse/error.hpp"
#include "agfuse/parallel.hpp"
#include "agfuse/rf/forest.hpp"
#include "agfuse/rng.hpp"
#include "support/fixtures.hpp"

using namespace agfuse;
using namespace agfuse::rf;

namespace {

std::vector<QuadratSample> linear_samples(std::size_t n, std::uint64_t seed, double noise) {
    CounterRng rng(seed);
    std::vector<QuadratSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        QuadratSample s;
        s.id = "q" + std::to_string(i);
        for (int f = 0; f < 5; ++f) s.features.push_back(rng.uniform());
        s.target = 3.0 * s.features[0] - 2.0 * s.features[2] + noise * rng.normal();
        out.push_back(s);
    }
    return out;
}

// Independent recursive traversal over the serialized form.
double traverse_json(const nlohmann::json& nodes, int n, const std::vector<double>& x) {
    const auto& node = nodes.at(static_cast<std::size_t>(n));
    const int f = node.at(0).get<int>();
    if (f < 0) return node.at(4).get<double>();
    const bool left = x[static_cast<std::size_t>(f)] <= node.at(1).get<double>();
    return traverse_json(nodes, left ? node.at(2).get<int>() : node.at(3).get<int>(), x);
}

}  // namespace

TEST_CASE("quadrat features use pixel-centre containment") {
    raster::Raster r(testing::unit_grid(16, 16, 0.125), testing::named_bands(2));
    for (int row = 0; row < 16; ++row) {
        for (int col = 0; col < 16; ++col) {
            r.at(0, row, col) = static_cast<float>(row * 16 + col);
            r.at(1, row, col) = 0.25f;
        }
    }
    // Corner-aligned 0.5 m square over rows 4..7, cols 2..5.
    const double x = r.grid().origin_x + (2 + 2) * 0.125;
    const double y = r.grid().origin_y - (4 + 2) * 0.125;
    const auto s = extract_quadrat_features(r, {{"a", x, y, 0.5, 1.0}});
    double naive = 0.0;
    int count = 0;
    for (int row = 4; row < 8; ++row) {
        for (int col = 2; col < 6; ++col) {
            naive += r.at(0, row, col);
            ++count;
        }
    }
    CHECK(count == 16);
    CHECK(s[0].features[0] == doctest::Approx(naive / count).epsilon(1e-7));
    CHECK(s[0].features[1] == doctest::Approx(0.25));
    CHECK(s[0].target == 1.0);

    // Shifting the square by a quarter pixel keeps the same 16 centres.
    const auto s2 = extract_quadrat_features(r, {{"b", x + 0.03, y - 0.03, 0.5, 0.0}});
    CHECK(s2[0].features[0] == doctest::Approx(naive / count).epsilon(1e-7));
}

TEST_CASE("quadrat with no valid pixel is a coverage error naming it") {
    raster::Raster r(testing::unit_grid(8, 8, 0.125), testing::named_bands(1));
    for (int row = 0; row < 8; ++row)
        for (int col = 0; col < 8; ++col) r.set_valid(row, col, false);
    try {
        extract_quadrat_features(r, {{"plot-17", r.grid().origin_x + 0.5, r.grid().origin_y - 0.5, 0.5, 0}});
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Coverage);
        CHECK(std::string(e.what()).find("plot-17") != std::string::npos);
    }
    CHECK(testing::kind_of([&] {
              extract_quadrat_features(r, {{"far", 1e6, 1e6, 0.5, 0}});
          }) == ErrorKind::Coverage);
}

TEST_CASE("constant target predicts the constant") {
    auto samples = linear_samples(50, 3, 0.0);
    for (auto& s : samples) s.target = 2.5;
    ForestConfig cfg;
    cfg.n_trees = 20;
    const auto m = fit_forest(samples, cfg, 1);
    for (const auto& s : samples) CHECK(predict(m, s.features) == 2.5);
    cfg.bootstrap = false;
    cfg.max_depth = 2;
    const auto m2 = fit_forest(samples, cfg, 1);
    for (const auto& t : m2.trees) CHECK(t.nodes.size() == 1);
}

TEST_CASE("fully grown tree without bootstrap memorises") {
    const auto samples = linear_samples(80, 4, 0.3);
    ForestConfig cfg;
    cfg.n_trees = 5;
    cfg.bootstrap = false;
    const auto m = fit_forest(samples, cfg, 9);
    for (const auto& s : samples) {
        for (const auto& t : m.trees) CHECK(t.predict(s.features) == s.target);
        CHECK(predict(m, s.features) == doctest::Approx(s.target).epsilon(1e-14));
    }
    CHECK(std::isnan(m.oob_r2));
}

TEST_CASE("single tree forest returns its leaf and matches an independent traversal") {
    const auto samples = linear_samples(120, 5, 0.05);
    ForestConfig cfg;
    cfg.n_trees = 1;
    const auto one = fit_forest(samples, cfg, 2);
    const auto qs = linear_samples(30, 77, 0.0);
    for (const auto& q : qs) CHECK(predict(one, q.features) == one.trees[0].predict(q.features));

    cfg.n_trees = 25;
    const auto m = fit_forest(samples, cfg, 2);
    const auto j = to_json(m);
    double lo = 1e300, hi = -1e300;
    for (const auto& s : samples) {
        lo = std::min(lo, s.target);
        hi = std::max(hi, s.target);
    }
    for (const auto& q : qs) {
        double sum = 0.0;
        for (const auto& t : j.at("trees")) sum += traverse_json(t, 0, q.features);
        CHECK(predict(m, q.features) == doctest::Approx(sum / 25).epsilon(1e-12));
        CHECK(predict(m, q.features) >= lo);
        CHECK(predict(m, q.features) <= hi);
    }
    const auto back = forest_from_json(j);
    for (const auto& q : qs) CHECK(predict(back, q.features) == predict(m, q.features));
}

TEST_CASE("leaves respect min_samples_leaf") {
    const auto samples = linear_samples(100, 6, 0.1);
    ForestConfig cfg;
    cfg.n_trees = 10;
    cfg.min_samples_leaf = 5;
    const auto m = fit_forest(samples, cfg, 3);
    for (const auto& t : m.trees)
        for (const auto& n : t.nodes)
            if (n.feature < 0) CHECK(n.samples >= 5);
}

TEST_CASE("linear benchmark reaches OOB R2 >= 0.8") {
    const auto samples = linear_samples(200, 11, 0.05);
    const auto m = fit_forest(samples, ForestConfig{}, 42);
    CHECK(m.trees.size() == 500);
    CHECK(m.oob_r2 >= 0.8);
}

TEST_CASE("forest fit is independent of thread count") {
    const auto samples = linear_samples(150, 12, 0.05);
    ForestConfig cfg;
    cfg.n_trees = 64;
    const int saved = thread_count();
    set_thread_count(1);
    const auto a = to_json(fit_forest(samples, cfg, 5)).dump();
    set_thread_count(4);
    const auto b = to_json(fit_forest(samples, cfg, 5)).dump();
    set_thread_count(saved);
    CHECK(a == b);
}

TEST_CASE("prediction length mismatch is a schema error") {
    const auto samples = linear_samples(20, 1, 0.0);
    ForestConfig cfg;
    cfg.n_trees = 3;
    const auto m = fit_forest(samples, cfg, 1);
    const std::vector<double> x(4, 0.0);
    CHECK(testing::kind_of([&] { predict(m, x); }) == ErrorKind::Schema);
}

TEST_CASE("cross validation benchmarks") {
    SUBCASE("perfect linear target") {
        const auto samples = linear_samples(200, 21, 0.0);
        ForestConfig strong;
        strong.max_features = 5;
        const auto r = cross_validate(samples, 5, strong, 8);
        CHECK(r.pooled_r2 > 0.95);
        CHECK(r.folds.size() == 5);
        std::size_t total = 0;
        for (const auto& f : r.folds) total += f.n_test;
        CHECK(total == 200);
    }
    SUBCASE("pure noise target") {
        auto samples = linear_samples(200, 22, 0.0);
        CounterRng rng(99);
        for (auto& s : samples) s.target = rng.normal();
        const auto r = cross_validate(samples, 5, ForestConfig{}, 8);
        CHECK(r.pooled_r2 <= 0.1);
    }
    SUBCASE("same seed twice") {
        const auto samples = linear_samples(60, 23, 0.1);
        ForestConfig cfg;
        cfg.n_trees = 30;
        const auto a = cross_validate(samples, 5, cfg, 4);
        const auto b = cross_validate(samples, 5, cfg, 4);
        CHECK(to_json(a).dump() == to_json(b).dump());
        const auto c = cross_validate(samples, 5, cfg, 5);
        CHECK(a.fold_of != c.fold_of);
    }
    SUBCASE("k larger than n") {
        const auto samples = linear_samples(4, 1, 0.0);
        CHECK(testing::kind_of([&] { cross_validate(samples, 5, ForestConfig{}, 1); }) == ErrorKind::Partition);
    }
}

TEST_CASE("100 vs 500 trees pooled RMSE stability") {
    const auto samples = linear_samples(200, 31, 0.05);
    ForestConfig small;
    small.n_trees = 100;
    const auto a = cross_validate(samples, 5, small, 3);
    const auto b = cross_validate(samples, 5, ForestConfig{}, 3);
    CHECK(b.pooled_rmse <= a.pooled_rmse * 1.02);
}

TEST_CASE("samples CSV round trip and errors") {
    SampleTable t;
    t.feature_names = {"B2", "B3"};
    t.samples.push_back({"a", 1.5, -2.25, 0.5, 3.0, {0.1, 0.2}});
    t.samples.push_back({"b", 0.0, 0.0, 0.5, -1.0, {1.0 / 3.0, 0.7}});
    const auto back = parse_samples_csv(format_samples_csv(t));
    CHECK(back.feature_names == t.feature_names);
    REQUIRE(back.samples.size() == 2);
    CHECK(back.samples[1].features[0] == 1.0 / 3.0);
    CHECK(back.samples[0].y_m == -2.25);
    CHECK(testing::kind_of([] { parse_samples_csv("id,x_m,y_m,side_m,target\n"); }) == ErrorKind::Validation);
    CHECK(testing::kind_of([] { parse_samples_csv("id,x_m,y_m,side_m,target,B2\na,1,2,0.5,1\n"); }) ==
          ErrorKind::Validation);
    CHECK(testing::kind_of([] { parse_samples_csv("id,x_m,y_m,side_m,target,B2\na,1,2,0.5,x,1\n"); }) ==
          ErrorKind::Validation);
}

TEST_CASE("quadrat list CSV round trip ignores band columns") {
    const std::vector<rf::Quadrat> qs = {{"q1", 1.25, -3.5, 0.5, 2.0}, {"q2", 0.1, 0.2, 0.25, -1.0 / 3.0}};
    const auto back = rf::parse_quadrats_csv(rf::format_quadrats_csv(qs));
    REQUIRE(back.size() == 2);
    CHECK(back[1].id == "q2");
    CHECK(back[1].target == qs[1].target);
    CHECK(back[0].side_m == 0.5);
    const auto from_samples = rf::parse_quadrats_csv("id,x_m,y_m,side_m,target,B2\nq,1,2,0.5,3,0.1\n");
    REQUIRE(from_samples.size() == 1);
    CHECK(from_samples[0].y_m == 2.0);
    CHECK_THROWS_AS(rf::parse_samples_csv("id,x_m,y_m,side_m,target\nq,1,2,0.5,3\n"), Error);
}
