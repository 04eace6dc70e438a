#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dgnerf/metrics.hpp"

using namespace dgnerf;

namespace {

Grid grid_of(std::vector<double> values) {
    Grid g(1, int(values.size()));
    g.data = std::move(values);
    return g;
}

Grid ones_like(const Grid& g) { return Grid(g.height, g.width, 1.0); }

}  // namespace

TEST_CASE("depth_metrics spot values") {
    auto exact = depth_metrics(grid_of({2, 4}), grid_of({2, 4}), grid_of({1, 1}));
    CHECK(exact.rmse == 0.0);
    CHECK(exact.abs_rel == 0.0);
    CHECK(exact.sq_rel == 0.0);
    CHECK(exact.rmse_log == 0.0);

    auto m = depth_metrics(grid_of({1, 2}), grid_of({2, 2}), grid_of({1, 1}));
    CHECK(m.rmse == doctest::Approx(0.707107).epsilon(1e-5));
    CHECK(m.abs_rel == doctest::Approx(0.5));
    CHECK(m.sq_rel == doctest::Approx(0.5));
    CHECK(m.rmse_log == doctest::Approx(0.490129).epsilon(1e-5));

    auto logm = depth_metrics(grid_of({1}), grid_of({std::exp(1.0)}), grid_of({1}));
    CHECK(logm.rmse_log == doctest::Approx(1.0));
}

TEST_CASE("depth_metrics validation and masking") {
    CHECK_THROWS_AS(depth_metrics(grid_of({1, 2}), grid_of({1}), grid_of({1})), InputError);
    CHECK_THROWS_AS(depth_metrics(grid_of({1}), grid_of({1}), grid_of({0})), InputError);
    CHECK_THROWS_AS(depth_metrics(grid_of({0.0}), grid_of({1}), grid_of({1})), InputError);
    CHECK_THROWS_AS(depth_metrics(grid_of({1.0}), grid_of({-1.0}), grid_of({1})),
                    NumericalError);

    // flipping an invalid pixel's prediction changes nothing
    auto gt = grid_of({1, 2, 3});
    auto mask = grid_of({1, 0, 1});
    auto base = depth_metrics(gt, grid_of({1.1, 2.0, 2.9}), mask);
    auto flipped = depth_metrics(gt, grid_of({1.1, 99.0, 2.9}), mask);
    CHECK(base.rmse == flipped.rmse);
    CHECK(base.abs_rel == flipped.abs_rel);
    CHECK(base.sq_rel == flipped.sq_rel);
    CHECK(base.rmse_log == flipped.rmse_log);
    CHECK(base.valid_pixel_fraction == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("depth metric scaling identities") {
    Rng rng(5);
    Grid gt(4, 4), pred(4, 4);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        gt.data[i] = rng.uniform(0.5, 3.0);
        pred.data[i] = rng.uniform(0.5, 3.0);
    }
    auto mask = ones_like(gt);
    auto base = depth_metrics(gt, pred, mask);

    const double s = 3.7;
    Grid gts = gt, preds = pred;
    for (double& v : gts.data) v *= s;
    for (double& v : preds.data) v *= s;
    auto scaled = depth_metrics(gts, preds, mask);
    CHECK(scaled.rmse == doctest::Approx(s * base.rmse).epsilon(1e-12));
    CHECK(scaled.abs_rel == doctest::Approx(base.abs_rel).epsilon(1e-12));
    CHECK(scaled.rmse_log == doctest::Approx(base.rmse_log).epsilon(1e-12));
}

TEST_CASE("all metrics vanish iff prediction equals ground truth") {
    Rng rng(11);
    Grid gt(3, 3);
    for (double& v : gt.data) v = rng.uniform(0.5, 2.0);
    auto mask = ones_like(gt);
    auto zero = depth_metrics(gt, gt, mask);
    CHECK(zero.rmse == 0.0);
    Grid off = gt;
    off.data[4] += 0.25;
    auto nonzero = depth_metrics(gt, off, mask);
    CHECK(nonzero.rmse > 0.0);
    CHECK(nonzero.abs_rel > 0.0);
    CHECK(nonzero.sq_rel > 0.0);
    CHECK(nonzero.rmse_log > 0.0);
}

TEST_CASE("psnr spot values") {
    // MSE = 0.01 -> 20 dB: offset one channel by 0.1*sqrt(3) over one pixel... easier:
    // uniform per-channel error of 0.1 gives MSE 0.01
    std::vector<Vec3> a{{0.5, 0.5, 0.5}}, b{{0.6, 0.6, 0.6}};
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(psnr(a, a) == kPsnrCap);
    std::vector<Vec3> black{{0, 0, 0}}, white{{1, 1, 1}};
    CHECK(psnr(black, white) == doctest::Approx(0.0));
    CHECK_THROWS_AS(psnr(a, std::vector<Vec3>{}), InputError);
}

TEST_CASE("align_scale_mean spot values") {
    CHECK(align_scale_mean(grid_of({2, 2}), grid_of({1, 1})) == doctest::Approx(2.0));
    CHECK(align_scale_mean(grid_of({1.5, 2.5}), grid_of({1.5, 2.5})) == doctest::Approx(1.0));
    CHECK(align_scale_mean(grid_of({2, 4}), grid_of({1, 1})) == doctest::Approx(3.0));
    CHECK_THROWS_AS(align_scale_mean(grid_of({0, 0}), grid_of({1, 1})), InputError);
    CHECK_THROWS_AS(align_scale_mean(grid_of({1}), grid_of({1, 1})), InputError);
}
