#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mpptlab/rng.hpp"
#include "mpptlab/smc.hpp"

#include <cmath>
#include <map>
#include <random>

using namespace mpptlab;

namespace {

SmcParams basic_params(int n = 500) {
    SmcParams p;
    p.n_particles = n;
    p.sigma_w = 0.1;
    p.sigma_v = 0.1;
    p.v0 = 100.0;
    p.sigma0 = 1.0;
    return p;
}

double weight_sum(const ParticleSet& ps) {
    double s = 0.0;
    for (double w : ps.w) s += w;
    return s;
}

} // namespace

TEST_CASE("initial particles follow the prior with uniform weights") {
    auto params = basic_params(2000);
    double grand_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto ps = init_particles(params, seed);
        REQUIRE(ps.size() == 2000);
        for (double w : ps.w) CHECK(w == doctest::Approx(1.0 / 2000));
        double mean = 0.0;
        for (double v : ps.v) mean += v;
        mean /= ps.size();
        CHECK(std::abs(mean - params.v0) < 3.0 * params.sigma0 / std::sqrt(2000.0));
        grand_mean += mean;
    }
    CHECK(grand_mean / 20.0 == doctest::Approx(params.v0).epsilon(1e-3));

    auto degenerate = basic_params(50);
    degenerate.sigma0 = 0.0;
    auto ps = init_particles(degenerate, 7);
    for (double v : ps.v) CHECK(v == degenerate.v0);
}

TEST_CASE("adaptive step size") {
    CHECK(adaptive_step(80.0, 80.0, 1e-2) == 0.0);
    CHECK(adaptive_step(90.0, 80.0, 1e-2) == doctest::Approx(1.0));
    CHECK(adaptive_step(80.0 + 3.7, 80.0, 1e-2) ==
          doctest::Approx(adaptive_step(80.0 - 3.7, 80.0, 1e-2)));
}

TEST_CASE("refinement term follows the alarm indicator") {
    CHECK(refinement_term(50.0, 107.0, false) == 0.0);
    CHECK(refinement_term(50.0, 107.0, true) == doctest::Approx(-57.0));
    CHECK(refinement_term(107.0, 107.0, true) == 0.0);
}

TEST_CASE("propagation drifts particles through the transition kernel") {
    auto params = basic_params(100);

    // identity drift: slope 0, u 0, vanishing process noise
    auto frozen = params;
    frozen.sigma_w = 1e-300;
    auto ps = init_particles(frozen, 3);
    auto moved = propagate(ps, {0.0, 0.0, 90.0}, frozen, 4);
    for (std::size_t j = 0; j < ps.size(); ++j) {
        CHECK(moved.v[j] == doctest::Approx(ps.v[j]).epsilon(1e-12));
    }

    // all particles at v_egmpp: the adaptive step vanishes, only u moves them
    ParticleSet at_target;
    at_target.v.assign(100, 80.0);
    at_target.w.assign(100, 0.01);
    auto shifted = propagate(at_target, {-5.0, 2.5, 80.0}, frozen, 5);
    double mean = 0.0;
    for (double v : shifted.v) mean += v;
    CHECK(mean / 100.0 == doctest::Approx(82.5).epsilon(1e-9));

    // particle 10 V above v_egmpp with slope -5 W/V and m0 = 1e-2 moves -5 V
    ParticleSet one;
    one.v = {90.0};
    one.w = {1.0};
    auto p1 = frozen;
    p1.n_particles = 2; // validate() not exercised here; kernel math only
    auto res = propagate(one, {-5.0, 0.0, 80.0}, p1, 6);
    CHECK(res.v[0] == doctest::Approx(85.0).epsilon(1e-12));

    // weights carry over unchanged
    for (double w : res.w) CHECK(w == 1.0);
}

TEST_CASE("weight update is a normalized Gaussian likelihood") {
    auto params = basic_params(2);
    ParticleSet ps;
    ps.v = {99.0, 101.0};
    ps.w = {0.5, 0.5};
    auto updated = update_weights(ps, 100.0, params);
    CHECK(updated.w[0] == doctest::Approx(0.5));
    CHECK(updated.w[1] == doctest::Approx(0.5));
    CHECK(weight_sum(updated) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(updated.weight_collapse);

    // likelihood concentration as sigma_v -> 0
    auto sharp = params;
    sharp.sigma_v = 1e-4;
    ParticleSet near;
    near.v = {100.0, 100.5};
    near.w = {0.5, 0.5};
    auto conc = update_weights(near, 100.0, sharp);
    CHECK(conc.w[0] > 1.0 - 1e-12);

    // full underflow falls back to uniform weights and flags the collapse
    ParticleSet far;
    far.v = {0.0, 1.0};
    far.w = {0.5, 0.5};
    auto collapsed = update_weights(far, 1000.0, sharp);
    CHECK(collapsed.weight_collapse);
    CHECK(collapsed.w[0] == doctest::Approx(0.5));
    CHECK(weight_sum(collapsed) == doctest::Approx(1.0));
}

TEST_CASE("weighted-mean estimate") {
    ParticleSet ps;
    ps.v = {10.0, 20.0};
    ps.w = {0.25, 0.75};
    CHECK(estimate(ps) == doctest::Approx(17.5));

    ParticleSet uniform;
    uniform.v = {1.0, 2.0, 3.0, 4.0};
    uniform.w.assign(4, 0.25);
    CHECK(estimate(uniform) == doctest::Approx(2.5));

    ParticleSet lone;
    lone.v = {5.0, 9.0};
    lone.w = {0.0, 1.0};
    CHECK(estimate(lone) == doctest::Approx(9.0));
}

TEST_CASE("effective sample size boundary cases") {
    ParticleSet uniform;
    uniform.v.assign(100, 1.0);
    uniform.w.assign(100, 0.01);
    CHECK(effective_sample_size(uniform) == doctest::Approx(100.0));

    ParticleSet degenerate;
    degenerate.v = {1.0, 2.0, 3.0};
    degenerate.w = {1.0, 0.0, 0.0};
    CHECK(effective_sample_size(degenerate) == doctest::Approx(1.0));

    ParticleSet half;
    half.v = {1.0, 2.0, 3.0};
    half.w = {0.5, 0.5, 0.0};
    CHECK(effective_sample_size(half) == doctest::Approx(2.0));
}

TEST_CASE("systematic resampling triggers below the threshold and is unbiased") {
    auto params = basic_params(4);
    params.n_thr = 2.0;

    // uniform weights: ESS = N >= threshold, unchanged
    ParticleSet uniform;
    uniform.v = {1.0, 2.0, 3.0, 4.0};
    uniform.w.assign(4, 0.25);
    auto same = resample_if_needed(uniform, params, 1);
    CHECK(same.v == uniform.v);

    // skewed weights force a resample with uniform output weights
    ParticleSet skew;
    skew.v = {1.0, 2.0, 3.0, 4.0};
    skew.w = {0.94, 0.02, 0.02, 0.02};
    auto re = resample_if_needed(skew, params, 2);
    for (double w : re.w) CHECK(w == doctest::Approx(0.25));

    // unbiasedness: expected multiplicity of each particle is N * weight
    SmcParams p10 = basic_params(10);
    p10.n_thr = 10.0; // always resample
    ParticleSet base;
    base.v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    base.w = {0.05, 0.15, 0.3, 0.02, 0.08, 0.1, 0.05, 0.05, 0.15, 0.05};
    std::map<double, double> counts;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        auto r = resample_if_needed(base, p10, 100 + trial);
        for (double v : r.v) counts[v] += 1.0;
    }
    for (std::size_t j = 0; j < base.v.size(); ++j) {
        const double expected = 10.0 * base.w[j];
        const double observed = counts[base.v[j]] / trials;
        CHECK(std::abs(observed - expected) < 0.1 * std::max(expected, 0.5));
    }
}

TEST_CASE("weights stay normalized through a full update cycle") {
    auto params = basic_params(300);
    auto ps = init_particles(params, 9);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> meas(params.v0, params.sigma_v);
    for (int t = 0; t < 50; ++t) {
        ps = propagate(std::move(ps), {0.0, 0.0, params.v0}, params, 100 + t);
        ps = update_weights(std::move(ps), meas(rng), params);
        CHECK(weight_sum(ps) == doctest::Approx(1.0).epsilon(1e-12));
        ps = resample_if_needed(std::move(ps), params, 200 + t);
        CHECK(weight_sum(ps) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("full importance ratio reduces to the likelihood-only update") {
    auto params = basic_params(50);
    auto prior = init_particles(params, 21);
    TransitionInputs inputs{-2.0, 0.5, 99.0};

    auto moved = propagate(prior, inputs, params, 22);
    const double v_meas = 100.3;

    // likelihood-only update (the implementation)
    auto simple = update_weights(moved, v_meas, params);

    // full ratio with trial = transition evaluated explicitly
    std::vector<double> full(moved.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < moved.size(); ++j) {
        const double m = adaptive_step(prior.v[j], inputs.v_egmpp, params.m0);
        const double mean = prior.v[j] + m * inputs.slope_est + inputs.u;
        const double trans_d = std::exp(-std::pow(moved.v[j] - mean, 2) /
                                        (2.0 * params.sigma_w * params.sigma_w));
        const double lik = std::exp(-std::pow(v_meas - moved.v[j], 2) /
                                    (2.0 * params.sigma_v * params.sigma_v));
        full[j] = prior.w[j] * lik * trans_d / trans_d;
        sum += full[j];
    }
    for (std::size_t j = 0; j < full.size(); ++j) {
        CHECK(full[j] / sum == doctest::Approx(simple.w[j]).epsilon(1e-12));
    }
}

TEST_CASE("static-truth convergence keeps the RMSE below sigma_v") {
    auto params = basic_params(500);
    params.v0 = 120.0;
    params.sigma0 = 1.0;
    params.sigma_w = 0.1;
    params.sigma_v = 0.1;
    const double v_true = 120.0;

    double sq_err = 0.0;
    const int runs = 100;
    for (int run = 0; run < runs; ++run) {
        std::mt19937_64 rng = make_rng(4242, run);
        std::normal_distribution<double> meas_noise(0.0, params.sigma_v);
        auto ps = init_particles(params, 1000 + run);
        double v_hat = params.v0;
        for (int t = 0; t < 50; ++t) {
            ps = propagate(std::move(ps), {0.0, 0.0, v_true}, params,
                           derive_seed(run, 2 * t));
            ps = update_weights(std::move(ps), v_true + meas_noise(rng), params);
            v_hat = estimate(ps);
            ps = resample_if_needed(std::move(ps), params, derive_seed(run, 2 * t + 1));
        }
        sq_err += (v_hat - v_true) * (v_hat - v_true);
    }
    const double rmse = std::sqrt(sq_err / runs);
    CHECK(rmse < params.sigma_v);
}

TEST_CASE("identical seeds give bit-identical trajectories") {
    auto params = basic_params(200);
    auto run = [&]() {
        auto ps = init_particles(params, 55);
        for (int t = 0; t < 20; ++t) {
            ps = propagate(std::move(ps), {-1.0, 0.0, 101.0}, params, 300 + t);
            ps = update_weights(std::move(ps), 100.0 + 0.01 * t, params);
            ps = resample_if_needed(std::move(ps), params, 400 + t);
        }
        return ps;
    };
    auto a = run();
    auto b = run();
    CHECK(a.v == b.v);
    CHECK(a.w == b.w);
}

TEST_CASE("parameter validation") {
    SmcParams p;
    CHECK_THROWS(p.validate()); // sigma_w unset
    p = basic_params();
    p.n_particles = 1;
    CHECK_THROWS(p.validate());
    p = basic_params();
    p.n_thr = 1e9;
    CHECK_THROWS(p.validate());
    p = basic_params();
    CHECK_NOTHROW(p.validate());
    CHECK(p.resample_threshold() == doctest::Approx(250.0));
}
