#include "mpptlab/smc.hpp"

#include "mpptlab/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mpptlab {

void SmcParams::validate() const {
    if (n_particles < 2) throw std::invalid_argument("smc: n_particles must be >= 2");
    if (!(sigma_w > 0.0)) throw std::invalid_argument("smc: sigma_w must be > 0");
    if (!(sigma_v > 0.0)) throw std::invalid_argument("smc: sigma_v must be > 0");
    if (!(sigma0 >= 0.0)) throw std::invalid_argument("smc: sigma0 must be >= 0");
    if (n_thr != 0.0 && (n_thr < 1.0 || n_thr > n_particles)) {
        throw std::invalid_argument("smc: n_thr must lie in [1, N]");
    }
}

ParticleSet init_particles(const SmcParams& params, std::uint64_t rng_seed) {
    ParticleSet ps;
    ps.v.resize(params.n_particles);
    ps.w.assign(params.n_particles, 1.0 / params.n_particles);
    std::mt19937_64 rng = make_rng(rng_seed, 0x1217ULL);
    if (params.sigma0 > 0.0) {
        std::normal_distribution<double> prior(params.v0, params.sigma0);
        for (auto& v : ps.v) v = prior(rng);
    } else {
        for (auto& v : ps.v) v = params.v0;
    }
    return ps;
}

double adaptive_step(double v, double v_egmpp, double m0) {
    const double d = v - v_egmpp;
    return m0 * d * d;
}

double refinement_term(double v_egmpp, double v_meas, bool alarm_active) {
    return alarm_active ? v_egmpp - v_meas : 0.0;
}

ParticleSet propagate(ParticleSet ps, const TransitionInputs& inputs, const SmcParams& params,
                      std::uint64_t rng_seed) {
    std::mt19937_64 rng = make_rng(rng_seed, 0x9A09ULL);
    std::normal_distribution<double> process(0.0, 1.0);
    for (auto& v : ps.v) {
        const double m = adaptive_step(v, inputs.v_egmpp, params.m0);
        const double mean = v + m * inputs.slope_est + inputs.u;
        v = params.sigma_w > 0.0 ? mean + params.sigma_w * process(rng) : mean;
    }
    return ps; // trial = transition: weights cancel and carry over
}

ParticleSet update_weights(ParticleSet ps, double v_measured, const SmcParams& params) {
    const double inv_two_var = 1.0 / (2.0 * params.sigma_v * params.sigma_v);
    double sum = 0.0;
    for (std::size_t j = 0; j < ps.size(); ++j) {
        const double d = v_measured - ps.v[j];
        ps.w[j] *= std::exp(-d * d * inv_two_var);
        sum += ps.w[j];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        // every likelihood underflowed: keep the filter alive on uniform weights
        ps.w.assign(ps.size(), 1.0 / static_cast<double>(ps.size()));
        ps.weight_collapse = true;
        return ps;
    }
    for (auto& w : ps.w) w /= sum;
    ps.weight_collapse = false;
    return ps;
}

double estimate(const ParticleSet& ps) {
    double acc = 0.0;
    for (std::size_t j = 0; j < ps.size(); ++j) acc += ps.w[j] * ps.v[j];
    return acc;
}

double effective_sample_size(const ParticleSet& ps) {
    double sq = 0.0;
    for (double w : ps.w) sq += w * w;
    return sq > 0.0 ? 1.0 / sq : 0.0;
}

ParticleSet resample_if_needed(ParticleSet ps, const SmcParams& params, std::uint64_t rng_seed) {
    if (effective_sample_size(ps) >= params.resample_threshold()) {
        return ps;
    }
    const std::size_t n = ps.size();
    std::mt19937_64 rng = make_rng(rng_seed, 0x5E5AULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double offset = unit(rng);

    std::vector<double> resampled;
    resampled.reserve(n);
    double cumulative = ps.w[0];
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double target = (offset + static_cast<double>(j)) / static_cast<double>(n);
        while (cumulative < target && idx + 1 < n) {
            ++idx;
            cumulative += ps.w[idx];
        }
        resampled.push_back(ps.v[idx]);
    }
    ps.v = std::move(resampled);
    ps.w.assign(n, 1.0 / static_cast<double>(n));
    return ps;
}

} // namespace mpptlab
