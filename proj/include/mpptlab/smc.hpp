#pragma once

#include <cstdint>
#include <vector>

namespace mpptlab {

/// Tuning of the sequential Monte Carlo voltage estimator.
struct SmcParams {
    int n_particles = 500;
    double m0 = 1e-2;      // adaptive step-size coefficient
    double sigma_w = 0.0;  // process noise std [V]
    double sigma_v = 0.0;  // measurement noise std [V]
    double v0 = 0.0;       // prior mean [V]
    double sigma0 = 1.0;   // prior std [V]
    double n_thr = 0.0;    // resampling threshold on ESS; 0 means N/2

    void validate() const;
    double resample_threshold() const { return n_thr > 0.0 ? n_thr : n_particles / 2.0; }
};

/// Weighted voltage samples. Weights stay normalized after every operation.
struct ParticleSet {
    std::vector<double> v;
    std::vector<double> w;
    bool weight_collapse = false; // set when the last update underflowed to zero

    std::size_t size() const { return v.size(); }
};

/// Inputs of the state-transition kernel for one propagation.
struct TransitionInputs {
    double slope_est = 0.0; // dP/dV estimate at the current operating point [W/V]
    double u = 0.0;         // refinement term [V]
    double v_egmpp = 0.0;   // latest predicted GMPP voltage [V]
};

/// Draw N particles from the Normal(v0, sigma0^2) prior with uniform weights.
ParticleSet init_particles(const SmcParams& params, std::uint64_t rng_seed);

/// Adaptive step size m(t) = m0 * (v - v_egmpp)^2.
double adaptive_step(double v, double v_egmpp, double m0);

/// Refinement u = (v_egmpp - v_meas) when an alarm is active, else 0.
double refinement_term(double v_egmpp, double v_meas, bool alarm_active);

/// Propagate every particle through the transition kernel
/// v' ~ Normal(v + m(v)*slope + u, sigma_w^2); weights carry over unchanged
/// because the trial distribution equals the transition density.
ParticleSet propagate(ParticleSet ps, const TransitionInputs& inputs, const SmcParams& params,
                      std::uint64_t rng_seed);

/// Multiply weights by the Gaussian measurement likelihood and renormalize.
/// A full underflow falls back to uniform weights and raises weight_collapse.
ParticleSet update_weights(ParticleSet ps, double v_measured, const SmcParams& params);

/// Weighted-mean state estimate.
double estimate(const ParticleSet& ps);

/// Effective sample size 1 / sum(w^2).
double effective_sample_size(const ParticleSet& ps);

/// Systematic resampling when the ESS drops below the threshold; resampled
/// weights are uniform. Returns the set unchanged otherwise.
ParticleSet resample_if_needed(ParticleSet ps, const SmcParams& params, std::uint64_t rng_seed);

} // namespace mpptlab
