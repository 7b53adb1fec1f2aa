#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mpptlab {

/// Parameters of the GLLR sequential change test.
struct GllrParams {
    double b = 6.0;        // drift parameter of the local expansion (> 0)
    double h = 0.0;        // decision threshold; 0 means "calibrate before use"
    double sigma_nu = 1.0; // measurement-noise std of the power signal [W]
    int p = 5;             // AR window order
    double gamma_s = 20.0; // target false-alarm period [s]

    void validate() const;
};

/// Running state of one detector instance.
struct GllrState {
    double g = 0.0;                // running statistic, kept >= 0
    std::vector<double> window;    // last p post-processed samples, oldest first
    double nominal_power = 0.0;    // baseline subtracted from raw measurements [W]
    long t_started = 0;            // sample index at (re)start
};

/// Fitted autoregressive description of a faulty (post-change) signal.
struct ArModel {
    int order = 0;
    std::vector<double> coeffs;    // a(1..p)
    double mean = 0.0;             // mu_tilde [W]
    double innovation_var = 0.0;   // [W^2]
};

struct GllrStepResult {
    GllrState state;
    bool alarm = false;
};

/// Baseline removal: returns p_measured - nominal.
double postprocess(double p_measured, double nominal);

/// One GLLR increment l_t = b*||z_t|| - b^2/2 from the current post-processed
/// sample and the window of the previous p samples.
double gllr_increment(double p_tilde_now, std::span<const double> window,
                      const GllrParams& params);

/// One detector step on a raw power measurement. During warm-up (window not
/// yet full) the statistic stays at zero and no alarm can fire.
GllrStepResult gllr_step(GllrState state, double p_measured, const GllrParams& params);

/// Restart after an alarm: the new nominal power is the mean of the first
/// K post-alarm measurements. Throws "insufficient-samples" when fewer than
/// K measurements are supplied.
inline constexpr int kRebaselineSamples = 20;
GllrState reset_after_alarm(const GllrState& state, std::span<const double> recent_measurements);

/// Calibrate h so that the Monte-Carlo mean run length of the noise-only
/// recursion matches gamma*f_s within 10%. Deterministic given the seed.
double calibrate_threshold(double b, double sigma_nu, double gamma_s, double f_s,
                           int n_runs, std::uint64_t rng_seed, int p = 5);

/// Noise-only run lengths of the recursion at a fixed threshold, capped at
/// `cap` samples per run. Basis of the calibration and the histogram output.
std::vector<long> gllr_noise_run_lengths(double b, double h, int p, int n_runs,
                                         std::uint64_t rng_seed, long cap);

/// Calibrate the |P(t)-P(t-1)| >= h1 threshold rule of the comparison
/// controllers to the same Monte-Carlo false-alarm period.
double calibrate_power_diff_threshold(double sigma_nu, double gamma_s, double f_s,
                                      int n_runs, std::uint64_t rng_seed);

/// Ordinary-least-squares AR(p) fit of a signal (mean removed).
ArModel fit_ar(std::span<const double> signal, int order);

/// k-fold one-step-ahead prediction NRMSE per candidate order.
std::vector<std::pair<int, double>> ar_cross_validate_nrmse(std::span<const double> signal,
                                                            std::span<const int> orders,
                                                            int k_folds);

/// Simulate the AR fault model and add white measurement noise on top.
/// Rejects unstable coefficient sets.
std::vector<double> synth_fault_signal(const ArModel& model, int length, double sigma_nu,
                                       std::uint64_t rng_seed);

} // namespace mpptlab
