#pragma once

#include "mpptlab/ann.hpp"
#include "mpptlab/change_detect.hpp"
#include "mpptlab/pv_model.hpp"
#include "mpptlab/rng.hpp"
#include "mpptlab/smc.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mpptlab {

enum class AnnMode { none, vi_probes, irradiance };
enum class ControllerKind { enhanced, ic_baseline, ann_ic_baseline };

struct ControllerConfig {
    double f_s = 20.0; // sampling frequency [Hz]
    SmcParams smc;
    GllrParams gllr;
    AnnMode ann_mode = AnnMode::none;
    double probe_half_width = 10.0; // [V]
    int m_probes = 8;
    ControllerKind kind = ControllerKind::enhanced;
    double ic_gain = 0.2; // fixed-step baselines: delta = ic_gain * dP/dV
    double h1 = 0.0;      // |P(t)-P(t-1)| trigger threshold of the baseline [W]

    void validate() const;
};

/// Telemetry for one sampling instant.
struct StepRecord {
    double t = 0;
    double v_cmd = 0;
    double v_meas = 0;
    double i_meas = 0;
    double p_meas = 0;
    double g = 0;
    bool alarm = false;
    bool ann_triggered = false;
    double v_hat = 0;
    double v_egmpp = 0;
};

struct Measurement {
    double v = 0;
    double i = 0;
    double p = 0;
};

/// Noisy plant measurement at the commanded voltage: v and i carry Gaussian
/// noise, p is exactly their product.
Measurement measure(const PvArray& plant, const EnvironmentProfile::Entry& env, double v_command,
                    double sigma_v, double sigma_i, std::mt19937_64& rng);

/// Guarded finite-difference power slope: below 1e-3 V of voltage separation
/// the previous slope is reused.
double slope_estimate(double v_prev, double p_prev, double v_now, double p_now,
                      double prev_slope);

/// M probe voltages drawn uniformly in [v_now - half_width, v_now + half_width],
/// clamped to [0, v_oc_array] and sorted ascending.
std::vector<double> generate_probe_voltages(double v_now, double half_width, int m_probes,
                                            double v_oc_array, std::mt19937_64& rng);

/// Closed-loop MPPT controller: detector + SMC estimator + ANN prediction for
/// the enhanced kind, fixed-step I-C variants for the comparison kinds.
class Controller {
public:
    enum class Phase { tracking, probing, rebaseline };

    Controller(ControllerConfig config, const PvArray& plant, const EnvironmentProfile& env,
               const MlpModel* ann, std::uint64_t seed);

    StepRecord step(double t);

    Phase phase() const { return phase_; }
    double v_command() const { return v_command_; }
    const ParticleSet& particles() const { return particles_; }
    const GllrState& detector() const { return detector_; }
    double sigma_i() const { return sigma_i_; }

private:
    ControllerConfig cfg_;
    const PvArray& plant_;
    const EnvironmentProfile& env_;
    const MlpModel* ann_;
    double v_oc_array_;
    double sigma_i_;

    Phase phase_ = Phase::tracking;
    double v_command_ = 0;
    double v_hat_ = 0;
    double v_egmpp_latest_ = 0;
    bool alarm_latch_ = false;
    double last_slope_ = 0;
    bool has_prev_ = false;
    double prev_v_meas_ = 0;
    double prev_p_meas_ = 0;
    double v_ref_meas_ = 0; // last tracking-phase voltage measurement

    ParticleSet particles_;
    GllrState detector_;
    double rebase_accum_ = 0;
    int rebase_count_ = 0;
    std::vector<double> probe_voltages_;
    std::vector<std::pair<double, double>> probe_meas_;

    double v_ref_ic_ = 0; // baseline I-C reference voltage
    int holdoff_ = 0;     // baseline re-trigger suppression counter

    std::mt19937_64 rng_meas_;
    std::mt19937_64 rng_ctrl_;
    std::uint64_t seed_;
    std::uint64_t draw_counter_ = 0;
    long step_index_ = 0;

    std::uint64_t next_seed() { return derive_seed(seed_, ++draw_counter_); }
    void step_enhanced(StepRecord& rec, const EnvironmentProfile::Entry& env_now);
    void step_ic(StepRecord& rec);
    void step_ann_ic(StepRecord& rec, const EnvironmentProfile::Entry& env_now);
    void smc_update(StepRecord& rec, bool from_probing = false);
    void update_slope(const StepRecord& rec);
    void enter_rebaseline();
    void begin_probing(const StepRecord& rec);
    void finish_probing(StepRecord& rec);
    double predict_from_env(const EnvironmentProfile::Entry& env_now) const;
};

/// Simulate t = 0 .. t_end at f_s; one record per sampling instant.
std::vector<StepRecord> run_episode(const ControllerConfig& config, const PvArray& plant,
                                    const EnvironmentProfile& env, const MlpModel* ann,
                                    double t_end, std::uint64_t seed);

} // namespace mpptlab
