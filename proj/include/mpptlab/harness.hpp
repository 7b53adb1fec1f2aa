#pragma once

#include "mpptlab/controller.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpptlab {

/// Auto-training recipe for controllers that need an ANN but name no file.
struct AnnTrainSpec {
    std::vector<double> irradiance_levels; // empty: 10 uniform levels in [0.1, 1]
    std::vector<int> hidden_layers = {20, 10};
    int epochs = 2000;
    int probes_per_pattern = 4; // vi mode
    int candidates = 3;
    int validation_patterns = 200;
    std::uint64_t seed = 42;
};

struct ControllerSpec {
    std::string name;
    ControllerConfig config;
    std::string ann_model_file; // empty: train from the scenario
};

struct ScenarioConfig {
    PvModuleParams module;
    ArrayTopology topology;
    EnvironmentProfile environment;
    std::vector<ControllerSpec> controllers;
    AnnTrainSpec ann;
    double t_end_s = 10.0;
    int n_replications = 100;
    std::uint64_t base_seed = 1;
    int calibration_runs = 300;

    void validate() const;
};

ScenarioConfig load_scenario(const std::string& path);

/// Scenario with thresholds calibrated, the prior fitted and models resolved.
struct PreparedExperiment {
    ScenarioConfig scenario;
    PvArray plant;
    std::vector<MlpModel> models;            // one slot per controller (may be unused)
    std::vector<bool> has_model;
    std::vector<std::pair<double, double>> oracle; // (v_gmpp, p_gmpp) per schedule entry
    double prior_v0 = 0;
    double prior_sigma0 = 0;
};

PreparedExperiment prepare_experiment(ScenarioConfig scenario);

/// Sample mean/std of the measured voltage from an offline fixed-step run
/// under the first schedule entry; used as the SMC prior when the scenario
/// does not pin one.
std::pair<double, double> fit_prior_from_uniform_run(const PvArray& plant,
                                                     const EnvironmentProfile::Entry& env,
                                                     double f_s, double sigma_v,
                                                     std::uint64_t seed);

// -- Metric operations --

/// First delay t - t_shading at which the averaged power trace reaches
/// fraction * p_gmpp_new and stays there for at least `sustain` samples.
std::optional<double> delay_to_fraction(std::span<const double> times,
                                        std::span<const double> p_avg, double t_shading,
                                        double p_gmpp_new, double fraction, int sustain = 3,
                                        double window_end = 1e300);

/// (1 - n_gllr/n_threshold) * 100, on trigger counts over a common duration.
double resource_saving(long n_gllr_triggers, long n_threshold_triggers, double duration_s);

struct EfficiencyPoint {
    double delay_s = 0;
    double p_ratio = 0;
    double v_ratio = 0;
};

/// Replication-averaged power/voltage ratios against the post-change GMPP.
std::vector<EfficiencyPoint> efficiency_curve(std::span<const double> times,
                                              std::span<const double> p_avg,
                                              std::span<const double> v_avg, double t_shading,
                                              double p_gmpp_new, double v_gmpp_new,
                                              double window_end = 1e300);

struct TransitionMetrics {
    int transition = 0; // schedule index of the entry that starts the window
    double t_shading_s = 0;
    double v_gmpp_new_v = 0;
    double p_gmpp_new_w = 0;
    std::optional<double> delay70_s;
    std::optional<double> delay80_s;
    std::optional<double> delay95_s;
    std::vector<EfficiencyPoint> efficiency;
};

struct ControllerMetrics {
    std::string name;
    double ann_triggers_mean = 0; // per episode
    double ann_trigger_rate_hz = 0;
    std::optional<double> resource_saving_pct;
    int failures = 0;
    double h_used = 0;
    double h1_used = 0;
    std::vector<TransitionMetrics> transitions;
};

struct MetricsReport {
    std::vector<ControllerMetrics> controllers;
    std::vector<std::pair<double, std::pair<double, double>>> oracle; // t_start -> (v, p)
};

/// Pure reduction from recorded episodes to the metrics report.
MetricsReport compute_metrics(const PreparedExperiment& prepared,
                              const std::vector<std::vector<std::vector<StepRecord>>>& episodes,
                              const std::vector<int>& failures);

/// Full experiment: episodes for every controller and replication, metric
/// aggregation, CSV emission into out_dir. Episode failures are recorded and
/// the run continues.
MetricsReport run_experiment(const ScenarioConfig& scenario, const std::string& out_dir);

// -- CSV I/O (deterministic formatting, %.17g round-trip) --

void write_trace_csv(const std::string& path, std::span<const StepRecord> records);
std::vector<StepRecord> read_trace_csv(const std::string& path);
void write_metrics_csv(const std::string& path, const MetricsReport& report);
void write_efficiency_csv(const std::string& path, const MetricsReport& report);
void write_gmpp_csv(const std::string& path, const ScenarioConfig& scenario,
                    const MetricsReport& report);
void write_sweep_csv(const std::string& path, std::span<const CurveSample> sweep);

/// Debug dump of particle clouds: one row per particle per snapshot.
void write_particles_csv(const std::string& path,
                         std::span<const std::pair<double, ParticleSet>> snapshots);

} // namespace mpptlab
