#pragma once

#include "mpptlab/pv_model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mpptlab {

enum class AnnInputMode { vi_probes, irradiance };

/// Feed-forward network: sigmoid hidden layers, linear output unit, with
/// per-feature input normalization and a voltage output range.
struct MlpModel {
    std::vector<int> layer_sizes;                      // input, hidden..., 1
    std::vector<Eigen::MatrixXd> weights;              // weights[l]: (n_out x n_in)
    std::vector<Eigen::VectorXd> biases;
    std::vector<std::pair<double, double>> input_norm; // per-feature (min, max)
    std::pair<double, double> output_norm{0.0, 1.0};   // volts
    AnnInputMode mode = AnnInputMode::irradiance;
    double final_mse = 0.0;                            // training MSE, normalized units

    int input_size() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
    void validate() const;
};

struct TrainingSet {
    std::vector<std::vector<double>> inputs;
    std::vector<double> targets; // oracle GMPP voltages
    AnnInputMode mode = AnnInputMode::irradiance;
};

enum class TrainAlgorithm {
    gd_momentum, // plain full-batch gradient descent with momentum
    rprop        // iRPROP- sign-based full-batch steps
};

struct TrainParams {
    int epochs = 2000;
    double learning_rate = 0.05; // gd_momentum only
    double momentum = 0.9;       // gd_momentum only
    double output_max = 0.0;     // volts; 0 derives the range from the targets
    TrainAlgorithm algorithm = TrainAlgorithm::rprop;
};

struct PqiReport {
    int g_tests = 0;
    double pqi = 0.0;                 // percent
    std::vector<double> ratios;       // per-test V_EGMPP / V_GMPP
};

double sigmoid(double z);

/// Forward pass: normalize, propagate, denormalize to volts (unclamped).
double forward(const MlpModel& model, std::span<const double> input);

/// Full-batch backpropagation training (RPROP or gradient descent with
/// momentum) on the MSE of normalized outputs. Deterministic given the seed;
/// throws on divergence.
MlpModel train(const TrainingSet& dataset, const std::vector<int>& hidden_layers,
               const TrainParams& params, std::uint64_t rng_seed);

/// Train n_candidates models from consecutive seeds and keep the one with the
/// lowest RMSE on a held-out validation set.
MlpModel train_selected(const TrainingSet& dataset, const std::vector<int>& hidden_layers,
                        const TrainParams& params, std::uint64_t base_seed, int n_candidates,
                        const std::vector<std::vector<double>>& val_inputs,
                        const std::vector<double>& val_targets);

/// Build a training set from the GMPP oracle over the full grid of per-group
/// irradiance levels. In vi mode each pattern contributes probes_per_pattern
/// probe sets drawn by the controller's probe rule around random centers.
TrainingSet generate_training_data(AnnInputMode mode, const PvArray& array,
                                   const std::vector<double>& irradiance_levels,
                                   int probes_per_pattern, std::uint64_t rng_seed,
                                   int m_probes = 8, double probe_half_width = 10.0,
                                   double temperature = 298.15);

/// Predict from M (v, i) probe pairs: probes are sorted by voltage, flattened
/// in (v, i) interleave, and the output is clamped to the voltage range.
double predict_vi(const MlpModel& model, std::vector<std::pair<double, double>> probes);

/// Predict from per-group irradiance readings; output clamped as above.
double predict_irr(const MlpModel& model, std::span<const double> irradiances);

/// Average prediction quality index over a set of test patterns.
PqiReport evaluate_pqi(const std::function<double(const std::vector<double>&)>& predictor,
                       const std::vector<std::vector<double>>& test_patterns,
                       const std::function<double(const std::vector<double>&)>& oracle);
PqiReport evaluate_pqi(const MlpModel& model, const PvArray& array,
                       const std::vector<std::vector<double>>& test_patterns,
                       double temperature = 298.15);

/// JSON persistence with a format tag.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

} // namespace mpptlab
