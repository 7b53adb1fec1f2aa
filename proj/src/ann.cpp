#include "mpptlab/ann.hpp"

#include "mpptlab/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mpptlab {

namespace {

const char* kFormatTag = "mppt-lab/ann";
constexpr int kFormatVersion = 1;

Eigen::VectorXd normalize_input(const MlpModel& model, std::span<const double> input) {
    Eigen::VectorXd x(input.size());
    for (std::size_t k = 0; k < input.size(); ++k) {
        const auto [lo, hi] = model.input_norm[k];
        const double span = hi - lo;
        double v = (input[k] - lo) / span;
        x(k) = std::clamp(v, 0.0, 1.0);
    }
    return x;
}

double denormalize_output(const MlpModel& model, double y) {
    return model.output_norm.first + y * (model.output_norm.second - model.output_norm.first);
}

double clamp_to_range(const MlpModel& model, double volts) {
    return std::clamp(volts, model.output_norm.first, model.output_norm.second);
}

} // namespace

void MlpModel::validate() const {
    if (layer_sizes.size() < 2 || layer_sizes.back() != 1) {
        throw std::invalid_argument("ann: layer_sizes must chain to a single output");
    }
    if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size()) {
        throw std::invalid_argument("ann: weight/bias count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l]) {
            throw std::invalid_argument("ann: weight matrix shape mismatch");
        }
        if (biases[l].size() != layer_sizes[l + 1]) {
            throw std::invalid_argument("ann: bias vector shape mismatch");
        }
    }
    if (static_cast<int>(input_norm.size()) != layer_sizes.front()) {
        throw std::invalid_argument("ann: input_norm size mismatch");
    }
    for (const auto& [lo, hi] : input_norm) {
        if (!(lo < hi)) throw std::invalid_argument("ann: input_norm needs min < max");
    }
    if (!(output_norm.first < output_norm.second)) {
        throw std::invalid_argument("ann: output_norm needs min < max");
    }
}

double sigmoid(double z) {
    return 1.0 / (1.0 + std::exp(-z));
}

double forward(const MlpModel& model, std::span<const double> input) {
    if (static_cast<int>(input.size()) != model.input_size()) {
        throw std::invalid_argument("ann: input length does not match the model");
    }
    Eigen::VectorXd a = normalize_input(model, input);
    const std::size_t n_layers = model.weights.size();
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        Eigen::VectorXd z = model.weights[l] * a + model.biases[l];
        a = z.unaryExpr([](double v) { return sigmoid(v); });
    }
    const double y = (model.weights.back() * a + model.biases.back())(0);
    return denormalize_output(model, y);
}

MlpModel train(const TrainingSet& dataset, const std::vector<int>& hidden_layers,
               const TrainParams& params, std::uint64_t rng_seed) {
    const std::size_t n = dataset.inputs.size();
    if (n < 2 || dataset.targets.size() != n) {
        throw std::invalid_argument("ann: degenerate training set");
    }
    if (params.epochs < 1) throw std::invalid_argument("ann: epochs must be >= 1");
    const int in_size = static_cast<int>(dataset.inputs.front().size());

    MlpModel model;
    model.mode = dataset.mode;
    model.layer_sizes.push_back(in_size);
    for (int hsize : hidden_layers) {
        if (hsize < 1) throw std::invalid_argument("ann: hidden layer size must be >= 1");
        model.layer_sizes.push_back(hsize);
    }
    model.layer_sizes.push_back(1);

    // Per-feature min-max normalization fitted on the training inputs.
    model.input_norm.assign(in_size, {0.0, 1.0});
    for (int k = 0; k < in_size; ++k) {
        double lo = dataset.inputs[0][k], hi = dataset.inputs[0][k];
        for (const auto& row : dataset.inputs) {
            lo = std::min(lo, row[k]);
            hi = std::max(hi, row[k]);
        }
        if (!(hi - lo > 1e-12)) hi = lo + 1.0;
        model.input_norm[k] = {lo, hi};
    }
    double out_max = params.output_max;
    if (!(out_max > 0.0)) {
        out_max = *std::max_element(dataset.targets.begin(), dataset.targets.end()) * 1.05;
    }
    model.output_norm = {0.0, out_max};

    // Normalized design matrices, one column per sample.
    Eigen::MatrixXd x(in_size, n);
    Eigen::RowVectorXd y(n);
    for (std::size_t s = 0; s < n; ++s) {
        if (static_cast<int>(dataset.inputs[s].size()) != in_size) {
            throw std::invalid_argument("ann: ragged training inputs");
        }
        x.col(s) = normalize_input(model, dataset.inputs[s]);
        y(s) = (dataset.targets[s] - model.output_norm.first) /
               (model.output_norm.second - model.output_norm.first);
    }

    std::mt19937_64 rng = make_rng(rng_seed, 0xA44ULL);
    const std::size_t n_layers = model.layer_sizes.size() - 1;
    std::vector<Eigen::MatrixXd> vel_w(n_layers);
    std::vector<Eigen::VectorXd> vel_b(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int rows = model.layer_sizes[l + 1];
        const int cols = model.layer_sizes[l];
        const double r = 1.0 / std::sqrt(static_cast<double>(cols));
        std::uniform_real_distribution<double> init(-r, r);
        Eigen::MatrixXd w(rows, cols);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) w(i, j) = init(rng);
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(rows));
        vel_w[l] = Eigen::MatrixXd::Zero(rows, cols);
        vel_b[l] = Eigen::VectorXd::Zero(rows);
    }

    // RPROP per-weight step sizes (sign-based, full batch).
    std::vector<Eigen::MatrixXd> step_w(n_layers), prev_gw(n_layers);
    std::vector<Eigen::VectorXd> step_b(n_layers), prev_gb(n_layers);
    if (params.algorithm == TrainAlgorithm::rprop) {
        for (std::size_t l = 0; l < n_layers; ++l) {
            step_w[l] = Eigen::MatrixXd::Constant(model.weights[l].rows(),
                                                  model.weights[l].cols(), 0.01);
            step_b[l] = Eigen::VectorXd::Constant(model.biases[l].size(), 0.01);
            prev_gw[l] = Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols());
            prev_gb[l] = Eigen::VectorXd::Zero(model.biases[l].size());
        }
    }
    constexpr double kStepGrow = 1.2, kStepShrink = 0.5, kStepMin = 1e-9, kStepMax = 0.5;

    std::vector<Eigen::MatrixXd> activations(n_layers + 1);
    activations[0] = x;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        // forward pass over the whole batch
        for (std::size_t l = 0; l < n_layers; ++l) {
            Eigen::MatrixXd z =
                (model.weights[l] * activations[l]).colwise() + model.biases[l];
            if (l + 1 < n_layers) {
                activations[l + 1] = z.unaryExpr([](double v) { return sigmoid(v); });
            } else {
                activations[l + 1] = std::move(z); // linear output
            }
        }
        const Eigen::RowVectorXd err = activations[n_layers].row(0) - y;
        const double mse = err.squaredNorm() / static_cast<double>(n);
        if (!std::isfinite(mse)) {
            throw std::runtime_error("ann: training diverged at epoch " + std::to_string(epoch));
        }
        model.final_mse = mse;

        // backward pass
        Eigen::MatrixXd delta = (2.0 / static_cast<double>(n)) * err;
        for (std::size_t li = n_layers; li-- > 0;) {
            const Eigen::MatrixXd grad_w = delta * activations[li].transpose();
            const Eigen::VectorXd grad_b = delta.rowwise().sum();
            Eigen::MatrixXd back;
            if (li > 0) {
                back = model.weights[li].transpose() * delta;
                back.array() *=
                    (activations[li].array() * (1.0 - activations[li].array()));
            }
            if (params.algorithm == TrainAlgorithm::gd_momentum) {
                vel_w[li] = params.momentum * vel_w[li] - params.learning_rate * grad_w;
                vel_b[li] = params.momentum * vel_b[li] - params.learning_rate * grad_b;
                model.weights[li] += vel_w[li];
                model.biases[li] += vel_b[li];
            } else {
                // iRPROP-: adapt steps by gradient-sign agreement, zero the
                // remembered gradient after a sign flip.
                auto update = [&](auto& w, auto& step, auto& prev, const auto& grad) {
                    for (Eigen::Index k = 0; k < w.size(); ++k) {
                        const double g = grad(k);
                        const double agree = g * prev(k);
                        if (agree > 0.0) {
                            step(k) = std::min(step(k) * kStepGrow, kStepMax);
                        } else if (agree < 0.0) {
                            step(k) = std::max(step(k) * kStepShrink, kStepMin);
                            prev(k) = 0.0;
                            continue; // hold position for one epoch on a flip
                        }
                        if (g > 0.0) {
                            w(k) -= step(k);
                        } else if (g < 0.0) {
                            w(k) += step(k);
                        }
                        prev(k) = g;
                    }
                };
                update(model.weights[li], step_w[li], prev_gw[li], grad_w);
                update(model.biases[li], step_b[li], prev_gb[li], grad_b);
            }
            if (li > 0) delta = std::move(back);
        }
    }
    model.validate();
    return model;
}

MlpModel train_selected(const TrainingSet& dataset, const std::vector<int>& hidden_layers,
                        const TrainParams& params, std::uint64_t base_seed, int n_candidates,
                        const std::vector<std::vector<double>>& val_inputs,
                        const std::vector<double>& val_targets) {
    if (n_candidates < 1) throw std::invalid_argument("ann: need at least one candidate");
    if (val_inputs.size() != val_targets.size() || val_inputs.empty()) {
        throw std::invalid_argument("ann: malformed validation set");
    }
    MlpModel best;
    double best_rmse = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n_candidates; ++c) {
        MlpModel candidate = train(dataset, hidden_layers, params, base_seed + c);
        double sq = 0.0;
        for (std::size_t k = 0; k < val_inputs.size(); ++k) {
            const double err = forward(candidate, val_inputs[k]) - val_targets[k];
            sq += err * err;
        }
        const double rmse = std::sqrt(sq / val_inputs.size());
        if (rmse < best_rmse) {
            best_rmse = rmse;
            best = std::move(candidate);
        }
    }
    return best;
}

TrainingSet generate_training_data(AnnInputMode mode, const PvArray& array,
                                   const std::vector<double>& irradiance_levels,
                                   int probes_per_pattern, std::uint64_t rng_seed,
                                   int m_probes, double probe_half_width,
                                   double temperature) {
    if (irradiance_levels.size() < 2) {
        throw std::invalid_argument("ann: need at least 2 irradiance levels");
    }
    const std::size_t groups = array.topology().group_count();
    TrainingSet set;
    set.mode = mode;

    std::mt19937_64 rng = make_rng(rng_seed, 0xDA7AULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double v_oc = array.v_oc_stc_array();

    // Full grid of z^groups per-group irradiance patterns.
    std::vector<std::size_t> idx(groups, 0);
    while (true) {
        std::vector<double> pattern(groups);
        for (std::size_t g = 0; g < groups; ++g) pattern[g] = irradiance_levels[idx[g]];
        const auto [v_gmpp, p_gmpp] = find_gmpp(array, pattern, temperature);
        (void)p_gmpp;

        if (mode == AnnInputMode::irradiance) {
            set.inputs.push_back(pattern);
            set.targets.push_back(v_gmpp);
        } else {
            for (int rep = 0; rep < std::max(probes_per_pattern, 1); ++rep) {
                const double center = unit(rng) * v_oc;
                std::vector<std::pair<double, double>> probes(m_probes);
                for (auto& pr : probes) {
                    const double v = std::clamp(
                        center + (2.0 * unit(rng) - 1.0) * probe_half_width, 0.0, v_oc);
                    pr = {v, array.current(std::min(v, array.open_circuit_voltage(
                                                           pattern, temperature)),
                                           pattern, temperature)};
                }
                std::sort(probes.begin(), probes.end());
                std::vector<double> row;
                row.reserve(2 * m_probes);
                for (const auto& [v, i] : probes) {
                    row.push_back(v);
                    row.push_back(i);
                }
                set.inputs.push_back(std::move(row));
                set.targets.push_back(v_gmpp);
            }
        }

        // advance the grid odometer
        std::size_t g = 0;
        while (g < groups && ++idx[g] == irradiance_levels.size()) {
            idx[g] = 0;
            ++g;
        }
        if (g == groups) break;
    }
    return set;
}

double predict_vi(const MlpModel& model, std::vector<std::pair<double, double>> probes) {
    if (model.mode != AnnInputMode::vi_probes) {
        throw std::invalid_argument("ann: model was not trained on probe inputs");
    }
    if (static_cast<int>(probes.size()) * 2 != model.input_size()) {
        throw std::invalid_argument("ann: wrong probe count");
    }
    std::sort(probes.begin(), probes.end()); // canonical voltage ordering
    std::vector<double> row;
    row.reserve(probes.size() * 2);
    for (const auto& [v, i] : probes) {
        row.push_back(v);
        row.push_back(i);
    }
    return clamp_to_range(model, forward(model, row));
}

double predict_irr(const MlpModel& model, std::span<const double> irradiances) {
    if (model.mode != AnnInputMode::irradiance) {
        throw std::invalid_argument("ann: model was not trained on irradiance inputs");
    }
    if (static_cast<int>(irradiances.size()) != model.input_size()) {
        throw std::invalid_argument("ann: wrong irradiance count");
    }
    return clamp_to_range(model, forward(model, irradiances));
}

PqiReport evaluate_pqi(const std::function<double(const std::vector<double>&)>& predictor,
                       const std::vector<std::vector<double>>& test_patterns,
                       const std::function<double(const std::vector<double>&)>& oracle) {
    if (test_patterns.empty()) throw std::invalid_argument("pqi: need at least one test");
    PqiReport report;
    report.g_tests = static_cast<int>(test_patterns.size());
    double acc = 0.0;
    for (const auto& pattern : test_patterns) {
        const double v_true = oracle(pattern);
        if (!(v_true > 0.0)) throw std::runtime_error("pqi: oracle returned a non-positive GMPP");
        const double ratio = predictor(pattern) / v_true;
        report.ratios.push_back(ratio);
        acc += ratio;
    }
    report.pqi = acc / report.g_tests * 100.0;
    return report;
}

PqiReport evaluate_pqi(const MlpModel& model, const PvArray& array,
                       const std::vector<std::vector<double>>& test_patterns,
                       double temperature) {
    return evaluate_pqi(
        [&](const std::vector<double>& pattern) { return predict_irr(model, pattern); },
        test_patterns,
        [&](const std::vector<double>& pattern) {
            return find_gmpp(array, pattern, temperature).first;
        });
}

void save_model(const MlpModel& model, const std::string& path) {
    model.validate();
    nlohmann::json j;
    j["format"] = kFormatTag;
    j["version"] = kFormatVersion;
    j["mode"] = model.mode == AnnInputMode::vi_probes ? "vi" : "irr";
    j["layer_sizes"] = model.layer_sizes;
    j["final_mse"] = model.final_mse;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        nlohmann::json wj = nlohmann::json::array(); // row-major
        for (int r = 0; r < model.weights[l].rows(); ++r) {
            for (int c = 0; c < model.weights[l].cols(); ++c) {
                wj.push_back(model.weights[l](r, c));
            }
        }
        j["weights"].push_back(wj);
        j["biases"].push_back(std::vector<double>(
            model.biases[l].data(), model.biases[l].data() + model.biases[l].size()));
    }
    for (const auto& [lo, hi] : model.input_norm) {
        j["input_norm"].push_back({lo, hi});
    }
    j["output_norm"] = {model.output_norm.first, model.output_norm.second};

    std::ofstream out(path);
    if (!out) throw std::runtime_error("ann: cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

MlpModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ann: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != kFormatTag || j.value("version", 0) != kFormatVersion) {
        throw std::runtime_error("ann: unrecognized model format in " + path);
    }
    MlpModel model;
    model.mode = j.at("mode").get<std::string>() == "vi" ? AnnInputMode::vi_probes
                                                         : AnnInputMode::irradiance;
    model.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    model.final_mse = j.value("final_mse", 0.0);
    const auto& wj = j.at("weights");
    const auto& bj = j.at("biases");
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const int rows = model.layer_sizes[l + 1];
        const int cols = model.layer_sizes[l];
        Eigen::MatrixXd w(rows, cols);
        const auto flat = wj.at(l).get<std::vector<double>>();
        if (static_cast<int>(flat.size()) != rows * cols) {
            throw std::runtime_error("ann: weight size mismatch in " + path);
        }
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) w(r, c) = flat[r * cols + c];
        }
        model.weights.push_back(std::move(w));
        const auto bias = bj.at(l).get<std::vector<double>>();
        model.biases.push_back(Eigen::Map<const Eigen::VectorXd>(bias.data(), bias.size()));
    }
    for (const auto& pairj : j.at("input_norm")) {
        model.input_norm.emplace_back(pairj.at(0).get<double>(), pairj.at(1).get<double>());
    }
    model.output_norm = {j.at("output_norm").at(0).get<double>(),
                         j.at("output_norm").at(1).get<double>()};
    model.validate();
    return model;
}

} // namespace mpptlab
