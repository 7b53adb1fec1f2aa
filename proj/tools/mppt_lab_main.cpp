#include "mpptlab/harness.hpp"
#include "mpptlab/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>

namespace {

using namespace mpptlab;

std::vector<int> parse_arch(const std::string& arch) {
    std::vector<int> sizes;
    std::stringstream ss(arch);
    std::string cell;
    while (std::getline(ss, cell, ',')) sizes.push_back(std::stoi(cell));
    if (sizes.size() < 2 || sizes.back() != 1) {
        throw std::runtime_error("arch must list input,hidden...,1");
    }
    return sizes;
}

int cmd_sweep(const std::string& config, const std::string& out_dir, double at_time,
              double v_max, int n_points) {
    auto sc = load_scenario(config);
    PvArray plant(sc.module, sc.topology);
    const auto& env = sc.environment.at_time(at_time);
    if (v_max <= 0.0) {
        v_max = plant.open_circuit_voltage(env.irradiance, env.temperature) * 1.02;
    }
    auto sweep = sweep_pv_curve(plant, env.irradiance, env.temperature, v_max, n_points);
    std::filesystem::create_directories(out_dir);
    write_sweep_csv(out_dir + "/sweep.csv", sweep);
    auto [v_gmpp, p_gmpp] = find_gmpp(plant, env.irradiance, env.temperature);
    std::printf("sweep: %d points to %.3f V -> %s/sweep.csv\n", n_points, v_max,
                out_dir.c_str());
    std::printf("gmpp: v=%.4f V p=%.4f W\n", v_gmpp, p_gmpp);
    return 0;
}

int cmd_calibrate_gllr(double b, double sigma_nu, double gamma_s, double f_s, int runs,
                       std::uint64_t seed, int p, const std::string& out_dir) {
    const double h = calibrate_threshold(b, sigma_nu, gamma_s, f_s, runs, seed, p);
    const long cap = static_cast<long>(50.0 * gamma_s * f_s) + 100;
    auto lengths = gllr_noise_run_lengths(b, h, p, runs, derive_seed(seed, 1), cap);
    double mean = 0.0;
    for (long l : lengths) mean += static_cast<double>(l);
    mean /= lengths.size();

    std::filesystem::create_directories(out_dir);
    std::map<long, long> histogram;
    for (long l : lengths) ++histogram[l];
    std::ofstream out(out_dir + "/run_lengths.csv");
    out << "length,count\n";
    for (const auto& [len, count] : histogram) out << len << "," << count << "\n";

    std::printf("h=%.17g\n", h);
    std::printf("target_run_length=%.1f empirical_mean=%.1f runs=%d\n", gamma_s * f_s, mean,
                runs);
    std::printf("histogram: %s/run_lengths.csv\n", out_dir.c_str());
    return 0;
}

int cmd_train_ann(const std::string& config, const std::string& mode_str,
                  const std::string& arch, int epochs, std::uint64_t seed,
                  const std::string& algo, const std::string& out_dir) {
    auto sc = load_scenario(config);
    PvArray plant(sc.module, sc.topology);
    const bool irr = mode_str == "irr" || mode_str == "irradiance";
    const AnnInputMode mode = irr ? AnnInputMode::irradiance : AnnInputMode::vi_probes;

    std::vector<double> levels = sc.ann.irradiance_levels;
    if (levels.empty()) {
        for (int k = 0; k < 10; ++k) levels.push_back(0.1 + 0.1 * k);
    }
    int m_probes = 8;
    double half_width = 10.0;
    for (const auto& ctrl : sc.controllers) {
        if (ctrl.config.ann_mode != AnnMode::none) {
            m_probes = ctrl.config.m_probes;
            half_width = ctrl.config.probe_half_width;
            break;
        }
    }
    auto dataset = generate_training_data(mode, plant, levels, sc.ann.probes_per_pattern, seed,
                                          m_probes, half_width);

    std::vector<int> hidden = sc.ann.hidden_layers;
    if (!arch.empty()) {
        auto sizes = parse_arch(arch);
        const int want_input = irr ? static_cast<int>(sc.topology.group_count()) : 2 * m_probes;
        if (sizes.front() != want_input) {
            throw std::runtime_error("arch input size " + std::to_string(sizes.front()) +
                                     " does not match mode (expected " +
                                     std::to_string(want_input) + ")");
        }
        hidden.assign(sizes.begin() + 1, sizes.end() - 1);
    }

    TrainParams tp;
    tp.epochs = epochs > 0 ? epochs : sc.ann.epochs;
    tp.output_max = plant.v_oc_stc_array();
    tp.algorithm = algo == "gd" ? TrainAlgorithm::gd_momentum : TrainAlgorithm::rprop;

    // candidate selection on held-out oracle targets
    std::vector<std::vector<double>> val_inputs;
    std::vector<double> val_targets;
    if (irr) {
        std::mt19937_64 rng = make_rng(seed, 0x7A1ULL);
        std::uniform_real_distribution<double> u(0.1, 1.0);
        for (int k = 0; k < sc.ann.validation_patterns; ++k) {
            std::vector<double> pattern(sc.topology.group_count());
            for (auto& x : pattern) x = u(rng);
            val_targets.push_back(find_gmpp(plant, pattern,
                                            sc.environment.schedule[0].temperature).first);
            val_inputs.push_back(std::move(pattern));
        }
    } else {
        auto val = generate_training_data(mode, plant, levels, 2, derive_seed(seed, 0x7A2ULL),
                                          m_probes, half_width);
        val_inputs = std::move(val.inputs);
        val_targets = std::move(val.targets);
    }
    auto model = train_selected(dataset, hidden, tp, seed, sc.ann.candidates, val_inputs,
                                val_targets);

    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/model_" + (irr ? "irr" : "vi") + ".json";
    save_model(model, path);
    std::printf("trained %s model on %zu rows, final mse=%.6g -> %s\n",
                irr ? "irradiance" : "vi-probe", dataset.inputs.size(), model.final_mse,
                path.c_str());
    return 0;
}

int cmd_eval_pqi(const std::string& config, const std::string& model_file, int tests,
                 std::uint64_t seed, const std::string& out_dir) {
    auto sc = load_scenario(config);
    PvArray plant(sc.module, sc.topology);
    auto model = load_model(model_file);
    const double temperature = sc.environment.schedule[0].temperature;

    std::mt19937_64 rng = make_rng(seed, 0x9A1ULL);
    std::uniform_real_distribution<double> u(0.3, 1.0); // bright-day shading patterns
    std::vector<std::vector<double>> patterns;
    for (int k = 0; k < tests; ++k) {
        std::vector<double> pattern(sc.topology.group_count());
        for (auto& x : pattern) x = u(rng);
        patterns.push_back(std::move(pattern));
    }

    std::function<double(const std::vector<double>&)> predictor;
    if (model.mode == AnnInputMode::irradiance) {
        predictor = [&](const std::vector<double>& p) { return predict_irr(model, p); };
    } else {
        const int m_probes = model.input_size() / 2;
        std::mt19937_64 probe_rng = make_rng(seed, 0x9A2ULL);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        predictor = [&, m_probes](const std::vector<double>& p) mutable {
            const double center = unit(probe_rng) * plant.v_oc_stc_array();
            std::vector<std::pair<double, double>> probes(m_probes);
            for (auto& pr : probes) {
                const double v = std::clamp(center + (2.0 * unit(probe_rng) - 1.0) * 10.0, 0.0,
                                            plant.v_oc_stc_array());
                pr = {v, plant.current(v, p, temperature)};
            }
            return predict_vi(model, probes);
        };
    }
    auto oracle = [&](const std::vector<double>& p) {
        return find_gmpp(plant, p, temperature).first;
    };
    auto report = evaluate_pqi(predictor, patterns, oracle);

    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/pqi.csv");
    out << "test,ratio\n";
    for (std::size_t k = 0; k < report.ratios.size(); ++k) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", report.ratios[k]);
        out << k << "," << buf << "\n";
    }
    std::printf("pqi=%.4f%% over %d tests -> %s/pqi.csv\n", report.pqi, report.g_tests,
                out_dir.c_str());
    return 0;
}

int cmd_simulate(const std::string& config, const std::string& out_dir,
                 std::uint64_t seed_override, bool has_seed) {
    auto sc = load_scenario(config);
    if (has_seed) sc.base_seed = seed_override;
    auto report = run_experiment(sc, out_dir);
    for (const auto& cm : report.controllers) {
        std::printf("%s: triggers/episode=%.3f", cm.name.c_str(), cm.ann_triggers_mean);
        if (cm.resource_saving_pct) {
            std::printf(" resource_saving=%.1f%%", *cm.resource_saving_pct);
        }
        if (cm.failures > 0) std::printf(" failures=%d", cm.failures);
        std::printf("\n");
        for (const auto& tm : cm.transitions) {
            auto d = [](const std::optional<double>& x) {
                return x ? std::to_string(*x) : std::string("not-reached");
            };
            std::printf("  t=%.2fs -> gmpp %.2f V / %.1f W: delay70=%s delay80=%s delay95=%s\n",
                        tm.t_shading_s, tm.v_gmpp_new_v, tm.p_gmpp_new_w,
                        d(tm.delay70_s).c_str(), d(tm.delay80_s).c_str(),
                        d(tm.delay95_s).c_str());
        }
    }
    std::printf("outputs in %s\n", out_dir.c_str());
    return 0;
}

int cmd_bench(const std::string& config) {
    using clock = std::chrono::steady_clock;
    auto sc = load_scenario(config);
    PvArray plant(sc.module, sc.topology);
    const auto& env = sc.environment.schedule.front();

    auto time_ms = [](auto&& fn) {
        const auto t0 = clock::now();
        fn();
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    volatile double sink = 0.0;
    double ms = time_ms([&] {
        for (int k = 0; k < 200000; ++k) {
            sink = module_current(10.0 + (k % 100) * 0.1, 1.0, 298.15, sc.module);
        }
    });
    std::printf("module_current:    %8.1f ns/call\n", ms * 1e6 / 200000);

    ms = time_ms([&] {
        for (int k = 0; k < 20000; ++k) {
            sink = plant.current((k % 200) * plant.v_oc_stc_array() / 200.0, env.irradiance,
                                 env.temperature);
        }
    });
    std::printf("array_current:     %8.1f ns/call\n", ms * 1e6 / 20000);

    ms = time_ms([&] {
        for (int k = 0; k < 10; ++k) sink = find_gmpp(plant, env.irradiance, env.temperature).first;
    });
    std::printf("find_gmpp:         %8.2f ms/call\n", ms / 10);

    GllrParams gp;
    gp.b = 6.0;
    gp.h = 1e9;
    gp.sigma_nu = 1.0;
    ms = time_ms([&] {
        GllrState st;
        std::mt19937_64 rng(1);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int k = 0; k < 1000000; ++k) {
            auto res = gllr_step(std::move(st), n(rng), gp);
            st = std::move(res.state);
        }
    });
    std::printf("gllr_step:         %8.1f ns/call\n", ms * 1e6 / 1000000);

    ControllerConfig ic;
    ic.kind = ControllerKind::ic_baseline;
    ic.smc.sigma_v = 1e-3;
    ic.smc.v0 = 0.8 * plant.v_oc_stc_array();
    ms = time_ms([&] {
        auto recs = run_episode(ic, plant, sc.environment, nullptr, sc.t_end_s, 1);
        sink = recs.back().p_meas;
    });
    std::printf("ic episode (%4.0fs): %7.1f ms\n", sc.t_end_s, ms);
    (void)sink;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PV maximum-power-point-tracking laboratory"};
    app.require_subcommand(1);

    std::string config, out_dir = "out", model_file, mode_str = "irr", arch, algo = "rprop";
    double at_time = 0.0, v_max = 0.0;
    int n_points = 2000, runs = 300, tests = 1000, epochs = 0, p_order = 5;
    double b = 6.0, sigma_nu = 1.0, gamma_s = 20.0, f_s = 20.0;
    std::uint64_t seed = 42;

    auto* sweep = app.add_subcommand("sweep", "Export an I-V/P-V sweep as CSV");
    sweep->add_option("--config", config, "scenario file")->required();
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--at-time", at_time, "schedule time to evaluate [s]");
    sweep->add_option("--v-max", v_max, "sweep end voltage (default: 1.02 V_oc)");
    sweep->add_option("--n-points", n_points, "sweep resolution");

    auto* calib = app.add_subcommand("calibrate-gllr", "Calibrate the GLLR threshold");
    calib->add_option("--b", b, "drift parameter")->required();
    calib->add_option("--sigma-nu", sigma_nu, "noise std [W]")->required();
    calib->add_option("--gamma", gamma_s, "false-alarm period [s]")->required();
    calib->add_option("--fs", f_s, "sampling frequency [Hz]")->required();
    calib->add_option("--runs", runs, "Monte-Carlo runs");
    calib->add_option("--seed", seed, "RNG seed");
    calib->add_option("--p", p_order, "AR window order");
    calib->add_option("--out", out_dir, "output directory");

    auto* train = app.add_subcommand("train-ann", "Train a GMPP predictor");
    train->add_option("--config", config, "scenario file")->required();
    train->add_option("--mode", mode_str, "vi|irr")->required();
    train->add_option("--arch", arch, "layer sizes, e.g. 3,20,10,1");
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--seed", seed, "RNG seed");
    train->add_option("--algo", algo, "rprop|gd");
    train->add_option("--out", out_dir, "output directory");

    auto* pqi = app.add_subcommand("eval-pqi", "Score a trained model");
    pqi->add_option("--config", config, "scenario file")->required();
    pqi->add_option("--model", model_file, "model JSON")->required();
    pqi->add_option("--tests", tests, "number of random patterns");
    pqi->add_option("--seed", seed, "RNG seed");
    pqi->add_option("--out", out_dir, "output directory");

    auto* sim = app.add_subcommand("simulate", "Run the closed-loop experiment");
    sim->add_option("--config", config, "scenario file")->required();
    sim->add_option("--out", out_dir, "output directory");
    auto* seed_opt = sim->add_option("--seed", seed, "override the scenario base seed");

    auto* bench = app.add_subcommand("bench", "Time the core operations");
    bench->add_option("--config", config, "scenario file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sweep->parsed()) return cmd_sweep(config, out_dir, at_time, v_max, n_points);
        if (calib->parsed()) {
            return cmd_calibrate_gllr(b, sigma_nu, gamma_s, f_s, runs, seed, p_order, out_dir);
        }
        if (train->parsed()) {
            return cmd_train_ann(config, mode_str, arch, epochs, seed, algo, out_dir);
        }
        if (pqi->parsed()) return cmd_eval_pqi(config, model_file, tests, seed, out_dir);
        if (sim->parsed()) return cmd_simulate(config, out_dir, seed, !seed_opt->empty());
        if (bench->parsed()) return cmd_bench(config);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
