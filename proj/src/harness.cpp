#include "mpptlab/harness.hpp"

#include "mpptlab/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mpptlab {

namespace {

using nlohmann::json;

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

AnnMode parse_ann_mode(const std::string& s) {
    if (s == "none") return AnnMode::none;
    if (s == "vi" || s == "vi-probes" || s == "vi_probes") return AnnMode::vi_probes;
    if (s == "irr" || s == "irradiance") return AnnMode::irradiance;
    throw std::runtime_error("scenario: unknown ann_mode '" + s + "'");
}

ControllerKind parse_kind(const std::string& s) {
    if (s == "enhanced") return ControllerKind::enhanced;
    if (s == "ic-baseline" || s == "ic_baseline") return ControllerKind::ic_baseline;
    if (s == "ann-ic-baseline" || s == "ann_ic_baseline") return ControllerKind::ann_ic_baseline;
    throw std::runtime_error("scenario: unknown controller kind '" + s + "'");
}

} // namespace

void ScenarioConfig::validate() const {
    module.validate();
    topology.validate();
    environment.validate(topology.group_count());
    if (controllers.empty()) {
        throw std::invalid_argument("scenario: at least one controller required");
    }
    if (!(t_end_s > 0.0)) throw std::invalid_argument("scenario: t_end must be > 0");
    if (!(t_end_s >= environment.schedule.back().t_start)) {
        throw std::invalid_argument("scenario: t_end must cover the whole schedule");
    }
    if (n_replications < 1) throw std::invalid_argument("scenario: n_replications must be >= 1");
    if (calibration_runs < 100) {
        throw std::invalid_argument("scenario: calibration_runs must be >= 100");
    }
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("scenario: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("scenario: parse error in " + path + ": " + e.what());
    }

    ScenarioConfig sc;
    const auto& jm = j.at("module");
    auto get = [](const json& obj, const char* key, double fallback) {
        return obj.value(key, fallback);
    };
    sc.module.v_oc_stc = jm.at("v_oc_stc_v").get<double>();
    sc.module.i_sc_stc = jm.at("i_sc_stc_a").get<double>();
    sc.module.i_ph_stc = get(jm, "i_ph_stc_a", sc.module.i_sc_stc);
    sc.module.k_i = get(jm, "k_i_a_per_k", 3.3e-4);
    sc.module.b_const = get(jm, "b_const", 0.2464);
    sc.module.q_over_k = get(jm, "q_over_k_k_per_v", 11604.518);
    sc.module.t_stc = get(jm, "t_stc_k", 298.15);
    sc.module.lambda_stc = get(jm, "lambda_stc_kw_m2", 1.0);
    sc.module.v_mpp_datasheet = get(jm, "v_mpp_datasheet_v", 0.0);
    sc.module.i_mpp_datasheet = get(jm, "i_mpp_datasheet_a", 0.0);
    sc.module.p_mpp_datasheet = get(jm, "p_mpp_datasheet_w", 0.0);
    sc.module.k_v = get(jm, "k_v_v_per_k", 0.0);

    for (const auto& jg : j.at("topology").at("groups")) {
        ArrayTopology::Group g;
        g.modules_in_series = jg.at("modules_in_series").get<int>();
        g.strings_in_parallel = jg.at("strings_in_parallel").get<int>();
        g.bypass = jg.value("bypass", true);
        sc.topology.groups.push_back(g);
    }

    for (const auto& je : j.at("environment").at("schedule")) {
        EnvironmentProfile::Entry e;
        e.t_start = je.at("t_start_s").get<double>();
        e.irradiance = je.at("irradiance_kw_m2").get<std::vector<double>>();
        e.temperature = je.value("temperature_k", 298.15);
        sc.environment.schedule.push_back(std::move(e));
    }

    if (j.contains("ann")) {
        const auto& ja = j.at("ann");
        sc.ann.irradiance_levels =
            ja.value("levels_kw_m2", std::vector<double>{});
        sc.ann.hidden_layers = ja.value("hidden_layers", std::vector<int>{20, 10});
        sc.ann.epochs = ja.value("epochs", 2000);
        sc.ann.probes_per_pattern = ja.value("probes_per_pattern", 4);
        sc.ann.candidates = ja.value("candidates", 3);
        sc.ann.validation_patterns = ja.value("validation_patterns", 200);
        sc.ann.seed = ja.value("seed", 42ULL);
    }

    for (const auto& jc : j.at("controllers")) {
        ControllerSpec spec;
        spec.name = jc.at("name").get<std::string>();
        spec.config.kind = parse_kind(jc.at("kind").get<std::string>());
        spec.config.ann_mode = parse_ann_mode(jc.value("ann_mode", "none"));
        spec.config.f_s = jc.value("f_s_hz", 20.0);
        spec.config.probe_half_width = jc.value("probe_half_width_v", 10.0);
        spec.config.m_probes = jc.value("m_probes", 8);
        spec.config.ic_gain = jc.value("ic_gain", 0.2);
        spec.config.h1 = jc.value("h1_w", 0.0);
        if (jc.contains("smc")) {
            const auto& js = jc.at("smc");
            spec.config.smc.n_particles = js.value("n_particles", 500);
            spec.config.smc.m0 = js.value("m0", 1e-2);
            spec.config.smc.sigma_w = js.value("sigma_w_v", 0.0);
            spec.config.smc.sigma_v = js.value("sigma_v_v", 0.0);
            spec.config.smc.v0 = js.value("v0_v", 0.0);
            spec.config.smc.sigma0 = js.value("sigma0_v", 0.0);
            spec.config.smc.n_thr = js.value("n_thr", 0.0);
        }
        if (jc.contains("gllr")) {
            const auto& jg = jc.at("gllr");
            spec.config.gllr.b = jg.value("b", 6.0);
            spec.config.gllr.h = jg.value("h", 0.0);
            spec.config.gllr.sigma_nu = jg.value("sigma_nu_w", 1.0);
            spec.config.gllr.p = jg.value("p", 5);
            spec.config.gllr.gamma_s = jg.value("gamma_s", 20.0);
        }
        spec.ann_model_file = jc.value("ann_model_file", "");
        sc.controllers.push_back(std::move(spec));
    }

    const auto& jx = j.at("experiment");
    sc.t_end_s = jx.at("t_end_s").get<double>();
    sc.n_replications = jx.value("n_replications", 100);
    sc.base_seed = jx.value("base_seed", 1ULL);
    sc.calibration_runs = jx.value("calibration_runs", 300);

    sc.validate();
    return sc;
}

std::pair<double, double> fit_prior_from_uniform_run(const PvArray& plant,
                                                     const EnvironmentProfile::Entry& env,
                                                     double f_s, double sigma_v,
                                                     std::uint64_t seed) {
    EnvironmentProfile steady;
    auto entry = env;
    entry.t_start = 0.0;
    steady.schedule = {entry};

    ControllerConfig cfg;
    cfg.kind = ControllerKind::ic_baseline;
    cfg.ann_mode = AnnMode::none;
    cfg.f_s = f_s;
    cfg.smc.sigma_v = sigma_v;
    cfg.smc.v0 = 0.8 * plant.v_oc_stc_array();

    auto records = run_episode(cfg, plant, steady, nullptr, 10.0, seed);
    const std::size_t tail = std::min<std::size_t>(100, records.size() / 2);
    double mean = 0.0;
    for (std::size_t k = records.size() - tail; k < records.size(); ++k) {
        mean += records[k].v_meas;
    }
    mean /= static_cast<double>(tail);
    double var = 0.0;
    for (std::size_t k = records.size() - tail; k < records.size(); ++k) {
        var += (records[k].v_meas - mean) * (records[k].v_meas - mean);
    }
    var /= static_cast<double>(tail);
    return {mean, std::max(std::sqrt(var), 0.25)};
}

PreparedExperiment prepare_experiment(ScenarioConfig scenario) {
    scenario.validate();
    PvArray plant(scenario.module, scenario.topology);
    PreparedExperiment prep{std::move(scenario), std::move(plant), {}, {}, {}, 0.0, 0.0};
    auto& sc = prep.scenario;

    for (const auto& entry : sc.environment.schedule) {
        prep.oracle.push_back(find_gmpp(prep.plant, entry.irradiance, entry.temperature));
    }

    // SMC prior from an offline run when the scenario does not pin one.
    const bool needs_prior =
        std::any_of(sc.controllers.begin(), sc.controllers.end(),
                    [](const ControllerSpec& c) { return c.config.smc.v0 == 0.0; });
    if (needs_prior) {
        auto [v0, s0] = fit_prior_from_uniform_run(
            prep.plant, sc.environment.schedule.front(), sc.controllers.front().config.f_s,
            sc.controllers.front().config.smc.sigma_v, derive_seed(sc.base_seed, 0x9101ULL));
        prep.prior_v0 = v0;
        prep.prior_sigma0 = s0;
        for (auto& c : sc.controllers) {
            if (c.config.smc.v0 == 0.0) {
                c.config.smc.v0 = v0;
                c.config.smc.sigma0 = s0;
            }
        }
    }
    for (auto& c : sc.controllers) {
        if (c.config.smc.sigma0 == 0.0) c.config.smc.sigma0 = 1.0;
    }

    // Threshold calibrations to the target false-alarm period.
    for (auto& c : sc.controllers) {
        if (c.config.kind == ControllerKind::enhanced && c.config.gllr.h == 0.0) {
            c.config.gllr.h = calibrate_threshold(
                c.config.gllr.b, c.config.gllr.sigma_nu, c.config.gllr.gamma_s, c.config.f_s,
                sc.calibration_runs, derive_seed(sc.base_seed, 0xCA11BULL), c.config.gllr.p);
        }
        if (c.config.kind == ControllerKind::ann_ic_baseline && c.config.h1 == 0.0) {
            c.config.h1 = calibrate_power_diff_threshold(
                c.config.gllr.sigma_nu, c.config.gllr.gamma_s, c.config.f_s,
                sc.calibration_runs, derive_seed(sc.base_seed, 0x7112ULL));
        }
    }

    // ANN models: load when named, otherwise train once per input mode.
    prep.models.resize(sc.controllers.size());
    prep.has_model.assign(sc.controllers.size(), false);
    int trained_irr = -1, trained_vi = -1;
    for (std::size_t ci = 0; ci < sc.controllers.size(); ++ci) {
        auto& spec = sc.controllers[ci];
        if (spec.config.ann_mode == AnnMode::none) continue;
        if (!spec.ann_model_file.empty()) {
            prep.models[ci] = load_model(spec.ann_model_file);
            prep.has_model[ci] = true;
            continue;
        }
        const bool want_irr = spec.config.ann_mode == AnnMode::irradiance;
        int& cache = want_irr ? trained_irr : trained_vi;
        if (cache >= 0) {
            prep.models[ci] = prep.models[cache];
            prep.has_model[ci] = true;
            continue;
        }

        std::vector<double> levels = sc.ann.irradiance_levels;
        if (levels.empty()) {
            for (int k = 0; k < 10; ++k) levels.push_back(0.1 + 0.1 * k);
        }
        const AnnInputMode mode = want_irr ? AnnInputMode::irradiance : AnnInputMode::vi_probes;
        auto dataset = generate_training_data(mode, prep.plant, levels,
                                              sc.ann.probes_per_pattern, sc.ann.seed,
                                              spec.config.m_probes, spec.config.probe_half_width);

        // validation set for candidate selection
        std::vector<std::vector<double>> val_inputs;
        std::vector<double> val_targets;
        if (want_irr) {
            std::mt19937_64 rng = make_rng(sc.ann.seed, 0x7A1ULL);
            std::uniform_real_distribution<double> u(0.1, 1.0);
            for (int k = 0; k < sc.ann.validation_patterns; ++k) {
                std::vector<double> pattern(sc.topology.group_count());
                for (auto& x : pattern) x = u(rng);
                val_targets.push_back(
                    find_gmpp(prep.plant, pattern, sc.environment.schedule[0].temperature).first);
                val_inputs.push_back(std::move(pattern));
            }
        } else {
            auto val = generate_training_data(mode, prep.plant, levels, 2,
                                              derive_seed(sc.ann.seed, 0x7A2ULL),
                                              spec.config.m_probes,
                                              spec.config.probe_half_width);
            val_inputs = std::move(val.inputs);
            val_targets = std::move(val.targets);
        }

        TrainParams tp;
        tp.epochs = sc.ann.epochs;
        tp.output_max = prep.plant.v_oc_stc_array();
        prep.models[ci] = train_selected(dataset, sc.ann.hidden_layers, tp, sc.ann.seed,
                                         sc.ann.candidates, val_inputs, val_targets);
        prep.has_model[ci] = true;
        cache = static_cast<int>(ci);
    }
    return prep;
}

std::optional<double> delay_to_fraction(std::span<const double> times,
                                        std::span<const double> p_avg, double t_shading,
                                        double p_gmpp_new, double fraction, int sustain,
                                        double window_end) {
    if (times.size() != p_avg.size() || times.empty()) {
        throw std::invalid_argument("delay_to_fraction: malformed trace");
    }
    if (!(p_gmpp_new > 0.0)) throw std::invalid_argument("delay_to_fraction: p_gmpp must be > 0");
    const double level = fraction * p_gmpp_new;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_shading || times[k] >= window_end) continue;
        bool sustained = true;
        for (int j = 0; j < sustain; ++j) {
            const std::size_t idx = k + j;
            if (idx >= times.size() || times[idx] >= window_end || p_avg[idx] < level) {
                sustained = false;
                break;
            }
        }
        if (sustained) return times[k] - t_shading;
    }
    return std::nullopt;
}

double resource_saving(long n_gllr_triggers, long n_threshold_triggers, double duration_s) {
    if (n_threshold_triggers <= 0) {
        throw std::invalid_argument("resource_saving: threshold trigger count must be > 0");
    }
    if (!(duration_s > 0.0)) throw std::invalid_argument("resource_saving: duration must be > 0");
    const double gllr_rate = static_cast<double>(n_gllr_triggers) / duration_s;
    const double th_rate = static_cast<double>(n_threshold_triggers) / duration_s;
    return (1.0 - gllr_rate / th_rate) * 100.0;
}

std::vector<EfficiencyPoint> efficiency_curve(std::span<const double> times,
                                              std::span<const double> p_avg,
                                              std::span<const double> v_avg, double t_shading,
                                              double p_gmpp_new, double v_gmpp_new,
                                              double window_end) {
    if (times.size() != p_avg.size() || times.size() != v_avg.size()) {
        throw std::invalid_argument("efficiency_curve: malformed traces");
    }
    std::vector<EfficiencyPoint> out;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_shading || times[k] >= window_end) continue;
        out.push_back({times[k] - t_shading, p_avg[k] / p_gmpp_new, v_avg[k] / v_gmpp_new});
    }
    return out;
}

MetricsReport compute_metrics(const PreparedExperiment& prepared,
                              const std::vector<std::vector<std::vector<StepRecord>>>& episodes,
                              const std::vector<int>& failures) {
    const auto& sc = prepared.scenario;
    MetricsReport report;
    for (std::size_t e = 0; e < sc.environment.schedule.size(); ++e) {
        report.oracle.push_back({sc.environment.schedule[e].t_start, prepared.oracle[e]});
    }

    std::vector<long> trigger_counts(sc.controllers.size(), 0);
    for (std::size_t ci = 0; ci < sc.controllers.size(); ++ci) {
        for (const auto& ep : episodes[ci]) {
            for (const auto& r : ep) trigger_counts[ci] += r.ann_triggered ? 1 : 0;
        }
    }
    // reference for the resource-saving comparison: the threshold-rule baseline
    int ref = -1;
    for (std::size_t ci = 0; ci < sc.controllers.size(); ++ci) {
        if (sc.controllers[ci].config.kind == ControllerKind::ann_ic_baseline) {
            ref = static_cast<int>(ci);
            break;
        }
    }

    for (std::size_t ci = 0; ci < sc.controllers.size(); ++ci) {
        const auto& spec = sc.controllers[ci];
        ControllerMetrics cm;
        cm.name = spec.name;
        cm.failures = failures[ci];
        cm.h_used = spec.config.gllr.h;
        cm.h1_used = spec.config.h1;

        const auto& eps = episodes[ci];
        const std::size_t n_ok = eps.size();
        if (n_ok > 0) {
            const std::size_t n_steps = eps.front().size();
            std::vector<double> times(n_steps), p_avg(n_steps, 0.0), v_avg(n_steps, 0.0);
            for (std::size_t k = 0; k < n_steps; ++k) times[k] = eps.front()[k].t;
            for (const auto& ep : eps) {
                for (std::size_t k = 0; k < n_steps; ++k) {
                    p_avg[k] += ep[k].p_meas;
                    v_avg[k] += ep[k].v_meas;
                }
            }
            for (auto& p : p_avg) p /= static_cast<double>(n_ok);
            for (auto& v : v_avg) v /= static_cast<double>(n_ok);

            cm.ann_triggers_mean = static_cast<double>(trigger_counts[ci]) / n_ok;
            cm.ann_trigger_rate_hz = cm.ann_triggers_mean / sc.t_end_s;

            for (std::size_t e = 1; e < sc.environment.schedule.size(); ++e) {
                TransitionMetrics tm;
                tm.transition = static_cast<int>(e);
                tm.t_shading_s = sc.environment.schedule[e].t_start;
                tm.v_gmpp_new_v = prepared.oracle[e].first;
                tm.p_gmpp_new_w = prepared.oracle[e].second;
                const double window_end = e + 1 < sc.environment.schedule.size()
                                              ? sc.environment.schedule[e + 1].t_start
                                              : sc.t_end_s;
                tm.delay70_s = delay_to_fraction(times, p_avg, tm.t_shading_s, tm.p_gmpp_new_w,
                                                 0.70, 3, window_end);
                tm.delay80_s = delay_to_fraction(times, p_avg, tm.t_shading_s, tm.p_gmpp_new_w,
                                                 0.80, 3, window_end);
                tm.delay95_s = delay_to_fraction(times, p_avg, tm.t_shading_s, tm.p_gmpp_new_w,
                                                 0.95, 3, window_end);
                tm.efficiency = efficiency_curve(times, p_avg, v_avg, tm.t_shading_s,
                                                 tm.p_gmpp_new_w, tm.v_gmpp_new_v, window_end);
                cm.transitions.push_back(std::move(tm));
            }
        }
        if (ref >= 0 && trigger_counts[ref] > 0 && n_ok > 0 &&
            !episodes[ref].empty()) {
            // common duration: same t_end and replication count by construction
            cm.resource_saving_pct =
                resource_saving(trigger_counts[ci], trigger_counts[ref],
                                sc.t_end_s * static_cast<double>(n_ok));
        }
        report.controllers.push_back(std::move(cm));
    }
    return report;
}

MetricsReport run_experiment(const ScenarioConfig& scenario, const std::string& out_dir) {
    PreparedExperiment prep = prepare_experiment(scenario);
    const auto& sc = prep.scenario;
    std::filesystem::create_directories(out_dir);

    std::vector<std::vector<std::vector<StepRecord>>> episodes(sc.controllers.size());
    std::vector<int> failures(sc.controllers.size(), 0);
    std::ofstream fail_log(out_dir + "/failures.log");
    for (std::size_t ci = 0; ci < sc.controllers.size(); ++ci) {
        const auto& spec = sc.controllers[ci];
        const MlpModel* model = prep.has_model[ci] ? &prep.models[ci] : nullptr;
        for (int rep = 0; rep < sc.n_replications; ++rep) {
            const std::uint64_t seed = sc.base_seed + static_cast<std::uint64_t>(rep);
            try {
                auto recs = run_episode(spec.config, prep.plant, sc.environment, model,
                                        sc.t_end_s, seed);
                write_trace_csv(out_dir + "/trace_" + spec.name + "_" + std::to_string(rep) +
                                    ".csv",
                                recs);
                episodes[ci].push_back(std::move(recs));
            } catch (const std::exception& e) {
                ++failures[ci];
                fail_log << spec.name << "," << rep << "," << e.what() << "\n";
            }
        }
    }

    MetricsReport report = compute_metrics(prep, episodes, failures);
    write_metrics_csv(out_dir + "/metrics.csv", report);
    write_efficiency_csv(out_dir + "/efficiency.csv", report);
    write_gmpp_csv(out_dir + "/gmpp.csv", sc, report);

    std::ofstream calib(out_dir + "/calibration.csv");
    calib << "controller,h,h1_w,v0_v,sigma0_v\n";
    for (const auto& spec : sc.controllers) {
        calib << spec.name << "," << fmt(spec.config.gllr.h) << "," << fmt(spec.config.h1)
              << "," << fmt(spec.config.smc.v0) << "," << fmt(spec.config.smc.sigma0) << "\n";
    }
    return report;
}

void write_trace_csv(const std::string& path, std::span<const StepRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "t,v_cmd,v_meas,i_meas,p_meas,g,alarm,ann,v_hat,v_egmpp\n";
    for (const auto& r : records) {
        out << fmt(r.t) << "," << fmt(r.v_cmd) << "," << fmt(r.v_meas) << "," << fmt(r.i_meas)
            << "," << fmt(r.p_meas) << "," << fmt(r.g) << "," << (r.alarm ? 1 : 0) << ","
            << (r.ann_triggered ? 1 : 0) << "," << fmt(r.v_hat) << "," << fmt(r.v_egmpp)
            << "\n";
    }
}

std::vector<StepRecord> read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty trace file " + path);
    std::vector<StepRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 10) throw std::runtime_error("bad trace row in " + path);
        StepRecord r;
        r.t = std::stod(cells[0]);
        r.v_cmd = std::stod(cells[1]);
        r.v_meas = std::stod(cells[2]);
        r.i_meas = std::stod(cells[3]);
        r.p_meas = std::stod(cells[4]);
        r.g = std::stod(cells[5]);
        r.alarm = cells[6] == "1";
        r.ann_triggered = cells[7] == "1";
        r.v_hat = std::stod(cells[8]);
        r.v_egmpp = std::stod(cells[9]);
        out.push_back(r);
    }
    return out;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "controller,transition,t_shading_s,v_gmpp_new_v,p_gmpp_new_w,delay70_s,delay80_s,"
           "delay95_s,ann_triggers_mean,ann_trigger_rate_hz,resource_saving_pct,failures\n";
    auto delay_cell = [](const std::optional<double>& d) {
        return d.has_value() ? fmt(*d) : std::string("not-reached");
    };
    for (const auto& cm : report.controllers) {
        for (const auto& tm : cm.transitions) {
            out << cm.name << "," << tm.transition << "," << fmt(tm.t_shading_s) << ","
                << fmt(tm.v_gmpp_new_v) << "," << fmt(tm.p_gmpp_new_w) << ","
                << delay_cell(tm.delay70_s) << "," << delay_cell(tm.delay80_s) << ","
                << delay_cell(tm.delay95_s) << "," << fmt(cm.ann_triggers_mean) << ","
                << fmt(cm.ann_trigger_rate_hz) << ","
                << (cm.resource_saving_pct ? fmt(*cm.resource_saving_pct) : std::string())
                << "," << cm.failures << "\n";
        }
        if (cm.transitions.empty()) {
            out << cm.name << ",0,,,,,,," << fmt(cm.ann_triggers_mean) << ","
                << fmt(cm.ann_trigger_rate_hz) << ","
                << (cm.resource_saving_pct ? fmt(*cm.resource_saving_pct) : std::string())
                << "," << cm.failures << "\n";
        }
    }
}

void write_efficiency_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "controller,transition,delay_s,p_ratio,v_ratio\n";
    for (const auto& cm : report.controllers) {
        for (const auto& tm : cm.transitions) {
            for (const auto& pt : tm.efficiency) {
                out << cm.name << "," << tm.transition << "," << fmt(pt.delay_s) << ","
                    << fmt(pt.p_ratio) << "," << fmt(pt.v_ratio) << "\n";
            }
        }
    }
}

void write_gmpp_csv(const std::string& path, const ScenarioConfig& scenario,
                    const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "schedule_index,t_start_s,v_gmpp_v,p_gmpp_w\n";
    for (std::size_t e = 0; e < report.oracle.size(); ++e) {
        out << e << "," << fmt(scenario.environment.schedule[e].t_start) << ","
            << fmt(report.oracle[e].second.first) << "," << fmt(report.oracle[e].second.second)
            << "\n";
    }
}

void write_sweep_csv(const std::string& path, std::span<const CurveSample> sweep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "v,i,p\n";
    for (const auto& s : sweep) {
        out << fmt(s.v) << "," << fmt(s.i) << "," << fmt(s.p) << "\n";
    }
}

void write_particles_csv(const std::string& path,
                         std::span<const std::pair<double, ParticleSet>> snapshots) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "t,j,v,w\n";
    for (const auto& [t, ps] : snapshots) {
        for (std::size_t j = 0; j < ps.size(); ++j) {
            out << fmt(t) << "," << j << "," << fmt(ps.v[j]) << "," << fmt(ps.w[j]) << "\n";
        }
    }
}

} // namespace mpptlab
