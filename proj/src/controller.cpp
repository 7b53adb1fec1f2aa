#include "mpptlab/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpptlab {

void ControllerConfig::validate() const {
    if (!(f_s > 0.0)) throw std::invalid_argument("controller: f_s must be > 0");
    if (m_probes < 1) throw std::invalid_argument("controller: m_probes must be >= 1");
    if (!(probe_half_width > 0.0)) {
        throw std::invalid_argument("controller: probe_half_width must be > 0");
    }
    if (kind == ControllerKind::enhanced) {
        smc.validate();
        gllr.validate();
        if (!(gllr.h > 0.0)) {
            throw std::invalid_argument("controller: enhanced kind needs a calibrated gllr.h");
        }
    }
    if (kind == ControllerKind::ann_ic_baseline) {
        if (ann_mode == AnnMode::none) {
            throw std::invalid_argument("controller: ann-ic baseline needs an ANN mode");
        }
        if (!(h1 > 0.0)) {
            throw std::invalid_argument("controller: ann-ic baseline needs a calibrated h1");
        }
    }
}

Measurement measure(const PvArray& plant, const EnvironmentProfile::Entry& env, double v_command,
                    double sigma_v, double sigma_i, std::mt19937_64& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    const double nv = unit(rng);
    const double ni = unit(rng);
    Measurement m;
    m.v = v_command + sigma_v * nv;
    m.i = plant.current(v_command, env.irradiance, env.temperature) + sigma_i * ni;
    m.p = m.v * m.i;
    return m;
}

double slope_estimate(double v_prev, double p_prev, double v_now, double p_now,
                      double prev_slope) {
    const double dv = v_now - v_prev;
    if (std::abs(dv) < 1e-3) return prev_slope;
    return (p_now - p_prev) / dv;
}

std::vector<double> generate_probe_voltages(double v_now, double half_width, int m_probes,
                                            double v_oc_array, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> probes(m_probes);
    for (auto& v : probes) {
        v = std::clamp(v_now + (2.0 * unit(rng) - 1.0) * half_width, 0.0, v_oc_array);
    }
    std::sort(probes.begin(), probes.end());
    return probes;
}

Controller::Controller(ControllerConfig config, const PvArray& plant,
                       const EnvironmentProfile& env, const MlpModel* ann, std::uint64_t seed)
    : cfg_(std::move(config)),
      plant_(plant),
      env_(env),
      ann_(ann),
      rng_meas_(make_rng(seed, 0x3EA5ULL)),
      rng_ctrl_(make_rng(seed, 0xC021ULL)),
      seed_(seed) {
    cfg_.validate();
    env_.validate(plant_.topology().group_count());
    if (cfg_.ann_mode != AnnMode::none) {
        if (ann_ == nullptr) throw std::invalid_argument("controller: ANN model missing");
        if (cfg_.ann_mode == AnnMode::irradiance && ann_->mode != AnnInputMode::irradiance) {
            throw std::invalid_argument("controller: model mode mismatch (want irradiance)");
        }
        if (cfg_.ann_mode == AnnMode::vi_probes && ann_->mode != AnnInputMode::vi_probes) {
            throw std::invalid_argument("controller: model mode mismatch (want vi)");
        }
    }
    v_oc_array_ = plant_.v_oc_stc_array();
    sigma_i_ = cfg_.smc.sigma_v * plant_.i_sc_stc_array() / v_oc_array_;
    v_command_ = cfg_.smc.v0;
    v_hat_ = cfg_.smc.v0;
    v_egmpp_latest_ = cfg_.smc.v0;
    v_ref_ic_ = cfg_.smc.v0;
    v_ref_meas_ = cfg_.smc.v0;
    if (cfg_.kind == ControllerKind::enhanced) {
        particles_ = init_particles(cfg_.smc, derive_seed(seed_, 0xF1125ULL));
        enter_rebaseline(); // collect the initial power baseline before detecting
    }
}

void Controller::enter_rebaseline() {
    phase_ = Phase::rebaseline;
    rebase_accum_ = 0.0;
    rebase_count_ = 0;
}

void Controller::update_slope(const StepRecord& rec) {
    if (!has_prev_) return;
    const double candidate =
        slope_estimate(prev_v_meas_, prev_p_meas_, rec.v_meas, rec.p_meas, last_slope_);
    // A secant spanning an abrupt power change at millivolt separation is not
    // a physical slope; keep the last accepted value instead. The bound is
    // generous against the steepest point of the curve.
    if (std::abs(candidate) <= 100.0 * plant_.i_sc_stc_array()) {
        last_slope_ = candidate;
    }
}

void Controller::smc_update(StepRecord& rec, bool from_probing) {
    update_slope(rec);
    // Probe setpoints are not reference-state measurements, so a refinement
    // latched at the end of probing closes the gap against the last tracking
    // measurement instead.
    const double reference_meas = from_probing ? v_ref_meas_ : rec.v_meas;
    const double u = refinement_term(v_egmpp_latest_, reference_meas, alarm_latch_);
    // On the latched (just-predicted) update the refinement carries the whole
    // correction; the I-C drift is skipped because the finite-difference slope
    // spans the power discontinuity and is meaningless there.
    const double drift_slope = alarm_latch_ ? 0.0 : last_slope_;
    alarm_latch_ = false;
    particles_ = propagate(std::move(particles_), {drift_slope, u, v_egmpp_latest_}, cfg_.smc,
                           next_seed());
    // Guard: the quadratic step size can fling outlier particles arbitrarily
    // far when the slope estimate is noise-dominated; the reference voltage
    // itself lives in the physical range.
    for (auto& v : particles_.v) v = std::clamp(v, 0.0, v_oc_array_);
    particles_ = update_weights(std::move(particles_), rec.v_meas, cfg_.smc);
    v_hat_ = estimate(particles_);
    particles_ = resample_if_needed(std::move(particles_), cfg_.smc, next_seed());
    rec.v_hat = v_hat_;
    v_command_ = std::clamp(v_hat_, 0.0, v_oc_array_);
    if (!from_probing) v_ref_meas_ = rec.v_meas;
}

void Controller::begin_probing(const StepRecord& rec) {
    probe_voltages_ = generate_probe_voltages(rec.v_meas, cfg_.probe_half_width, cfg_.m_probes,
                                              v_oc_array_, rng_ctrl_);
    probe_meas_.clear();
    phase_ = Phase::probing;
    v_command_ = probe_voltages_.front();
}

void Controller::finish_probing(StepRecord& rec) {
    v_egmpp_latest_ = predict_vi(*ann_, probe_meas_);
    rec.ann_triggered = true;
    rec.v_egmpp = v_egmpp_latest_;
}

double Controller::predict_from_env(const EnvironmentProfile::Entry& env_now) const {
    return predict_irr(*ann_, env_now.irradiance);
}

void Controller::step_enhanced(StepRecord& rec, const EnvironmentProfile::Entry& env_now) {
    switch (phase_) {
    case Phase::rebaseline: {
        rebase_accum_ += rec.p_meas;
        ++rebase_count_;
        if (rebase_count_ >= kRebaselineSamples) {
            detector_ = GllrState{};
            detector_.nominal_power = rebase_accum_ / rebase_count_;
            detector_.t_started = step_index_;
            phase_ = Phase::tracking;
        }
        rec.g = 0.0;
        smc_update(rec);
        break;
    }
    case Phase::probing: {
        probe_meas_.emplace_back(rec.v_meas, rec.i_meas);
        rec.g = detector_.g;
        if (static_cast<int>(probe_meas_.size()) < cfg_.m_probes) {
            v_command_ = probe_voltages_[probe_meas_.size()];
        } else {
            finish_probing(rec);
            alarm_latch_ = true;
            smc_update(rec, /*from_probing=*/true);
            enter_rebaseline();
        }
        break;
    }
    case Phase::tracking: {
        auto res = gllr_step(std::move(detector_), rec.p_meas, cfg_.gllr);
        detector_ = std::move(res.state);
        rec.g = detector_.g;
        rec.alarm = res.alarm;
        if (res.alarm) {
            if (cfg_.ann_mode == AnnMode::vi_probes) {
                begin_probing(rec);
            } else if (cfg_.ann_mode == AnnMode::irradiance) {
                v_egmpp_latest_ = predict_from_env(env_now);
                rec.ann_triggered = true;
                rec.v_egmpp = v_egmpp_latest_;
                alarm_latch_ = true;
                smc_update(rec);
                enter_rebaseline();
            } else {
                smc_update(rec);
                enter_rebaseline();
            }
        } else {
            smc_update(rec);
        }
        break;
    }
    }
}

void Controller::step_ic(StepRecord& rec) {
    update_slope(rec);
    v_ref_ic_ = std::clamp(v_ref_ic_ + cfg_.ic_gain * last_slope_, 0.0, v_oc_array_);
    rec.v_hat = v_ref_ic_;
    v_command_ = v_ref_ic_;
}

void Controller::step_ann_ic(StepRecord& rec, const EnvironmentProfile::Entry& env_now) {
    if (phase_ == Phase::probing) {
        probe_meas_.emplace_back(rec.v_meas, rec.i_meas);
        if (static_cast<int>(probe_meas_.size()) < cfg_.m_probes) {
            v_command_ = probe_voltages_[probe_meas_.size()];
        } else {
            finish_probing(rec);
            // restart the fixed-step search from the lower edge of the
            // predicted GMPP region
            v_ref_ic_ = std::clamp(v_egmpp_latest_ - cfg_.probe_half_width, 0.0, v_oc_array_);
            rec.v_hat = v_ref_ic_;
            v_command_ = v_ref_ic_;
            holdoff_ = kRebaselineSamples;
            phase_ = Phase::tracking;
        }
        return;
    }

    bool triggered = false;
    if (holdoff_ > 0) {
        --holdoff_;
    } else if (has_prev_ && std::abs(rec.p_meas - prev_p_meas_) >= cfg_.h1) {
        rec.alarm = true;
        triggered = true;
        if (cfg_.ann_mode == AnnMode::vi_probes) {
            begin_probing(rec);
        } else {
            v_egmpp_latest_ = predict_from_env(env_now);
            rec.ann_triggered = true;
            rec.v_egmpp = v_egmpp_latest_;
            v_ref_ic_ = std::clamp(v_egmpp_latest_ - cfg_.probe_half_width, 0.0, v_oc_array_);
            rec.v_hat = v_ref_ic_;
            v_command_ = v_ref_ic_;
            holdoff_ = kRebaselineSamples;
        }
    }
    if (!triggered) {
        step_ic(rec);
    }
}

StepRecord Controller::step(double t) {
    ++step_index_;
    const auto& env_now = env_.at_time(t);
    const Measurement m = measure(plant_, env_now, v_command_, cfg_.smc.sigma_v, sigma_i_,
                                  rng_meas_);
    StepRecord rec;
    rec.t = t;
    rec.v_cmd = v_command_;
    rec.v_meas = m.v;
    rec.i_meas = m.i;
    rec.p_meas = m.p;
    rec.v_hat = v_hat_;
    rec.v_egmpp = v_egmpp_latest_;

    switch (cfg_.kind) {
    case ControllerKind::enhanced:
        step_enhanced(rec, env_now);
        break;
    case ControllerKind::ic_baseline:
        step_ic(rec);
        break;
    case ControllerKind::ann_ic_baseline:
        step_ann_ic(rec, env_now);
        break;
    }

    rec.v_egmpp = v_egmpp_latest_;
    prev_v_meas_ = rec.v_meas;
    prev_p_meas_ = rec.p_meas;
    has_prev_ = true;
    return rec;
}

std::vector<StepRecord> run_episode(const ControllerConfig& config, const PvArray& plant,
                                    const EnvironmentProfile& env, const MlpModel* ann,
                                    double t_end, std::uint64_t seed) {
    if (!(t_end > 0.0)) throw std::invalid_argument("run_episode: t_end must be > 0");
    Controller ctrl(config, plant, env, ann, seed);
    const long n = static_cast<long>(std::ceil(t_end * config.f_s));
    std::vector<StepRecord> records;
    records.reserve(n);
    for (long k = 0; k < n; ++k) {
        records.push_back(ctrl.step(static_cast<double>(k) / config.f_s));
    }
    return records;
}

} // namespace mpptlab
