#include "mpptlab/change_detect.hpp"

#include "mpptlab/rng.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mpptlab {

void GllrParams::validate() const {
    if (!(b > 0.0)) throw std::invalid_argument("gllr: b must be > 0");
    if (!(sigma_nu > 0.0)) throw std::invalid_argument("gllr: sigma_nu must be > 0");
    if (p < 1) throw std::invalid_argument("gllr: p must be >= 1");
    if (h < 0.0) throw std::invalid_argument("gllr: h must be >= 0");
}

double postprocess(double p_measured, double nominal) {
    return p_measured - nominal;
}

double gllr_increment(double p_tilde_now, std::span<const double> window,
                      const GllrParams& params) {
    if (!(params.sigma_nu > 0.0)) throw std::invalid_argument("gllr: sigma_nu must be > 0");
    if (static_cast<int>(window.size()) != params.p) {
        throw std::invalid_argument("gllr: window length must equal p");
    }
    const double s2 = params.sigma_nu * params.sigma_nu;
    double norm_sq = 0.0;
    for (double w : window) {
        const double z = p_tilde_now * w / s2;
        norm_sq += z * z;
    }
    const double z_var = (p_tilde_now * p_tilde_now / s2 - 1.0) / std::sqrt(2.0);
    const double z_lin = p_tilde_now / params.sigma_nu;
    norm_sq += z_var * z_var + z_lin * z_lin;
    return params.b * std::sqrt(norm_sq) - 0.5 * params.b * params.b;
}

GllrStepResult gllr_step(GllrState state, double p_measured, const GllrParams& params) {
    params.validate();
    const double p_tilde = postprocess(p_measured, state.nominal_power);
    bool alarm = false;
    if (static_cast<int>(state.window.size()) < params.p) {
        state.window.push_back(p_tilde); // warm-up, g stays 0
    } else {
        const double l = gllr_increment(p_tilde, state.window, params);
        state.g = std::max(0.0, state.g + l);
        alarm = state.g >= params.h;
        state.window.erase(state.window.begin());
        state.window.push_back(p_tilde);
    }
    return {std::move(state), alarm};
}

GllrState reset_after_alarm(const GllrState& state, std::span<const double> recent_measurements) {
    if (static_cast<int>(recent_measurements.size()) < kRebaselineSamples) {
        throw std::runtime_error("insufficient-samples");
    }
    GllrState fresh;
    fresh.nominal_power =
        std::accumulate(recent_measurements.begin(),
                        recent_measurements.begin() + kRebaselineSamples, 0.0) /
        kRebaselineSamples;
    fresh.g = 0.0;
    fresh.t_started = state.t_started;
    return fresh;
}

namespace {

// Mean noise-only run length (in samples) of the GLLR recursion at threshold
// h. Seeds are reused across evaluations, which makes the map h -> run length
// deterministic and monotone, so the calibration bisection is well posed.
double gllr_mean_run_length(double b, double h, int p, int n_runs, std::uint64_t seed,
                            long cap) {
    const auto lengths = gllr_noise_run_lengths(b, h, p, n_runs, seed, cap);
    return std::accumulate(lengths.begin(), lengths.end(), 0.0) / lengths.size();
}

double diff_rule_mean_run_length(double h1, int n_runs, std::uint64_t seed, long cap) {
    double total = 0.0;
    for (int run = 0; run < n_runs; ++run) {
        std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(run));
        std::normal_distribution<double> noise(0.0, 1.0);
        double prev = noise(rng);
        long t = 1;
        while (t < cap) {
            ++t;
            const double cur = noise(rng);
            if (std::abs(cur - prev) >= h1) break;
            prev = cur;
        }
        total += static_cast<double>(t);
    }
    return total / n_runs;
}

// Shared bisection-to-target loop for the run-length calibrations.
template <typename Arl>
double bisect_threshold(Arl arl, double target, double lo, double hi, int max_steps) {
    double f_hi = arl(hi);
    int grow = 0;
    while (f_hi < target && grow++ < 60) {
        lo = hi;
        hi *= 2.0;
        f_hi = arl(hi);
    }
    if (f_hi < target) {
        throw std::runtime_error("threshold calibration: failed to bracket the target run length");
    }
    for (int step = 0; step < max_steps; ++step) {
        const double mid = 0.5 * (lo + hi);
        const double f = arl(mid);
        if (std::abs(f - target) <= 0.1 * target) {
            return mid;
        }
        if (f < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    std::ostringstream oss;
    oss << "threshold calibration did not converge after " << max_steps
        << " bisection steps, last bracket [" << lo << ", " << hi << "]";
    throw std::runtime_error(oss.str());
}

} // namespace

std::vector<long> gllr_noise_run_lengths(double b, double h, int p, int n_runs,
                                         std::uint64_t rng_seed, long cap) {
    if (n_runs < 1) throw std::invalid_argument("run lengths: n_runs must be >= 1");
    GllrParams params;
    params.b = b;
    params.h = h;
    params.sigma_nu = 1.0; // the statistic is scale-free in sigma_nu
    params.p = p;
    params.validate();
    std::vector<long> lengths;
    lengths.reserve(n_runs);
    for (int run = 0; run < n_runs; ++run) {
        std::mt19937_64 rng = make_rng(rng_seed, static_cast<std::uint64_t>(run));
        std::normal_distribution<double> noise(0.0, 1.0);
        GllrState state;
        long t = 0;
        while (t < cap) {
            ++t;
            auto res = gllr_step(std::move(state), noise(rng), params);
            state = std::move(res.state);
            if (res.alarm) break;
        }
        lengths.push_back(t);
    }
    return lengths;
}

double calibrate_threshold(double b, double sigma_nu, double gamma_s, double f_s,
                           int n_runs, std::uint64_t rng_seed, int p) {
    if (n_runs < 100) throw std::invalid_argument("calibrate_threshold: n_runs must be >= 100");
    if (!(b > 0.0) || !(sigma_nu > 0.0) || !(gamma_s > 0.0) || !(f_s > 0.0)) {
        throw std::invalid_argument("calibrate_threshold: parameters must be positive");
    }
    const double target = gamma_s * f_s;
    const long cap = static_cast<long>(50.0 * target) + 100;
    // The statistic is scale-free in sigma_nu (the stream enters only as
    // p_tilde/sigma_nu), so the calibration runs on unit noise.
    auto arl = [&](double h) { return gllr_mean_run_length(b, h, p, n_runs, rng_seed, cap); };
    return bisect_threshold(arl, target, 0.0, 8.0, 40);
}

double calibrate_power_diff_threshold(double sigma_nu, double gamma_s, double f_s,
                                      int n_runs, std::uint64_t rng_seed) {
    if (n_runs < 100) throw std::invalid_argument("calibrate threshold: n_runs must be >= 100");
    const double target = gamma_s * f_s;
    const long cap = static_cast<long>(50.0 * target) + 100;
    auto arl = [&](double h1) { return diff_rule_mean_run_length(h1, n_runs, rng_seed, cap); };
    return sigma_nu * bisect_threshold(arl, target, 0.0, 2.0, 40);
}

ArModel fit_ar(std::span<const double> signal, int order) {
    if (order < 1) throw std::invalid_argument("fit_ar: order must be >= 1");
    const long n = static_cast<long>(signal.size());
    if (n <= 10L * order) throw std::invalid_argument("fit_ar: signal length must exceed 10*p");

    const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
    Eigen::VectorXd x(n);
    for (long t = 0; t < n; ++t) x(t) = signal[t] - mean;

    const long rows = n - order;
    // Degenerate (constant) signal: zero coefficients, zero innovation.
    if (x.cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, std::abs(mean))) {
        return {order, std::vector<double>(order, 0.0), mean, 0.0};
    }

    Eigen::MatrixXd A(rows, order);
    Eigen::VectorXd y(rows);
    for (long t = order; t < n; ++t) {
        y(t - order) = x(t);
        for (int j = 1; j <= order; ++j) {
            A(t - order, j - 1) = x(t - j);
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < order) {
        throw std::runtime_error("fit_ar: singular regression");
    }
    Eigen::VectorXd coeffs = qr.solve(y);
    const double rss = (y - A * coeffs).squaredNorm();
    const long dof = std::max(rows - order, 1L);

    ArModel model;
    model.order = order;
    model.coeffs.assign(coeffs.data(), coeffs.data() + order);
    model.mean = mean;
    model.innovation_var = rss / dof;
    return model;
}

std::vector<std::pair<int, double>> ar_cross_validate_nrmse(std::span<const double> signal,
                                                            std::span<const int> orders,
                                                            int k_folds) {
    const long n = static_cast<long>(signal.size());
    if (k_folds < 2) throw std::invalid_argument("ar_cross_validate_nrmse: k_folds must be >= 2");
    double mean_all = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
    double var_all = 0.0;
    for (double s : signal) var_all += (s - mean_all) * (s - mean_all);
    const double sd_all = std::sqrt(var_all / n);
    if (!(sd_all > 0.0)) throw std::invalid_argument("ar_cross_validate_nrmse: constant signal");

    std::vector<std::pair<int, double>> out;
    for (int order : orders) {
        if (order < 1) throw std::invalid_argument("ar_cross_validate_nrmse: order must be >= 1");
        if (n <= 10L * order) {
            throw std::invalid_argument("ar_cross_validate_nrmse: signal too short for order");
        }
        double sq_err = 0.0;
        long n_pred = 0;
        for (int fold = 0; fold < k_folds; ++fold) {
            const long f_lo = n * fold / k_folds;
            const long f_hi = n * (fold + 1) / k_folds;
            // Train rows are those whose target index falls outside the fold.
            std::vector<long> train_rows;
            train_rows.reserve(n - order);
            for (long t = order; t < n; ++t) {
                if (t < f_lo || t >= f_hi) train_rows.push_back(t);
            }
            double mu = 0.0;
            for (long t : train_rows) mu += signal[t];
            mu /= static_cast<double>(train_rows.size());

            Eigen::MatrixXd A(train_rows.size(), order);
            Eigen::VectorXd y(train_rows.size());
            for (std::size_t r = 0; r < train_rows.size(); ++r) {
                const long t = train_rows[r];
                y(r) = signal[t] - mu;
                for (int j = 1; j <= order; ++j) A(r, j - 1) = signal[t - j] - mu;
            }
            Eigen::VectorXd coeffs = A.colPivHouseholderQr().solve(y);

            for (long t = std::max<long>(order, f_lo); t < f_hi; ++t) {
                double pred = mu;
                for (int j = 1; j <= order; ++j) pred += coeffs(j - 1) * (signal[t - j] - mu);
                const double err = signal[t] - pred;
                sq_err += err * err;
                ++n_pred;
            }
        }
        out.emplace_back(order, std::sqrt(sq_err / n_pred) / sd_all);
    }
    return out;
}

std::vector<double> synth_fault_signal(const ArModel& model, int length, double sigma_nu,
                                       std::uint64_t rng_seed) {
    const int p = model.order;
    if (p < 1 || static_cast<int>(model.coeffs.size()) != p) {
        throw std::invalid_argument("synth_fault_signal: malformed AR model");
    }
    if (length < 1) throw std::invalid_argument("synth_fault_signal: length must be >= 1");

    // Stability: companion-matrix spectral radius must be < 1.
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
    for (int j = 0; j < p; ++j) companion(0, j) = model.coeffs[j];
    for (int j = 1; j < p; ++j) companion(j, j - 1) = 1.0;
    const double radius = companion.eigenvalues().cwiseAbs().maxCoeff();
    if (radius >= 1.0) {
        throw std::runtime_error("synth_fault_signal: unstable AR coefficients");
    }

    std::mt19937_64 rng = make_rng(rng_seed, 0xFA17ULL);
    std::normal_distribution<double> innovation(0.0,
                                                std::sqrt(std::max(model.innovation_var, 0.0)));
    std::normal_distribution<double> meas_noise(0.0, std::max(sigma_nu, 0.0));

    std::vector<double> s_hist(p, model.mean);
    std::vector<double> out;
    out.reserve(length);
    for (int t = 0; t < length; ++t) {
        double s = model.mean;
        for (int j = 1; j <= p; ++j) {
            s += model.coeffs[j - 1] * (s_hist[p - j] - model.mean);
        }
        if (model.innovation_var > 0.0) s += innovation(rng);
        s_hist.erase(s_hist.begin());
        s_hist.push_back(s);
        out.push_back(s + (sigma_nu > 0.0 ? meas_noise(rng) : 0.0));
    }
    return out;
}

} // namespace mpptlab
