#include "mpptlab/pv_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mpptlab {

namespace {

void require_finite(double x, const char* name) {
    if (!std::isfinite(x)) {
        throw std::invalid_argument(std::string("non-finite input: ") + name);
    }
}

// Diode exponent qB/(kT).
double diode_exponent(double temperature, const PvModuleParams& p) {
    return p.q_over_k * p.b_const / temperature;
}

// Photo current at the given irradiance and temperature.
double photo_current(double irradiance, double temperature, const PvModuleParams& p) {
    return (p.i_ph_stc + p.k_i * (temperature - p.t_stc)) * irradiance / p.lambda_stc;
}

} // namespace

void PvModuleParams::validate() const {
    auto positive = [](double x, const char* name) {
        if (!(x > 0) || !std::isfinite(x)) {
            throw std::invalid_argument(std::string("module parameter must be positive: ") + name);
        }
    };
    positive(v_oc_stc, "v_oc_stc");
    positive(i_sc_stc, "i_sc_stc");
    positive(i_ph_stc, "i_ph_stc");
    positive(q_over_k, "q_over_k");
    positive(t_stc, "t_stc");
    positive(lambda_stc, "lambda_stc");
    if (!(b_const > 0.0 && b_const < 1.0)) {
        throw std::invalid_argument("b_const must lie in (0, 1)");
    }
    if (!std::isfinite(k_i)) {
        throw std::invalid_argument("k_i must be finite");
    }
}

void ArrayTopology::validate() const {
    if (groups.empty()) {
        throw std::invalid_argument("topology needs at least one group");
    }
    const int parallel = groups.front().strings_in_parallel;
    for (const auto& g : groups) {
        if (g.modules_in_series < 1 || g.strings_in_parallel < 1) {
            throw std::invalid_argument("group counts must be >= 1");
        }
        if (g.strings_in_parallel != parallel) {
            throw std::invalid_argument("strings_in_parallel must be identical across groups");
        }
    }
}

void EnvironmentProfile::validate(std::size_t group_count) const {
    if (schedule.empty()) {
        throw std::invalid_argument("environment schedule is empty");
    }
    if (schedule.front().t_start != 0.0) {
        throw std::invalid_argument("first schedule entry must start at t=0");
    }
    double prev = -1.0;
    for (const auto& e : schedule) {
        if (!(e.t_start > prev)) {
            throw std::invalid_argument("schedule t_start must be strictly increasing");
        }
        prev = e.t_start;
        if (e.irradiance.size() != group_count) {
            throw std::invalid_argument("irradiance list length must equal group count");
        }
        for (double irr : e.irradiance) {
            if (!(irr >= 0.0) || !std::isfinite(irr)) {
                throw std::invalid_argument("irradiance must be finite and >= 0");
            }
        }
        if (!(e.temperature > 0.0)) {
            throw std::invalid_argument("temperature must be > 0");
        }
    }
}

const EnvironmentProfile::Entry& EnvironmentProfile::at_time(double t) const {
    const Entry* best = &schedule.front();
    for (const auto& e : schedule) {
        if (e.t_start <= t) {
            best = &e;
        } else {
            break;
        }
    }
    return *best;
}

double module_current(double v, double irradiance, double temperature,
                      const PvModuleParams& params) {
    require_finite(v, "v");
    require_finite(irradiance, "irradiance");
    require_finite(temperature, "temperature");
    if (v < 0.0) throw std::invalid_argument("v must be >= 0");
    if (irradiance < 0.0) throw std::invalid_argument("irradiance must be >= 0");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");

    const double c = diode_exponent(temperature, params);
    const double i_dark = params.i_sc_stc / std::exp(c);
    const double i_ph = photo_current(irradiance, temperature, params);
    return i_ph - i_dark * (std::exp(c * v / params.v_oc_stc) - 1.0);
}

double module_voltage_from_current(double i, double irradiance, double temperature,
                                   const PvModuleParams& params) {
    require_finite(i, "i");
    const double i_sc = module_current(0.0, irradiance, temperature, params);
    if (i < 0.0 || i > i_sc + 1e-12 * std::max(1.0, i_sc)) {
        throw std::runtime_error("current-exceeds-capability");
    }
    // Eq. 1 is a single exponential in v, so the inverse is a logarithm. The
    // result agrees with module_current to well below the 1e-9 A contract.
    const double c = diode_exponent(temperature, params);
    const double i_dark = params.i_sc_stc / std::exp(c);
    const double arg = std::max((i_sc - i) / i_dark + 1.0, 1.0);
    return params.v_oc_stc * std::log(arg) / c;
}

double power_slope_analytic(double v, double i, double irradiance, double temperature,
                            const PvModuleParams& params) {
    require_finite(v, "v");
    require_finite(i, "i");
    if (v < 0.0) throw std::invalid_argument("v must be >= 0");
    const double c = diode_exponent(temperature, params);
    const double i_dark = params.i_sc_stc / std::exp(c);
    const double di_dv = -i_dark * (c / params.v_oc_stc) * std::exp(c * v / params.v_oc_stc);
    (void)irradiance;
    return i + v * di_dv;
}

PvArray::PvArray(PvModuleParams module, ArrayTopology topo)
    : module_(std::move(module)), topo_(std::move(topo)) {
    module_.validate();
    topo_.validate();
    std::vector<double> stc(topo_.group_count(), module_.lambda_stc);
    v_oc_stc_array_ = open_circuit_voltage(stc, module_.t_stc);
    i_sc_stc_array_ = module_current(0.0, module_.lambda_stc, module_.t_stc, module_) *
                      topo_.strings_in_parallel();
}

double PvArray::string_voltage(double i, const std::vector<double>& irradiance,
                               double temperature) const {
    double v = 0.0;
    for (std::size_t g = 0; g < topo_.groups.size(); ++g) {
        const auto& grp = topo_.groups[g];
        const double i_sc = module_current(0.0, irradiance[g], temperature, module_);
        if (grp.bypass && i >= i_sc) {
            continue; // bypass diode carries the excess, group clamps at 0 V
        }
        v += grp.modules_in_series *
             module_voltage_from_current(std::min(i, i_sc), irradiance[g], temperature, module_);
    }
    return v;
}

double PvArray::open_circuit_voltage(const std::vector<double>& irradiance,
                                     double temperature) const {
    if (irradiance.size() != topo_.group_count()) {
        throw std::invalid_argument("irradiance list length must equal group count");
    }
    return string_voltage(0.0, irradiance, temperature);
}

double PvArray::current(double v_total, const std::vector<double>& irradiance,
                        double temperature) const {
    require_finite(v_total, "v_total");
    if (v_total < 0.0) throw std::invalid_argument("v_total must be >= 0");
    if (irradiance.size() != topo_.group_count()) {
        throw std::invalid_argument("irradiance list length must equal group count");
    }

    // Admissible string-current range: bypassed groups clamp to 0 V beyond
    // their short-circuit current, groups without bypass bound the current.
    double i_max_bypassed = 0.0;
    double i_min_unbypassed = std::numeric_limits<double>::infinity();
    bool has_unbypassed = false;
    for (std::size_t g = 0; g < topo_.groups.size(); ++g) {
        const double i_sc = module_current(0.0, irradiance[g], temperature, module_);
        if (topo_.groups[g].bypass) {
            i_max_bypassed = std::max(i_max_bypassed, i_sc);
        } else {
            has_unbypassed = true;
            i_min_unbypassed = std::min(i_min_unbypassed, i_sc);
        }
    }
    const double i_upper = has_unbypassed ? i_min_unbypassed : i_max_bypassed;

    const int n_parallel = topo_.strings_in_parallel();
    if (i_upper <= 0.0) {
        return 0.0; // dark array
    }
    if (v_total >= string_voltage(0.0, irradiance, temperature)) {
        return 0.0; // at or beyond open circuit
    }
    if (string_voltage(i_upper, irradiance, temperature) >= v_total) {
        return i_upper * n_parallel; // current saturates (short-circuit side)
    }

    double lo = 0.0;     // string_voltage(lo) > v_total
    double hi = i_upper; // string_voltage(hi) < v_total
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break; // bracket exhausted at machine precision
        if (string_voltage(mid, irradiance, temperature) > v_total) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double residual = string_voltage(mid, irradiance, temperature) - v_total;
    if (std::abs(residual) > 1e-6) {
        std::ostringstream oss;
        oss << "array current solve did not converge: v_total=" << v_total
            << " residual=" << residual << " bracket=[" << lo << "," << hi << "]";
        throw std::runtime_error(oss.str());
    }
    return mid * n_parallel;
}

std::vector<CurveSample> sweep_pv_curve(const PvArray& array,
                                        const std::vector<double>& irradiance,
                                        double temperature, double v_max, int n_points) {
    if (n_points < 2) throw std::invalid_argument("n_points must be >= 2");
    if (!(v_max > 0.0)) throw std::invalid_argument("v_max must be > 0");
    std::vector<CurveSample> out;
    out.reserve(static_cast<std::size_t>(n_points));
    for (int k = 0; k < n_points; ++k) {
        const double v = v_max * static_cast<double>(k) / static_cast<double>(n_points - 1);
        const double i = array.current(v, irradiance, temperature);
        out.push_back({v, i, v * i});
    }
    return out;
}

std::pair<double, double> find_gmpp(const PvArray& array,
                                    const std::vector<double>& irradiance,
                                    double temperature, int n_points) {
    n_points = std::max(n_points, 2000);
    const double v_oc = array.open_circuit_voltage(irradiance, temperature);
    if (v_oc <= 0.0) {
        return {0.0, 0.0}; // dark array, no generation
    }
    const auto sweep = sweep_pv_curve(array, irradiance, temperature, v_oc * 1.02, n_points);
    std::size_t best = 0;
    for (std::size_t k = 1; k < sweep.size(); ++k) {
        if (sweep[k].p > sweep[best].p) best = k;
    }
    double a = sweep[best > 0 ? best - 1 : 0].v;
    double b = sweep[std::min(best + 1, sweep.size() - 1)].v;
    auto power = [&](double v) { return v * array.current(v, irradiance, temperature); };

    // Golden-section refinement on the winning bracket.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = power(x1);
    double f2 = power(x2);
    while (b - a > 1e-3) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = power(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = power(x1);
        }
    }
    const double v_star = 0.5 * (a + b);
    return {v_star, power(v_star)};
}

int count_power_peaks(const std::vector<CurveSample>& sweep, double floor_fraction) {
    if (sweep.size() < 3) return 0;
    double peak = 0.0;
    for (const auto& s : sweep) peak = std::max(peak, s.p);
    const double floor = peak * floor_fraction;
    int count = 0;
    for (std::size_t k = 1; k + 1 < sweep.size(); ++k) {
        if (sweep[k].p > floor && sweep[k].p > sweep[k - 1].p && sweep[k].p > sweep[k + 1].p) {
            ++count;
        }
    }
    return count;
}

} // namespace mpptlab
