#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace mpptlab {

/// Datasheet constants of the simplified single-diode module model.
/// Defaults are the 60 W module used throughout (21.06 V / 3.80 A class).
struct PvModuleParams {
    double v_oc_stc = 21.06;     // open-circuit voltage at STC [V]
    double i_sc_stc = 3.80;      // short-circuit current at STC [A]
    double i_ph_stc = 3.80;      // photo current at STC [A], identified with i_sc_stc
    double k_i = 3.3e-4;         // short-circuit temperature coefficient [A/K]
    double b_const = 0.2464;     // curve-fitting constant B, dimensionless
    double q_over_k = 11604.518; // electron charge over Boltzmann constant [K/V]
    double t_stc = 298.15;       // STC temperature [K]
    double lambda_stc = 1.0;     // STC irradiance [kW/m^2]

    // Datasheet metadata, not used by the electrical model.
    double v_mpp_datasheet = 17.10; // [V]
    double i_mpp_datasheet = 3.50;  // [A]
    double p_mpp_datasheet = 59.90; // [W]
    double k_v = 0.084;             // V_oc temperature coefficient [V/K], inert

    void validate() const; // throws std::invalid_argument on bad values
};

/// Series/parallel layout. Each group is a contiguous series block of
/// identical modules sharing one irradiance value; the whole string is
/// replicated strings_in_parallel times. strings_in_parallel must be
/// identical across groups of one string.
struct ArrayTopology {
    struct Group {
        int modules_in_series = 1;
        int strings_in_parallel = 1;
        bool bypass = true; // ideal bypass diode across the group
    };
    std::vector<Group> groups;

    void validate() const;
    int strings_in_parallel() const { return groups.empty() ? 0 : groups.front().strings_in_parallel; }
    std::size_t group_count() const { return groups.size(); }
};

/// Time-scheduled per-group irradiance (shading patterns) plus temperature.
struct EnvironmentProfile {
    struct Entry {
        double t_start = 0.0;                 // [s]
        std::vector<double> irradiance;       // per group [kW/m^2]
        double temperature = 298.15;          // [K]
    };
    std::vector<Entry> schedule;

    void validate(std::size_t group_count) const;
    const Entry& at_time(double t) const; // last entry with t_start <= t
};

struct CurveSample {
    double v = 0; // [V]
    double i = 0; // [A]
    double p = 0; // [W], exactly v*i
};

// -- Module-level operations (Eqs. of the simplified single-diode model) --

/// Module output current at voltage v, irradiance [kW/m^2], temperature [K].
double module_current(double v, double irradiance, double temperature,
                      const PvModuleParams& params);

/// Inverse of module_current in v. Requires 0 <= i <= module_current(0, ...),
/// otherwise throws "current-exceeds-capability". The returned v satisfies
/// module_current(v, ...) = i within 1e-9 A.
double module_voltage_from_current(double i, double irradiance, double temperature,
                                   const PvModuleParams& params);

/// Analytic power slope dP/dV = I + V*dI/dV at a module operating point.
double power_slope_analytic(double v, double i, double irradiance, double temperature,
                            const PvModuleParams& params);

// -- Array-level operations --

/// Immutable plant: module parameters plus topology, with cached STC figures.
class PvArray {
public:
    PvArray(PvModuleParams module, ArrayTopology topo);

    const PvModuleParams& module() const { return module_; }
    const ArrayTopology& topology() const { return topo_; }

    /// Open-circuit voltage of one string for the given per-group conditions.
    double open_circuit_voltage(const std::vector<double>& irradiance, double temperature) const;
    /// Open-circuit voltage at uniform STC conditions (cached).
    double v_oc_stc_array() const { return v_oc_stc_array_; }
    /// Total short-circuit current at uniform STC conditions (cached).
    double i_sc_stc_array() const { return i_sc_stc_array_; }

    /// Total array current at terminal voltage v_total. Solves the per-string
    /// series composition with ideal bypass clamps by bisection on the string
    /// current; monotone non-increasing in v_total.
    double current(double v_total, const std::vector<double>& irradiance, double temperature) const;

private:
    PvModuleParams module_;
    ArrayTopology topo_;
    double v_oc_stc_array_ = 0;
    double i_sc_stc_array_ = 0;

    double string_voltage(double i, const std::vector<double>& irradiance, double temperature) const;
};

/// Uniformly spaced P-V/I-V sweep over [0, v_max] with n_points samples.
std::vector<CurveSample> sweep_pv_curve(const PvArray& array,
                                        const std::vector<double>& irradiance,
                                        double temperature, double v_max, int n_points);

/// Brute-force global MPP: dense sweep (>= 2000 points) plus golden-section
/// refinement of the winning bracket to 1e-3 V. Ground-truth oracle for
/// training data, PQI scoring and acceptance checks.
std::pair<double, double> find_gmpp(const PvArray& array,
                                    const std::vector<double>& irradiance,
                                    double temperature, int n_points = 2000);

/// Strict local maxima of the power samples that exceed `floor_fraction` of
/// the sweep peak. Used by the multi-peak shading checks.
int count_power_peaks(const std::vector<CurveSample>& sweep, double floor_fraction = 0.01);

} // namespace mpptlab
