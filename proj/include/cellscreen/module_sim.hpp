/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <random>
#include <stdexcept>

#include "cellscreen/ecm.hpp"

namespace cellscreen::sim {

enum class ThermalMode { Prescribed, FirstOrderLumped };

struct ThermalConfig {
    ThermalMode mode = ThermalMode::Prescribed;
    double setpoint_c = 25.0;
    // First-order mode only. Defaults give ~4 degC steady rise at the 1C
    // joule load and a ~30 min time constant.
    double thermal_resistance_k_per_w = 0.11;
    double thermal_capacitance_j_per_k = 18000.0;
    double sensor_noise_sd_c = 0.05;
    std::array<double, 3> sensor_offsets_c{0.0, 0.0, 0.0};
    // Per-Cell offsets applied when evaluating R0(T); lets users emulate the
    // hypothesis that the center Cell runs hotter.
    std::array<double, 3> cell_temp_offsets_c{0.0, 0.0, 0.0};
};

struct ModuleConfig {
    std::array<ecm::CellParams, 3> cells;
    double interconnect_r_ohm = 0.0;  // per junction; two junctions in the string
    double r_bleed_ohm = 67.5;
    ThermalConfig thermal;
    // Abort threshold on how far past [0, 1] a Cell's raw SOC update may go.
    // A zero-width margin would trip on the rated-voltage CV endpoint.
    double soc_saturation_tol = 0.005;
};

struct ModuleState {
    std::array<ecm::CellState, 3> cell_states;
    double v_module_v = 0.0;
    double i_module_a = 0.0;
    double temp_module_c = 25.0;
    std::array<double, 3> t_sensors_c{25.0, 25.0, 25.0};
    std::array<bool, 3> switches{false, false, false};
    double time_s = 0.0;
};

/// Raised when a Cell's SOC leaves [0, 1] by more than the configured
/// tolerance; the protocol layer turns this into a flagged abort.
class SocSaturationError : public std::runtime_error {
public:
    SocSaturationError(int cell_index, double excess, double time_s);

    int cell_index;   // 0-based
    double excess;
    double time_s;
};

/// Node potentials C1+, C2+, C3+ vs G- for the measurement chain, including
/// interconnect drops between taps.
std::array<double, 3> node_potentials(const ModuleConfig& cfg, const ModuleState& state);

ModuleState initial_state(const ModuleConfig& cfg, const std::array<double, 3>& initial_soc,
                          std::mt19937_64& rng);

/// Advance every Cell by dt under the given module current and switch
/// states, then refresh voltages, thermal state and sensor readings.
ModuleState step(const ModuleConfig& cfg, const ModuleState& state, double i_module_a,
                 const std::array<bool, 3>& switches, double dt_s, std::mt19937_64& rng);

/// Instantaneous algebraic response to a current/switch change: refreshes
/// branch currents and voltages without advancing SOC, time or thermal state.
ModuleState apply_current(const ModuleConfig& cfg, const ModuleState& state, double i_module_a,
                          const std::array<bool, 3>& switches);

/// Module current that holds the series terminal voltage at v_target_v given
/// the present SOCs and switch states (ideal CV source).
double solve_cv_current(const ModuleConfig& cfg, const ModuleState& state, double v_target_v,
                        const std::array<bool, 3>& switches);

std::array<double, 3> sensor_temps(const ThermalConfig& thermal, double temp_module_c,
                                   std::mt19937_64& rng);
std::array<double, 3> sensor_temps(const ThermalConfig& thermal, double temp_module_c,
                                   std::uint64_t seed);

/// First-order lumped casing temperature update.
double thermal_step(const ThermalConfig& thermal, double temp_c, double heat_w, double dt_s);

ModuleConfig default_module_config();

}  // namespace cellscreen::sim
