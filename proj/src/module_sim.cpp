/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/module_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cellscreen::sim {

SocSaturationError::SocSaturationError(int cell, double exc, double t)
    : std::runtime_error("Cell " + std::to_string(cell + 1) + " SOC left [0, 1] by " +
                         std::to_string(exc) + " at t = " + std::to_string(t) + " s"),
      cell_index(cell),
      excess(exc),
      time_s(t)
{
}

std::array<double, 3> node_potentials(const ModuleConfig& cfg, const ModuleState& state)
{
    // Taps sit past the inter-Cell junctions, so C2+/C3+ pick up the
    // interconnect drops (zero at the default interconnect_r).
    const double drop = state.i_module_a * cfg.interconnect_r_ohm;
    const auto& cs = state.cell_states;
    return {
        cs[0].v_terminal_v,
        cs[0].v_terminal_v + cs[1].v_terminal_v + drop,
        cs[0].v_terminal_v + cs[1].v_terminal_v + cs[2].v_terminal_v + 2.0 * drop,
    };
}

namespace {

double cell_temp(const ModuleConfig& cfg, const ModuleState& state, int j)
{
    return state.temp_module_c + cfg.thermal.cell_temp_offsets_c[j];
}

void refresh_outputs(const ModuleConfig& cfg, ModuleState& state, double i_module_a,
                     const std::array<bool, 3>& switches, double* heat_w)
{
    double v_sum = 0.0;
    double heat = 0.0;
    for (int j = 0; j < 3; ++j) {
        auto& cs = state.cell_states[j];
        const auto& params = cfg.cells[j];
        const double temp = cell_temp(cfg, state, j);
        if (switches[j]) {
            const auto bc = ecm::branch_currents_closed(params, cs.soc, i_module_a,
                                                        cfg.r_bleed_ohm, temp);
            cs.i_cell_a = bc.i_cell_a;
            cs.v_terminal_v = bc.v_cell_v;
            heat += cfg.r_bleed_ohm * bc.i_bleed_a * bc.i_bleed_a;
        } else {
            cs.i_cell_a = i_module_a;
            cs.v_terminal_v = ecm::terminal_voltage(params, cs.soc, i_module_a, temp);
        }
        const double r0 = params.r0_law.eval(temp, cs.soc);
        heat += r0 * cs.i_cell_a * cs.i_cell_a;
        v_sum += cs.v_terminal_v;
    }
    state.v_module_v = v_sum + i_module_a * 2.0 * cfg.interconnect_r_ohm;
    state.i_module_a = i_module_a;
    state.switches = switches;
    if (heat_w != nullptr)
        *heat_w = heat;
}

}  // namespace

ModuleState initial_state(const ModuleConfig& cfg, const std::array<double, 3>& initial_soc,
                          std::mt19937_64& rng)
{
    ModuleState state;
    state.temp_module_c = cfg.thermal.setpoint_c;
    state.time_s = 0.0;
    for (int j = 0; j < 3; ++j)
        state.cell_states[j].soc = initial_soc[j];
    refresh_outputs(cfg, state, 0.0, {false, false, false}, nullptr);
    state.t_sensors_c = sensor_temps(cfg.thermal, state.temp_module_c, rng);
    return state;
}

ModuleState step(const ModuleConfig& cfg, const ModuleState& state, double i_module_a,
                 const std::array<bool, 3>& switches, double dt_s, std::mt19937_64& rng)
{
    if (dt_s <= 0.0)
        throw std::invalid_argument("dt must be positive");

    ModuleState next = state;
    next.time_s = state.time_s + dt_s;

    for (int j = 0; j < 3; ++j) {
        auto& cs = next.cell_states[j];
        const auto& params = cfg.cells[j];
        ecm::SocUpdate upd{};
        if (switches[j]) {
            const double rate = ecm::soc_derivative_closed(params, cs.soc, i_module_a,
                                                           cfg.r_bleed_ohm,
                                                           cell_temp(cfg, state, j));
            const double raw = cs.soc + rate * dt_s;
            upd.soc = std::clamp(raw, 0.0, 1.0);
            upd.excess = std::max({0.0, raw - 1.0, -raw});
        } else {
            upd = ecm::soc_step_open(params, cs.soc, i_module_a, dt_s);
        }
        if (upd.excess > cfg.soc_saturation_tol)
            throw SocSaturationError(j, upd.excess, next.time_s);
        cs.soc = upd.soc;
    }

    double heat_w = 0.0;
    refresh_outputs(cfg, next, i_module_a, switches, &heat_w);

    if (cfg.thermal.mode == ThermalMode::FirstOrderLumped)
        next.temp_module_c = thermal_step(cfg.thermal, state.temp_module_c, heat_w, dt_s);
    else
        next.temp_module_c = cfg.thermal.setpoint_c;
    next.t_sensors_c = sensor_temps(cfg.thermal, next.temp_module_c, rng);

    return next;
}

ModuleState apply_current(const ModuleConfig& cfg, const ModuleState& state, double i_module_a,
                          const std::array<bool, 3>& switches)
{
    ModuleState next = state;
    refresh_outputs(cfg, next, i_module_a, switches, nullptr);
    return next;
}

double solve_cv_current(const ModuleConfig& cfg, const ModuleState& state, double v_target_v,
                        const std::array<bool, 3>& switches)
{
    // v_j is affine in I_m for both switch states, so the series sum solves
    // in closed form: open v_j = ocv + R0*I, closed v_j = Rb*(ocv + R0*I)/(R0+Rb).
    double a = 0.0;
    double b = 2.0 * cfg.interconnect_r_ohm;
    for (int j = 0; j < 3; ++j) {
        const auto& params = cfg.cells[j];
        const double soc = state.cell_states[j].soc;
        const double temp = cell_temp(cfg, state, j);
        const double ocv = params.ocv.lookup(soc);
        const double r0 = params.r0_law.eval(temp, soc);
        if (switches[j]) {
            const double k = cfg.r_bleed_ohm / (r0 + cfg.r_bleed_ohm);
            a += k * ocv;
            b += k * r0;
        } else {
            a += ocv;
            b += r0;
        }
    }
    return (v_target_v - a) / b;
}

std::array<double, 3> sensor_temps(const ThermalConfig& thermal, double temp_module_c,
                                   std::mt19937_64& rng)
{
    std::array<double, 3> out{};
    std::normal_distribution<double> noise(0.0, thermal.sensor_noise_sd_c);
    for (int s = 0; s < 3; ++s) {
        double reading = temp_module_c + thermal.sensor_offsets_c[s];
        if (thermal.sensor_noise_sd_c > 0.0)
            reading += noise(rng);
        out[s] = reading;
    }
    return out;
}

std::array<double, 3> sensor_temps(const ThermalConfig& thermal, double temp_module_c,
                                   std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return sensor_temps(thermal, temp_module_c, rng);
}

double thermal_step(const ThermalConfig& thermal, double temp_c, double heat_w, double dt_s)
{
    if (thermal.thermal_resistance_k_per_w <= 0.0 || thermal.thermal_capacitance_j_per_k <= 0.0)
        throw std::invalid_argument("first-order thermal mode needs positive R_th and C_th");
    const double r = thermal.thermal_resistance_k_per_w;
    const double c = thermal.thermal_capacitance_j_per_k;
    return temp_c + dt_s * ((thermal.setpoint_c - temp_c) / (r * c) + heat_w / c);
}

ModuleConfig default_module_config()
{
    ModuleConfig cfg;
    cfg.cells = {ecm::default_cell_params(), ecm::default_cell_params(),
                 ecm::default_cell_params()};
    return cfg;
}

}  // namespace cellscreen::sim
