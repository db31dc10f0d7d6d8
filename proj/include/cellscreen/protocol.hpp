/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cellscreen/log_io.hpp"
#include "cellscreen/mbh.hpp"
#include "cellscreen/module_sim.hpp"

namespace cellscreen::protocol {

enum class SegmentKind { ConstantCurrent, ConstantVoltage, Rest, Pulse };

enum class ExitKind {
    MinCellVoltageReaches,  // delayed reported min Cell voltage <= threshold
    ModuleVoltageReaches,   // direct module voltage crosses threshold in the drive direction
    CurrentBelow,           // |I_m| <= threshold (CV taper)
    Elapsed,                // segment duration
    SocReached,             // rated-capacity Coulomb estimate <= threshold
};

struct ExitCondition {
    ExitKind kind = ExitKind::Elapsed;
    double threshold = 0.0;  // volts | amperes | seconds | soc fraction
};

struct Segment {
    SegmentKind kind = SegmentKind::Rest;
    double current_a = 0.0;  // CC/Pulse, signed (charge positive)
    double voltage_v = 0.0;  // CV hold level
    ExitCondition exit;
    bool balancing = false;
    std::string label;
};

struct PulseSpec {
    double current_a;   // signed
    double duration_s;
    double rest_s;
};

struct HppcBlock {
    std::array<double, 3> soc_levels{0.90, 0.65, 0.40};
    std::array<double, 4> pulse_amps_a{200.0, 122.4, 24.48, 12.24};
    double pulse_s = 15.0;
    double rest_s = 60.0;
};

struct TestPlan {
    std::string name;
    std::vector<Segment> segments;
    double setpoint_temp_c = 25.0;
    double safety_cutoff_temp_c = 50.0;
    double rated_capacity_ah = 244.8;
    double initial_soc_estimate = 1.0;  // rated Coulomb counter start
    int capacity_segment_id = -1;       // index of the C/3 capacity discharge
    std::vector<double> soc_levels;     // HPPC levels, in protocol order
};

/// Deterministic pulse ordering: amplitudes in descending magnitude,
/// discharge before charge, each pulse followed by its rest.
std::vector<PulseSpec> pulse_sequence(const HppcBlock& block);

/// Dwell time to move the rated-capacity Coulomb estimate from soc_from to
/// soc_target at constant current (uses the rated, not the true, capacity).
double reach_soc(double soc_from, double soc_target, double rated_ah, double current_a);

/// The built-in full testing profile at one chamber setpoint: CC-CV charge,
/// capacity discharge, recharge, three-level HPPC, final discharge and
/// restoring CC-CV, with the paper's exit conditions and balancing gates.
TestPlan standard_plan(double setpoint_temp_c);

/// Shorter profile for demos and smoke runs: CC-CV, rest, capacity
/// discharge, rest (no HPPC).
TestPlan capacity_only_plan(double setpoint_temp_c);

struct RunConfig {
    double dt_s = 0.1;
    std::uint64_t seed = 0;
    int module_id = 0;
};

struct RunAbort {
    std::string reason;
    int cell_index = -1;  // 0-based, when a specific Cell triggered the abort
    double time_s = 0.0;
};

struct RunResult {
    io::TestLog log;
    std::optional<RunAbort> abort;
    sim::ModuleState final_state;
};

/// Execute a plan against the simulated module + measurement chain. Exit
/// conditions are evaluated on what the cycler sees: delayed/quantized Cell
/// voltages over CAN, direct module voltage and current. Safety aborts
/// (thermocouple > cutoff, SOC saturation) return a flagged log instead of
/// throwing.
RunResult run_plan(const TestPlan& plan, const sim::ModuleConfig& module_cfg,
                   const mbh::MbhConfig& mbh_cfg, const mbh::BalancerConfig& balancer,
                   const RunConfig& run_cfg, const std::array<double, 3>& initial_soc);

}  // namespace cellscreen::protocol
