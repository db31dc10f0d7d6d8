/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "cellscreen/log_io.hpp"

namespace cellscreen::diag {

/// Largest voltage interval traversed by every Cell of every module during
/// the C/3 capacity discharge; the common basis for capacity and energy.
struct VoltageWindow {
    double v_lower_v = 0.0;
    double v_upper_v = 0.0;
};

/// Incremental min-of-maxes / max-of-mins over capacity-segment traces.
class WindowAccumulator {
public:
    /// Folds in the three Cell traces of one log's capacity segment.
    void add(const io::TestLog& log);

    /// Folds in one raw trace (for synthetic data and tests).
    void add_trace(const std::vector<double>& v);

    bool empty() const { return count_ == 0; }
    VoltageWindow window() const;

private:
    double upper_ = 0.0;
    double lower_ = 0.0;
    std::size_t count_ = 0;
};

VoltageWindow voltage_window(const std::vector<io::TestLog>& logs);

/// Coulomb count (Ah) between the trace's first crossings of the window
/// bounds, trapezoidal with linear crossing interpolation. `cell` is 0-based.
double discharge_capacity(const io::TestLog& log, int cell, const VoltageWindow& window);

/// Same integration bounds over |v_j * I_m|, in Wh.
double discharge_energy(const io::TestLog& log, int cell, const VoltageWindow& window);

struct ModuleMetrics {
    double q_module_ah = 0.0;
    double e_module_wh = 0.0;
    int weakest_index = 0;  // 0-based position of the lowest-capacity Cell
    bool weakest_tie = false;
};

ModuleMetrics module_rollup(const std::array<double, 3>& q_ah, const std::array<double, 3>& e_wh);

struct PulseResistance {
    double r_mohm = 0.0;
    double mean_temp_c = 0.0;  // module temperature averaged over the pulse samples
    int pulse_count = 0;
};

struct PulseDetectorConfig {
    double max_pre_pulse_a = 0.6;   // just above the CV taper current
    double min_pulse_a = 1.0;
    double max_pulse_s = 30.0;      // anything longer is a protocol leg, not a pulse
    int min_pulse_samples = 5;
    int latency_samples = 1;        // CAN delay between current edge and voltage drop
    double max_block_gap_s = 600.0; // pulses closer than this belong to one SOC level
};

/// Eq.-style averaged pulse resistance for one Cell at one (SOC level,
/// setpoint) point. Pulse onsets are detected from the current trace; the
/// per-pulse drop is the first reported voltage sample after the drop minus
/// the last sample before it, one latency sample past the current edge.
PulseResistance pulse_resistance(const io::TestLog& log, int cell, double soc_level,
                                 double temp_setpoint_c,
                                 const PulseDetectorConfig& det = {});

struct RtPoint {
    double temp_c = 0.0;  // measured module temperature
    double soc = 0.0;     // SOC level the pulses ran at
    double r_mohm = 0.0;
};

struct RtFitRow {
    double soc_level = 0.0;
    double a1 = 0.0;  // ohm*degC
    double a2 = 0.0;  // degC
    double a3 = 0.0;  // ohm
    double rmse_mohm = 0.0;
    int point_count = 0;

    double eval_mohm(double temp_c) const;
    bool decreasing_on(double t_lo_c, double t_hi_c) const;
};

struct RtFit {
    std::vector<RtFitRow> rows;  // one per SOC level, descending SOC
};

/// Per-SOC-level damped least squares of r = a1/(T - a2) + a3. Needs at
/// least three distinct temperatures per level. Initialization: a2 = min(T)
/// - 25, a1 from a two-point solve, a3 = 0; restarts with shifted a2 when
/// the pole lands near the data.
RtFit fit_rt(const std::vector<RtPoint>& points);

struct PositionStats {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation (n-1)
    double min = 0.0;
    double max = 0.0;
    int n = 0;
};

PositionStats position_stats(const std::vector<double>& values);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Everything analyze extracts from one module's logs.
struct ModuleSummary {
    int module_id = 0;
    std::array<double, 3> q_ah{};
    std::array<double, 3> e_wh{};
    ModuleMetrics rollup;
    // (temp setpoint, soc level) -> per-Cell resistance and the measured mean
    // module temperature over that pulse block.
    std::map<std::pair<double, double>, std::array<double, 3>> r_mohm;
    std::map<std::pair<double, double>, double> pulse_temp_c;
};

/// Runs capacity/energy on the capacity-test log (setpoint 25 degC by
/// convention) and pulse resistance on every HPPC level of every log.
ModuleSummary analyze_module(const std::vector<io::TestLog>& logs, const VoltageWindow& window,
                             double capacity_temp_c = 25.0);

struct PackReport {
    int module_count = 0;
    std::array<PositionStats, 3> q_by_position;
    PositionStats q_module;
    std::array<PositionStats, 3> e_by_position;
    PositionStats e_module;
    std::array<int, 3> weakest_counts{};
    std::array<int, 3> weakest_cumulative{};
    bool any_tie = false;
    double pearson_qe = 0.0;
    // setpoint -> per-position stats pooled across SOC levels
    std::map<double, std::array<PositionStats, 3>> r_by_temp;
};

PackReport pack_stats(const std::vector<ModuleSummary>& modules);

/// Human-readable tables (capacity, energy, resistance, weakest histogram).
std::string render_pack_report(const PackReport& report);

}  // namespace cellscreen::diag
