/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cellscreen::protocol {

namespace {

constexpr const char* kPulseOrdering = "descending-magnitude,discharge-first";

std::string fmt(const char* format, double value)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, format, value);
    return buf;
}

const char* kind_name(SegmentKind kind)
{
    switch (kind) {
        case SegmentKind::ConstantCurrent: return "cc";
        case SegmentKind::ConstantVoltage: return "cv";
        case SegmentKind::Rest: return "rest";
        case SegmentKind::Pulse: return "pulse";
    }
    return "?";
}

void validate_plan(const TestPlan& plan)
{
    if (plan.segments.empty())
        throw std::invalid_argument("plan has no segments");
    if (plan.rated_capacity_ah <= 0.0)
        throw std::invalid_argument("rated capacity must be positive");
    for (std::size_t i = 0; i < plan.segments.size(); ++i) {
        const Segment& seg = plan.segments[i];
        const std::string where = "segment " + std::to_string(i) + " (" + seg.label + "): ";
        switch (seg.kind) {
            case SegmentKind::ConstantCurrent:
            case SegmentKind::Pulse:
                if (seg.current_a == 0.0)
                    throw std::invalid_argument(where + "zero current");
                break;
            case SegmentKind::ConstantVoltage:
                if (seg.voltage_v < 9.0 || seg.voltage_v > 13.0)
                    throw std::invalid_argument(where + "CV level outside [9, 13] V");
                break;
            case SegmentKind::Rest:
                if (seg.exit.kind != ExitKind::Elapsed)
                    throw std::invalid_argument(where + "rest segments exit on elapsed time");
                break;
        }
        switch (seg.exit.kind) {
            case ExitKind::MinCellVoltageReaches:
                if (seg.exit.threshold < 3.0 || seg.exit.threshold > 4.3)
                    throw std::invalid_argument(where + "cell threshold outside [3.0, 4.3] V");
                break;
            case ExitKind::ModuleVoltageReaches:
                if (seg.exit.threshold < 9.0 || seg.exit.threshold > 13.0)
                    throw std::invalid_argument(where + "module threshold outside [9, 13] V");
                break;
            case ExitKind::CurrentBelow:
                if (seg.exit.threshold <= 0.0)
                    throw std::invalid_argument(where + "current threshold must be positive");
                break;
            case ExitKind::Elapsed:
                if (seg.exit.threshold <= 0.0)
                    throw std::invalid_argument(where + "duration must be positive");
                break;
            case ExitKind::SocReached:
                if (seg.exit.threshold <= 0.0 || seg.exit.threshold >= 1.0)
                    throw std::invalid_argument(where + "soc target outside (0, 1)");
                break;
        }
    }
    if (plan.capacity_segment_id >= static_cast<int>(plan.segments.size()))
        throw std::invalid_argument("capacity segment id out of range");
}

std::string sanitize_label(std::string label)
{
    for (char& c : label)
        if (c == ':' || c == ',' || c == '\n')
            c = ' ';
    return label;
}

}  // namespace

std::vector<PulseSpec> pulse_sequence(const HppcBlock& block)
{
    std::array<double, 4> amps = block.pulse_amps_a;
    std::sort(amps.begin(), amps.end(), [](double a, double b) {
        return std::abs(a) > std::abs(b);
    });
    std::vector<PulseSpec> out;
    out.reserve(2 * amps.size());
    for (double amp : amps) {
        out.push_back({-std::abs(amp), block.pulse_s, block.rest_s});
        out.push_back({+std::abs(amp), block.pulse_s, block.rest_s});
    }
    return out;
}

double reach_soc(double soc_from, double soc_target, double rated_ah, double current_a)
{
    if (rated_ah <= 0.0)
        throw std::invalid_argument("rated capacity must be positive");
    if (soc_target > soc_from)
        throw std::invalid_argument("soc target above the current estimate");
    if (soc_target == soc_from)
        return 0.0;
    if (current_a == 0.0)
        throw std::invalid_argument("zero current cannot reach a different soc");
    return (soc_from - soc_target) * rated_ah * 3600.0 / std::abs(current_a);
}

namespace {

void append_cc_cv(TestPlan& plan, const std::string& tag)
{
    plan.segments.push_back({SegmentKind::ConstantCurrent, 244.8, 0.0,
                             {ExitKind::ModuleVoltageReaches, 12.6}, true, tag + "-cc-1c"});
    plan.segments.push_back({SegmentKind::ConstantVoltage, 0.0, 12.6,
                             {ExitKind::CurrentBelow, 0.5}, true, tag + "-cv-taper"});
    plan.segments.push_back({SegmentKind::Rest, 0.0, 0.0,
                             {ExitKind::Elapsed, 3600.0}, true, tag + "-rest"});
}

}  // namespace

TestPlan standard_plan(double setpoint_temp_c)
{
    TestPlan plan;
    plan.name = "fig3-standard";
    plan.setpoint_temp_c = setpoint_temp_c;

    append_cc_cv(plan, "charge");

    plan.capacity_segment_id = static_cast<int>(plan.segments.size());
    plan.segments.push_back({SegmentKind::ConstantCurrent, -81.6, 0.0,
                             {ExitKind::MinCellVoltageReaches, 3.3}, false, "capacity-c3"});
    plan.segments.push_back({SegmentKind::Rest, 0.0, 0.0,
                             {ExitKind::Elapsed, 3600.0}, false, "capacity-rest"});

    append_cc_cv(plan, "recharge");

    const HppcBlock block;
    plan.soc_levels.assign(block.soc_levels.begin(), block.soc_levels.end());
    for (double level : block.soc_levels) {
        const std::string soc_tag = "hppc soc=" + fmt("%.2f", level);
        plan.segments.push_back({SegmentKind::ConstantCurrent, -81.6, 0.0,
                                 {ExitKind::SocReached, level}, false, soc_tag + " leg"});
        plan.segments.push_back({SegmentKind::Rest, 0.0, 0.0,
                                 {ExitKind::Elapsed, 3600.0}, false, soc_tag + " rest"});
        for (const PulseSpec& pulse : pulse_sequence(block)) {
            const std::string amp_tag = soc_tag + " pulse=" + fmt("%.2f", pulse.current_a);
            plan.segments.push_back({SegmentKind::Pulse, pulse.current_a, 0.0,
                                     {ExitKind::Elapsed, pulse.duration_s}, false, amp_tag});
            plan.segments.push_back({SegmentKind::Rest, 0.0, 0.0,
                                     {ExitKind::Elapsed, pulse.rest_s}, false,
                                     amp_tag + " rest"});
        }
    }

    plan.segments.push_back({SegmentKind::ConstantCurrent, -81.6, 0.0,
                             {ExitKind::MinCellVoltageReaches, 3.3}, false, "final-discharge"});
    plan.segments.push_back({SegmentKind::Rest, 0.0, 0.0,
                             {ExitKind::Elapsed, 3600.0}, false, "final-discharge-rest"});

    append_cc_cv(plan, "restore");
    return plan;
}

TestPlan capacity_only_plan(double setpoint_temp_c)
{
    TestPlan plan;
    plan.name = "capacity-only";
    plan.setpoint_temp_c = setpoint_temp_c;
    append_cc_cv(plan, "charge");
    plan.capacity_segment_id = static_cast<int>(plan.segments.size());
    plan.segments.push_back({SegmentKind::ConstantCurrent, -81.6, 0.0,
                             {ExitKind::MinCellVoltageReaches, 3.3}, false, "capacity-c3"});
    plan.segments.push_back({SegmentKind::Rest, 0.0, 0.0,
                             {ExitKind::Elapsed, 3600.0}, false, "capacity-rest"});
    return plan;
}

RunResult run_plan(const TestPlan& plan, const sim::ModuleConfig& module_cfg,
                   const mbh::MbhConfig& mbh_cfg, const mbh::BalancerConfig& balancer,
                   const RunConfig& run_cfg, const std::array<double, 3>& initial_soc)
{
    validate_plan(plan);

    const double sample_period = mbh_cfg.adc.sample_period_s;
    if (run_cfg.dt_s <= 0.0 || sample_period <= 0.0)
        throw std::invalid_argument("dt and sample period must be positive");
    const int substeps = static_cast<int>(std::round(sample_period / run_cfg.dt_s));
    if (substeps < 1 || std::abs(substeps * run_cfg.dt_s - sample_period) > 1e-9)
        throw std::invalid_argument("sample period must be an integer multiple of dt");
    const double dt = sample_period / substeps;

    // The physical bleed branch and the controller's R_b are one resistor.
    sim::ModuleConfig cfg = module_cfg;
    cfg.r_bleed_ohm = balancer.r_bleed_ohm;

    std::mt19937_64 rng(run_cfg.seed);
    sim::ModuleState state = sim::initial_state(cfg, initial_soc, rng);

    // Filter states settled at the scaled initial potentials: the board has
    // been powered well beyond 5*tau before the cycler starts.
    const auto p0 = sim::node_potentials(cfg, state);
    std::array<double, 3> filter_state{};
    for (int ch = 0; ch < 3; ++ch)
        filter_state[ch] = p0[ch] * mbh_cfg.divider.scale() * mbh_cfg.tolerance[ch].gain +
                           mbh_cfg.tolerance[ch].offset_v;

    mbh::DelayLine delay;
    {
        const auto m = mbh::measure(mbh_cfg, p0, filter_state, sample_period, &rng);
        filter_state = m.filter_state;
        delay.prime({-sample_period, mbh::reconstruct_cells(m.corrected_v), true});
    }

    RunResult result;
    io::TestLog& log = result.log;
    log.set_meta("schema_version", std::to_string(io::kSchemaVersion));
    log.set_meta("seed", std::to_string(run_cfg.seed));
    log.set_meta("plan_preset", plan.name);
    log.set_meta("pulse_ordering", kPulseOrdering);
    log.set_meta("module_id", std::to_string(run_cfg.module_id));
    log.set_meta("setpoint_c", plan.setpoint_temp_c);
    log.set_meta("safety_cutoff_c", plan.safety_cutoff_temp_c);
    log.set_meta("rated_capacity_ah", plan.rated_capacity_ah);
    log.set_meta("dt_s", dt);
    log.set_meta("sample_period_s", sample_period);
    log.set_meta("initial_soc", fmt("%.6f", initial_soc[0]) + "," + fmt("%.6f", initial_soc[1]) +
                                    "," + fmt("%.6f", initial_soc[2]));
    if (plan.capacity_segment_id >= 0)
        log.set_meta("capacity_segment_id", std::to_string(plan.capacity_segment_id));
    if (!plan.soc_levels.empty()) {
        std::string levels;
        for (std::size_t i = 0; i < plan.soc_levels.size(); ++i)
            levels += (i ? "," : "") + fmt("%.6f", plan.soc_levels[i]);
        log.set_meta("soc_levels", levels);
    }
    for (std::size_t i = 0; i < plan.segments.size(); ++i)
        log.segments.push_back({static_cast<int>(i), kind_name(plan.segments[i].kind),
                                sanitize_label(plan.segments[i].label)});

    const auto n_segments = static_cast<int>(plan.segments.size());
    int seg_idx = 0;
    double seg_start = 0.0;
    double soc_estimate = plan.initial_soc_estimate;
    std::array<bool, 3> switches{false, false, false};
    std::uint64_t sample = 0;

    auto abort_run = [&](std::string reason, int cell, double t) {
        result.abort = RunAbort{std::move(reason), cell, t};
        log.set_meta("aborted", "1");
        log.set_meta("abort_reason", result.abort->reason);
    };

    while (seg_idx < n_segments && !result.abort) {
        const double now = static_cast<double>(sample) * sample_period;

        const mbh::MeasuredFrame delivered = delay.peek();

        const double t_max = std::max({state.t_sensors_c[0], state.t_sensors_c[1],
                                       state.t_sensors_c[2]});
        if (t_max > plan.safety_cutoff_temp_c) {
            abort_run("thermocouple " + fmt("%.2f", t_max) + " degC above cutoff", -1, now);
            break;
        }

        {
            const Segment& seg = plan.segments[seg_idx];
            const double elapsed = now - seg_start;
            bool done = false;
            switch (seg.exit.kind) {
                case ExitKind::MinCellVoltageReaches:
                    done = delivered.valid &&
                           std::min({delivered.v_cells_v[0], delivered.v_cells_v[1],
                                     delivered.v_cells_v[2]}) <= seg.exit.threshold;
                    break;
                case ExitKind::ModuleVoltageReaches:
                    done = seg.current_a >= 0.0 ? state.v_module_v >= seg.exit.threshold
                                                : state.v_module_v <= seg.exit.threshold;
                    break;
                case ExitKind::CurrentBelow:
                    done = elapsed > 0.0 && std::abs(state.i_module_a) <= seg.exit.threshold;
                    break;
                case ExitKind::Elapsed:
                    done = elapsed >= seg.exit.threshold - 1e-9;
                    break;
                case ExitKind::SocReached:
                    done = soc_estimate <= seg.exit.threshold;
                    break;
            }
            if (done) {
                if (seg.kind == SegmentKind::ConstantVoltage)
                    soc_estimate = 1.0;  // taper complete marks the rated-full reference
                ++seg_idx;
                seg_start = now;
                if (seg_idx == n_segments)
                    break;
            }
        }

        const Segment& seg = plan.segments[seg_idx];
        const bool balancing_active = seg.balancing && balancer.enabled;
        if (balancing_active) {
            if (balancer.decimation <= 1 || sample % static_cast<std::uint64_t>(balancer.decimation) == 0)
                switches = mbh::balance_decide(balancer, delivered.v_cells_v);
        } else {
            switches = {false, false, false};
        }

        double i_cmd = 0.0;
        switch (seg.kind) {
            case SegmentKind::ConstantCurrent:
            case SegmentKind::Pulse:
                i_cmd = seg.current_a;
                break;
            case SegmentKind::ConstantVoltage:
                i_cmd = sim::solve_cv_current(cfg, state, seg.voltage_v, switches);
                break;
            case SegmentKind::Rest:
                i_cmd = 0.0;
                break;
        }

        state = sim::apply_current(cfg, state, i_cmd, switches);
        {
            const auto m = mbh::measure(mbh_cfg, sim::node_potentials(cfg, state), filter_state,
                                        sample_period, &rng);
            filter_state = m.filter_state;
            delay.push({now, mbh::reconstruct_cells(m.corrected_v), true});
        }

        io::LogRecord rec;
        rec.time_s = now;
        rec.segment_id = seg_idx;
        rec.i_module_a = i_cmd;
        rec.v_module_v = state.v_module_v;
        rec.v1_v = delivered.v_cells_v[0];
        rec.v2_v = delivered.v_cells_v[1];
        rec.v3_v = delivered.v_cells_v[2];
        rec.s1 = switches[0] ? 1 : 0;
        rec.s2 = switches[1] ? 1 : 0;
        rec.s3 = switches[2] ? 1 : 0;
        rec.t_tc1_c = state.t_sensors_c[0];
        rec.t_tc2_c = state.t_sensors_c[1];
        rec.t_tc3_c = state.t_sensors_c[2];
        rec.balancing_enabled = balancing_active ? 1 : 0;
        log.records.push_back(rec);

        try {
            for (int n = 0; n < substeps; ++n) {
                double i_step = i_cmd;
                if (seg.kind == SegmentKind::ConstantVoltage && n > 0)
                    i_step = sim::solve_cv_current(cfg, state, seg.voltage_v, switches);
                state = sim::step(cfg, state, i_step, switches, dt, rng);
            }
        } catch (const sim::SocSaturationError& err) {
            abort_run(err.what(), err.cell_index, err.time_s);
            break;
        }

        soc_estimate += i_cmd * sample_period / (3600.0 * plan.rated_capacity_ah);
        soc_estimate = std::clamp(soc_estimate, 0.0, 1.5);
        ++sample;
    }

    result.final_state = state;
    return result;
}

}  // namespace cellscreen::protocol
