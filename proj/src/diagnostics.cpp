/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace cellscreen::diag {

namespace {

std::vector<const io::LogRecord*> capacity_records(const io::TestLog& log)
{
    const int seg_id = static_cast<int>(log.meta_double("capacity_segment_id"));
    std::vector<const io::LogRecord*> out;
    for (const auto& rec : log.records)
        if (rec.segment_id == seg_id)
            out.push_back(&rec);
    if (out.empty())
        throw std::runtime_error("log has no records in capacity segment " +
                                 std::to_string(seg_id));
    return out;
}

struct Crossing {
    std::size_t index;  // crossing lies in [t[index], t[index+1]]
    double time_s;
};

// First downward crossing of `bound`, linearly interpolated. `from` lets the
// lower-bound search start after the upper-bound crossing.
Crossing first_downward_crossing(const std::vector<const io::LogRecord*>& recs, int cell,
                                 double bound, std::size_t from, const char* bound_name)
{
    for (std::size_t i = from; i + 1 < recs.size(); ++i) {
        const double v0 = recs[i]->cell_v(cell);
        const double v1 = recs[i + 1]->cell_v(cell);
        if (v0 >= bound && v1 < bound) {
            const double t0 = recs[i]->time_s;
            const double t1 = recs[i + 1]->time_s;
            const double frac = v0 == v1 ? 0.0 : (v0 - bound) / (v0 - v1);
            return {i, t0 + frac * (t1 - t0)};
        }
    }
    throw std::runtime_error("cell " + std::to_string(cell + 1) + " never crossed " +
                             bound_name + " = " + std::to_string(bound) + " V");
}

double lerp_at(const std::vector<const io::LogRecord*>& recs, std::size_t i, double t,
               double (*field)(const io::LogRecord&, int), int cell)
{
    const double t0 = recs[i]->time_s;
    const double t1 = recs[i + 1]->time_s;
    const double f0 = field(*recs[i], cell);
    const double f1 = field(*recs[i + 1], cell);
    if (t1 == t0)
        return f0;
    return f0 + (f1 - f0) * (t - t0) / (t1 - t0);
}

double integrate_between(const std::vector<const io::LogRecord*>& recs, int cell,
                         const Crossing& start, const Crossing& end,
                         double (*field)(const io::LogRecord&, int))
{
    const double f_start = lerp_at(recs, start.index, start.time_s, field, cell);
    const double f_end = lerp_at(recs, end.index, end.time_s, field, cell);
    if (start.index == end.index)
        return 0.5 * (f_start + f_end) * (end.time_s - start.time_s);

    double sum = 0.5 * (f_start + field(*recs[start.index + 1], cell)) *
                 (recs[start.index + 1]->time_s - start.time_s);
    for (std::size_t i = start.index + 1; i < end.index; ++i)
        sum += 0.5 * (field(*recs[i], cell) + field(*recs[i + 1], cell)) *
               (recs[i + 1]->time_s - recs[i]->time_s);
    sum += 0.5 * (field(*recs[end.index], cell) + f_end) *
           (end.time_s - recs[end.index]->time_s);
    return sum;
}

double abs_current(const io::LogRecord& r, int)
{
    return std::abs(r.i_module_a);
}

double abs_power(const io::LogRecord& r, int cell)
{
    return std::abs(r.cell_v(cell) * r.i_module_a);
}

double integrate_window(const io::TestLog& log, int cell, const VoltageWindow& win,
                        double (*field)(const io::LogRecord&, int))
{
    if (cell < 0 || cell > 2)
        throw std::invalid_argument("cell index must be 0..2");
    if (!(win.v_lower_v < win.v_upper_v))
        throw std::invalid_argument("voltage window is empty");
    const auto recs = capacity_records(log);
    const auto start = first_downward_crossing(recs, cell, win.v_upper_v, 0, "v_upper");
    const auto end = first_downward_crossing(recs, cell, win.v_lower_v, start.index, "v_lower");
    return integrate_between(recs, cell, start, end, field) / 3600.0;
}

}  // namespace

void WindowAccumulator::add_trace(const std::vector<double>& v)
{
    if (v.empty())
        throw std::invalid_argument("empty voltage trace");
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    if (count_ == 0) {
        upper_ = *mx;
        lower_ = *mn;
    } else {
        upper_ = std::min(upper_, *mx);
        lower_ = std::max(lower_, *mn);
    }
    ++count_;
}

void WindowAccumulator::add(const io::TestLog& log)
{
    const auto recs = capacity_records(log);
    for (int cell = 0; cell < 3; ++cell) {
        std::vector<double> trace;
        trace.reserve(recs.size());
        for (const auto* rec : recs)
            trace.push_back(rec->cell_v(cell));
        add_trace(trace);
    }
}

VoltageWindow WindowAccumulator::window() const
{
    if (count_ == 0)
        throw std::runtime_error("no traces accumulated");
    return {lower_, upper_};
}

VoltageWindow voltage_window(const std::vector<io::TestLog>& logs)
{
    if (logs.empty())
        throw std::invalid_argument("no logs given");
    WindowAccumulator acc;
    for (const auto& log : logs)
        acc.add(log);
    return acc.window();
}

double discharge_capacity(const io::TestLog& log, int cell, const VoltageWindow& window)
{
    return integrate_window(log, cell, window, abs_current);
}

double discharge_energy(const io::TestLog& log, int cell, const VoltageWindow& window)
{
    return integrate_window(log, cell, window, abs_power);
}

ModuleMetrics module_rollup(const std::array<double, 3>& q_ah, const std::array<double, 3>& e_wh)
{
    ModuleMetrics m;
    m.q_module_ah = std::min({q_ah[0], q_ah[1], q_ah[2]});
    m.e_module_wh = e_wh[0] + e_wh[1] + e_wh[2];
    m.weakest_index = 0;
    for (int j = 1; j < 3; ++j)
        if (q_ah[j] < q_ah[m.weakest_index])
            m.weakest_index = j;
    for (int j = 0; j < 3; ++j)
        if (j != m.weakest_index && q_ah[j] == q_ah[m.weakest_index])
            m.weakest_tie = true;
    return m;
}

namespace {

struct DetectedPulse {
    std::size_t onset;   // first record index with pulse current flowing
    std::size_t last;    // last record index with pulse current flowing
    double current_a;
};

std::vector<DetectedPulse> detect_pulses(const io::TestLog& log, const PulseDetectorConfig& det)
{
    const auto& recs = log.records;
    std::vector<DetectedPulse> pulses;
    const double ts = log.meta_double("sample_period_s");
    const auto max_samples = static_cast<std::size_t>(det.max_pulse_s / ts);

    std::size_t k = 1;
    while (k < recs.size()) {
        const bool edge = std::abs(recs[k - 1].i_module_a) <= det.max_pre_pulse_a &&
                          std::abs(recs[k].i_module_a) >= det.min_pulse_a;
        if (!edge) {
            ++k;
            continue;
        }
        const double amp = recs[k].i_module_a;
        std::size_t j = k;
        bool constant = true;
        while (j < recs.size() && std::abs(recs[j].i_module_a) > det.max_pre_pulse_a) {
            if (std::abs(recs[j].i_module_a - amp) > 0.05 * std::abs(amp))
                constant = false;
            ++j;
        }
        const std::size_t len = j - k;
        if (constant && len >= static_cast<std::size_t>(det.min_pulse_samples) &&
            len <= max_samples)
            pulses.push_back({k, j - 1, amp});
        k = j + 1;
    }
    return pulses;
}

}  // namespace

PulseResistance pulse_resistance(const io::TestLog& log, int cell, double soc_level,
                                 double temp_setpoint_c, const PulseDetectorConfig& det)
{
    if (cell < 0 || cell > 2)
        throw std::invalid_argument("cell index must be 0..2");
    const double setpoint = log.meta_double("setpoint_c");
    if (std::abs(setpoint - temp_setpoint_c) > 0.5)
        throw std::runtime_error("log setpoint " + std::to_string(setpoint) +
                                 " degC does not match requested " +
                                 std::to_string(temp_setpoint_c));

    if (!log.has_meta("soc_levels"))
        throw std::runtime_error("log carries no soc_levels metadata (no HPPC block)");
    std::vector<double> levels;
    {
        const std::string& s = log.meta("soc_levels");
        std::size_t pos = 0;
        while (pos < s.size()) {
            std::size_t next = s.find(',', pos);
            if (next == std::string::npos)
                next = s.size();
            levels.push_back(std::stod(s.substr(pos, next - pos)));
            pos = next + 1;
        }
    }

    const auto pulses = detect_pulses(log, det);

    // Group consecutive pulses into per-SOC-level blocks.
    const double ts = log.meta_double("sample_period_s");
    std::vector<std::vector<DetectedPulse>> blocks;
    for (const auto& p : pulses) {
        if (blocks.empty() ||
            (p.onset - blocks.back().back().last) * ts > det.max_block_gap_s)
            blocks.emplace_back();
        blocks.back().push_back(p);
    }

    if (blocks.size() != levels.size())
        throw std::runtime_error("detected " + std::to_string(blocks.size()) +
                                 " pulse blocks but the log names " +
                                 std::to_string(levels.size()) + " SOC levels");

    std::size_t which = levels.size();
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - soc_level) < 1e-9)
            which = i;
    if (which == levels.size())
        throw std::runtime_error("soc level " + std::to_string(soc_level) +
                                 " not present in this log");

    const auto& block = blocks[which];
    if (block.size() != 8)
        throw std::runtime_error("fewer than 8 detected pulses at soc level " +
                                 std::to_string(soc_level) + ": " +
                                 std::to_string(block.size()));

    const auto& recs = log.records;
    double sum = 0.0;
    double temp_sum = 0.0;
    std::size_t temp_n = 0;
    for (const auto& p : block) {
        const std::size_t after = p.onset + static_cast<std::size_t>(det.latency_samples);
        if (after >= recs.size() || after == 0)
            throw std::runtime_error("pulse too close to the log boundary");
        const double dv = recs[after].cell_v(cell) - recs[after - 1].cell_v(cell);
        sum += std::abs(dv / p.current_a);
        for (std::size_t i = p.onset; i <= p.last; ++i) {
            temp_sum += (recs[i].t_tc1_c + recs[i].t_tc2_c + recs[i].t_tc3_c) / 3.0;
            ++temp_n;
        }
    }

    PulseResistance out;
    out.pulse_count = static_cast<int>(block.size());
    out.r_mohm = 1000.0 / static_cast<double>(block.size()) * sum;
    out.mean_temp_c = temp_sum / static_cast<double>(temp_n);
    return out;
}

double RtFitRow::eval_mohm(double temp_c) const
{
    return (a1 / (temp_c - a2) + a3) * 1000.0;
}

bool RtFitRow::decreasing_on(double t_lo_c, double t_hi_c) const
{
    // dr/dT = -a1/(T-a2)^2 < 0 needs a1 > 0 and the pole outside the range.
    return a1 > 0.0 && (a2 < t_lo_c || a2 > t_hi_c);
}

PositionStats position_stats(const std::vector<double>& values)
{
    if (values.empty())
        throw std::invalid_argument("no values");
    PositionStats s;
    s.n = static_cast<int>(values.size());
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values)
        sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("pearson needs equal-length series");
    if (x.size() < 2)
        return 0.0;
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

ModuleSummary analyze_module(const std::vector<io::TestLog>& logs, const VoltageWindow& window,
                             double capacity_temp_c)
{
    if (logs.empty())
        throw std::invalid_argument("no logs for module");

    ModuleSummary summary;
    summary.module_id = static_cast<int>(logs.front().meta_double("module_id"));

    const io::TestLog* capacity_log = nullptr;
    for (const auto& log : logs) {
        if (static_cast<int>(log.meta_double("module_id")) != summary.module_id)
            throw std::invalid_argument("logs from different modules");
        if (log.has_meta("capacity_segment_id") &&
            std::abs(log.meta_double("setpoint_c") - capacity_temp_c) < 0.5)
            capacity_log = &log;
    }
    if (capacity_log == nullptr)
        throw std::runtime_error("no capacity-test log at " + std::to_string(capacity_temp_c) +
                                 " degC for module " + std::to_string(summary.module_id));

    for (int cell = 0; cell < 3; ++cell) {
        summary.q_ah[cell] = discharge_capacity(*capacity_log, cell, window);
        summary.e_wh[cell] = discharge_energy(*capacity_log, cell, window);
    }
    summary.rollup = module_rollup(summary.q_ah, summary.e_wh);

    for (const auto& log : logs) {
        if (!log.has_meta("soc_levels"))
            continue;
        const double setpoint = log.meta_double("setpoint_c");
        std::vector<double> levels;
        const std::string& s = log.meta("soc_levels");
        std::size_t pos = 0;
        while (pos < s.size()) {
            std::size_t next = s.find(',', pos);
            if (next == std::string::npos)
                next = s.size();
            levels.push_back(std::stod(s.substr(pos, next - pos)));
            pos = next + 1;
        }
        for (double level : levels) {
            std::array<double, 3> r{};
            double temp = 0.0;
            for (int cell = 0; cell < 3; ++cell) {
                const auto pr = pulse_resistance(log, cell, level, setpoint);
                r[cell] = pr.r_mohm;
                temp = pr.mean_temp_c;
            }
            summary.r_mohm[{setpoint, level}] = r;
            summary.pulse_temp_c[{setpoint, level}] = temp;
        }
    }
    return summary;
}

PackReport pack_stats(const std::vector<ModuleSummary>& modules)
{
    if (modules.empty())
        throw std::invalid_argument("no module summaries");

    PackReport report;
    report.module_count = static_cast<int>(modules.size());

    std::vector<double> qm, em;
    for (int pos = 0; pos < 3; ++pos) {
        std::vector<double> q, e;
        for (const auto& m : modules) {
            q.push_back(m.q_ah[pos]);
            e.push_back(m.e_wh[pos]);
        }
        report.q_by_position[pos] = position_stats(q);
        report.e_by_position[pos] = position_stats(e);
    }
    for (const auto& m : modules) {
        qm.push_back(m.rollup.q_module_ah);
        em.push_back(m.rollup.e_module_wh);
        report.weakest_counts[m.rollup.weakest_index] += 1;
        report.any_tie = report.any_tie || m.rollup.weakest_tie;
    }
    report.q_module = position_stats(qm);
    report.e_module = position_stats(em);
    report.pearson_qe = pearson(qm, em);

    int cumulative = 0;
    for (int pos = 0; pos < 3; ++pos) {
        cumulative += report.weakest_counts[pos];
        report.weakest_cumulative[pos] = cumulative;
    }

    // Resistance pooled across SOC levels, grouped by setpoint.
    std::map<double, std::array<std::vector<double>, 3>> pooled;
    for (const auto& m : modules)
        for (const auto& [key, r] : m.r_mohm)
            for (int pos = 0; pos < 3; ++pos)
                pooled[key.first][pos].push_back(r[pos]);
    for (const auto& [temp, per_pos] : pooled) {
        std::array<PositionStats, 3> stats;
        for (int pos = 0; pos < 3; ++pos)
            stats[pos] = position_stats(per_pos[pos]);
        report.r_by_temp[temp] = stats;
    }
    return report;
}

std::string render_pack_report(const PackReport& report)
{
    std::string out;
    char buf[256];
    auto row = [&](const char* name, const PositionStats& s, const char* unit) {
        std::snprintf(buf, sizeof buf, "  %-14s %10.2f %8.2f %10.2f %10.2f  [%s]\n", name,
                      s.mean, s.sd, s.min, s.max, unit);
        out += buf;
    };

    out += "C/3 discharge capacity (mean / std / min / max)\n";
    for (int pos = 0; pos < 3; ++pos) {
        std::snprintf(buf, sizeof buf, "Cell %d", pos + 1);
        row(buf, report.q_by_position[pos], "Ah");
    }
    row("module-level", report.q_module, "Ah");

    out += "C/3 discharge energy (mean / std / min / max)\n";
    for (int pos = 0; pos < 3; ++pos) {
        std::snprintf(buf, sizeof buf, "Cell %d", pos + 1);
        row(buf, report.e_by_position[pos], "Wh");
    }
    row("module-level", report.e_module, "Wh");

    if (!report.r_by_temp.empty()) {
        out += "Internal resistance by setpoint (mean / std / min / max)\n";
        for (const auto& [temp, stats] : report.r_by_temp) {
            std::snprintf(buf, sizeof buf, " @%.0f degC\n", temp);
            out += buf;
            for (int pos = 0; pos < 3; ++pos) {
                std::snprintf(buf, sizeof buf, "  Cell %d        %10.4f %8.4f %10.4f %10.4f  [mOhm]\n",
                              pos + 1, stats[pos].mean, stats[pos].sd, stats[pos].min,
                              stats[pos].max);
                out += buf;
            }
        }
    }

    out += "Weakest-Cell histogram (count / cumulative)\n";
    for (int pos = 0; pos < 3; ++pos) {
        std::snprintf(buf, sizeof buf, "  Cell %d         %10d %8d\n", pos + 1,
                      report.weakest_counts[pos], report.weakest_cumulative[pos]);
        out += buf;
    }
    if (report.any_tie)
        out += "  (ties broken toward the lowest position)\n";

    std::snprintf(buf, sizeof buf, "Pearson correlation of (Q_m, E_m): %.3f over %d modules\n",
                  report.pearson_qe, report.module_count);
    out += buf;
    return out;
}

}  // namespace cellscreen::diag
