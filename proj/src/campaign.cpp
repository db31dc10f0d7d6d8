/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace cellscreen::campaign {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b)
{
    auto mix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    return mix(mix(mix(master) ^ a) ^ (b + 0x517cc1b727220a95ULL));
}

namespace {

[[noreturn]] void config_error(const std::string& origin, const std::string& what)
{
    throw std::runtime_error(origin + ": " + what);
}

std::array<double, 3> triple_from(const json& j, const std::string& origin, const char* key)
{
    if (j.is_number())
        return {j.get<double>(), j.get<double>(), j.get<double>()};
    if (j.is_array() && j.size() == 3)
        return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    config_error(origin, std::string(key) + " must be a number or a 3-element array");
}

ParamTriple param_triple_from(const json& j, const std::string& origin, const char* key,
                              const ParamTriple& dflt)
{
    ParamTriple out = dflt;
    if (j.contains("mean"))
        out.mean = triple_from(j["mean"], origin, key);
    if (j.contains("sd"))
        out.sd = triple_from(j["sd"], origin, key);
    return out;
}

protocol::ExitKind exit_kind_from(const std::string& s, const std::string& origin)
{
    if (s == "min_cell_voltage")
        return protocol::ExitKind::MinCellVoltageReaches;
    if (s == "module_voltage")
        return protocol::ExitKind::ModuleVoltageReaches;
    if (s == "current_below")
        return protocol::ExitKind::CurrentBelow;
    if (s == "elapsed")
        return protocol::ExitKind::Elapsed;
    if (s == "soc_reached")
        return protocol::ExitKind::SocReached;
    config_error(origin, "unknown exit kind '" + s + "'");
}

protocol::SegmentKind segment_kind_from(const std::string& s, const std::string& origin)
{
    if (s == "cc")
        return protocol::SegmentKind::ConstantCurrent;
    if (s == "cv")
        return protocol::SegmentKind::ConstantVoltage;
    if (s == "rest")
        return protocol::SegmentKind::Rest;
    if (s == "pulse")
        return protocol::SegmentKind::Pulse;
    config_error(origin, "unknown segment kind '" + s + "'");
}

protocol::TestPlan plan_from_json(const json& j, const std::string& origin)
{
    protocol::TestPlan plan;
    plan.name = j.value("name", std::string("custom"));
    plan.rated_capacity_ah = j.value("rated_capacity_ah", plan.rated_capacity_ah);
    plan.safety_cutoff_temp_c = j.value("safety_cutoff_c", plan.safety_cutoff_temp_c);
    plan.initial_soc_estimate = j.value("initial_soc_estimate", plan.initial_soc_estimate);
    plan.capacity_segment_id = j.value("capacity_segment_id", -1);
    if (j.contains("soc_levels"))
        plan.soc_levels = j["soc_levels"].get<std::vector<double>>();
    if (!j.contains("segments") || !j["segments"].is_array())
        config_error(origin, "custom plan needs a 'segments' array");
    for (const auto& js : j["segments"]) {
        protocol::Segment seg;
        seg.kind = segment_kind_from(js.value("kind", std::string()), origin);
        seg.current_a = js.value("current_a", 0.0);
        seg.voltage_v = js.value("voltage_v", 0.0);
        seg.balancing = js.value("balancing", false);
        seg.label = js.value("label", std::string());
        if (!js.contains("exit"))
            config_error(origin, "segment '" + seg.label + "' needs an exit condition");
        seg.exit.kind = exit_kind_from(js["exit"].value("kind", std::string()), origin);
        seg.exit.threshold = js["exit"].value("threshold", 0.0);
        plan.segments.push_back(std::move(seg));
    }
    return plan;
}

std::size_t line_of_byte(const std::string& text, std::size_t byte)
{
    return 1 + static_cast<std::size_t>(
                   std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

}  // namespace

CampaignConfig parse_campaign_config(const std::string& text, const std::string& origin)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& err) {
        config_error(origin, "line " + std::to_string(line_of_byte(text, err.byte)) + ": " +
                                 err.what());
    }

    CampaignConfig cfg;
    try {
        cfg.modules = j.value("modules", cfg.modules);
        if (cfg.modules < 1)
            config_error(origin, "modules must be >= 1");
        cfg.seed = j.value("seed", cfg.seed);
        cfg.dt_s = j.value("dt_s", cfg.dt_s);
        if (j.contains("temperatures_c"))
            cfg.temperatures_c = j["temperatures_c"].get<std::vector<double>>();
        if (cfg.temperatures_c.empty())
            config_error(origin, "temperatures_c must not be empty");

        if (j.contains("plan")) {
            if (j["plan"].is_string())
                cfg.plan_preset = j["plan"].get<std::string>();
            else
                cfg.custom_plan = plan_from_json(j["plan"], origin);
        }

        if (j.contains("initial_soc")) {
            cfg.initial_soc_mean = j["initial_soc"].value("mean", cfg.initial_soc_mean);
            cfg.initial_soc_sd = j["initial_soc"].value("sd", cfg.initial_soc_sd);
        }

        if (j.contains("cells")) {
            const auto& jc = j["cells"];
            if (jc.contains("capacity_ah"))
                cfg.capacity_ah =
                    param_triple_from(jc["capacity_ah"], origin, "capacity_ah", cfg.capacity_ah);
            if (jc.contains("r0_scale"))
                cfg.r0_scale = param_triple_from(jc["r0_scale"], origin, "r0_scale", cfg.r0_scale);
            if (jc.contains("ocv_points")) {
                std::vector<ecm::OcvCurve::Point> pts;
                for (const auto& p : jc["ocv_points"])
                    pts.push_back({p[0].get<double>(), p[1].get<double>()});
                cfg.ocv = ecm::OcvCurve(std::move(pts));
            }
            if (jc.contains("r0_law")) {
                const auto& jl = jc["r0_law"];
                if (jl.is_object() && jl.contains("constant_mohm")) {
                    cfg.r0_law =
                        ecm::ResistanceLaw::constant(jl["constant_mohm"].get<double>() / 1000.0);
                } else if (jl.is_array()) {
                    std::vector<ecm::ResistanceLaw::Breakpoint> bps;
                    for (const auto& b : jl)
                        bps.push_back({b.at("soc").get<double>(),
                                       {b.at("a1").get<double>(), b.at("a2").get<double>(),
                                        b.at("a3").get<double>()}});
                    cfg.r0_law = ecm::ResistanceLaw(std::move(bps));
                } else {
                    config_error(origin, "r0_law must be a breakpoint array or {constant_mohm}");
                }
            }
        }

        if (j.contains("thermal")) {
            const auto& jt = j["thermal"];
            const std::string mode = jt.value("mode", std::string("prescribed"));
            if (mode == "prescribed")
                cfg.thermal.mode = sim::ThermalMode::Prescribed;
            else if (mode == "first-order")
                cfg.thermal.mode = sim::ThermalMode::FirstOrderLumped;
            else
                config_error(origin, "thermal mode must be 'prescribed' or 'first-order'");
            cfg.thermal.thermal_resistance_k_per_w =
                jt.value("r_th_k_per_w", cfg.thermal.thermal_resistance_k_per_w);
            cfg.thermal.thermal_capacitance_j_per_k =
                jt.value("c_th_j_per_k", cfg.thermal.thermal_capacitance_j_per_k);
            cfg.thermal.sensor_noise_sd_c =
                jt.value("sensor_noise_sd_c", cfg.thermal.sensor_noise_sd_c);
            if (jt.contains("sensor_offsets_c"))
                cfg.thermal.sensor_offsets_c =
                    triple_from(jt["sensor_offsets_c"], origin, "sensor_offsets_c");
            if (jt.contains("cell_temp_offsets_c"))
                cfg.thermal.cell_temp_offsets_c =
                    triple_from(jt["cell_temp_offsets_c"], origin, "cell_temp_offsets_c");
        }

        if (j.contains("mbh")) {
            const auto& jm = j["mbh"];
            cfg.balancer.v_th_v = jm.value("v_th_mv", cfg.balancer.v_th_v * 1000.0) / 1000.0;
            cfg.balancer.r_bleed_ohm = jm.value("r_bleed_ohm", cfg.balancer.r_bleed_ohm);
            cfg.balancer.enabled = jm.value("balancing_enabled", cfg.balancer.enabled);
            cfg.balancer.decimation = jm.value("decimation", cfg.balancer.decimation);
            cfg.mbh_cfg.adc_noise_sd_v = jm.value("adc_noise_sd_v", cfg.mbh_cfg.adc_noise_sd_v);
            if (jm.contains("divider")) {
                cfg.mbh_cfg.divider.r_high_ohm =
                    jm["divider"].value("r_high_ohm", cfg.mbh_cfg.divider.r_high_ohm);
                cfg.mbh_cfg.divider.r_low_ohm =
                    jm["divider"].value("r_low_ohm", cfg.mbh_cfg.divider.r_low_ohm);
            }
            if (jm.contains("correction")) {
                const auto& ja = jm["correction"];
                if (!ja.is_array() || ja.size() != 3)
                    config_error(origin, "correction must list 3 channels");
                for (int ch = 0; ch < 3; ++ch) {
                    cfg.mbh_cfg.correction.channel[ch].gain =
                        ja[ch].value("gain", cfg.mbh_cfg.correction.channel[ch].gain);
                    cfg.mbh_cfg.correction.channel[ch].bias_v =
                        ja[ch].value("bias_v", cfg.mbh_cfg.correction.channel[ch].bias_v);
                }
            }
            if (jm.contains("tolerance")) {
                const auto& ja = jm["tolerance"];
                if (!ja.is_array() || ja.size() != 3)
                    config_error(origin, "tolerance must list 3 channels");
                for (int ch = 0; ch < 3; ++ch) {
                    cfg.mbh_cfg.tolerance[ch].gain =
                        ja[ch].value("gain", cfg.mbh_cfg.tolerance[ch].gain);
                    cfg.mbh_cfg.tolerance[ch].offset_v =
                        ja[ch].value("offset_v", cfg.mbh_cfg.tolerance[ch].offset_v);
                }
            }
        }

        cfg.interconnect_r_ohm = j.value("interconnect_r_ohm", cfg.interconnect_r_ohm);
        cfg.soc_saturation_tol = j.value("saturation_tol", cfg.soc_saturation_tol);
    } catch (const json::exception& err) {
        config_error(origin, err.what());
    }
    return cfg;
}

CampaignConfig load_campaign_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_campaign_config(buf.str(), path.string());
}

ModuleDraw draw_module(const CampaignConfig& cfg, int module_id)
{
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(module_id), 0x70a7));
    std::normal_distribution<double> unit(0.0, 1.0);

    ModuleDraw draw;
    for (int pos = 0; pos < 3; ++pos) {
        ecm::CellParams params;
        params.ocv = cfg.ocv;
        const double q = cfg.capacity_ah.mean[pos] + cfg.capacity_ah.sd[pos] * unit(rng);
        params.capacity_ah = std::max(q, 1.0);
        const double scale =
            std::max(cfg.r0_scale.mean[pos] + cfg.r0_scale.sd[pos] * unit(rng), 0.05);
        params.r0_law = cfg.r0_law.scaled(scale);
        draw.cells[pos] = std::move(params);

        const double soc = cfg.initial_soc_mean + cfg.initial_soc_sd * unit(rng);
        draw.initial_soc[pos] = std::clamp(soc, 0.02, 0.98);
    }
    return draw;
}

protocol::TestPlan plan_for(const CampaignConfig& cfg, double setpoint_c)
{
    if (cfg.custom_plan) {
        protocol::TestPlan plan = *cfg.custom_plan;
        plan.setpoint_temp_c = setpoint_c;
        return plan;
    }
    if (cfg.plan_preset == "fig3-standard")
        return protocol::standard_plan(setpoint_c);
    if (cfg.plan_preset == "capacity-only")
        return protocol::capacity_only_plan(setpoint_c);
    throw std::runtime_error("unknown plan preset '" + cfg.plan_preset + "'");
}

sim::ModuleConfig module_config_for(const CampaignConfig& cfg, const ModuleDraw& draw,
                                    double setpoint_c)
{
    sim::ModuleConfig mc;
    mc.cells = draw.cells;
    mc.interconnect_r_ohm = cfg.interconnect_r_ohm;
    mc.r_bleed_ohm = cfg.balancer.r_bleed_ohm;
    mc.thermal = cfg.thermal;
    mc.thermal.setpoint_c = setpoint_c;
    mc.soc_saturation_tol = cfg.soc_saturation_tol;
    return mc;
}

std::string log_filename(int module_id, double setpoint_c)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "module%02d_t%02.0f.csv", module_id, setpoint_c);
    return buf;
}

CampaignOutcome run_campaign(const CampaignConfig& cfg, const std::filesystem::path& out_dir,
                             bool parallel)
{
    std::filesystem::create_directories(out_dir);

    struct Task {
        int module_id;
        double temp_c;
    };
    std::vector<Task> tasks;
    for (int m = 0; m < cfg.modules; ++m)
        for (double t : cfg.temperatures_c)
            tasks.push_back({m, t});

    auto run_one = [&](const Task& task) -> std::optional<std::string> {
        const ModuleDraw draw = draw_module(cfg, task.module_id);
        const protocol::TestPlan plan = plan_for(cfg, task.temp_c);
        const sim::ModuleConfig mc = module_config_for(cfg, draw, task.temp_c);

        protocol::RunConfig rc;
        rc.dt_s = cfg.dt_s;
        rc.module_id = task.module_id;
        rc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(task.module_id),
                              0x2000 + static_cast<std::uint64_t>(std::llround(task.temp_c)));

        auto result = protocol::run_plan(plan, mc, cfg.mbh_cfg, cfg.balancer, rc, draw.initial_soc);
        io::write_log(out_dir / log_filename(task.module_id, task.temp_c), result.log);
        if (result.abort)
            return log_filename(task.module_id, task.temp_c) + ": " + result.abort->reason;
        return std::nullopt;
    };

    CampaignOutcome outcome;
    outcome.runs = static_cast<int>(tasks.size());

    if (parallel && tasks.size() > 1) {
        const std::size_t workers =
            std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(),
                                                           tasks.size()));
        std::vector<std::optional<std::string>> results(tasks.size());
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
                    results[i] = run_one(tasks[i]);
            });
        }
        for (auto& th : pool)
            th.join();
        for (const auto& r : results)
            if (r) {
                outcome.messages.push_back(*r);
                ++outcome.aborted;
            }
    } else {
        for (const auto& task : tasks) {
            if (auto msg = run_one(task)) {
                outcome.messages.push_back(*msg);
                ++outcome.aborted;
            }
        }
    }
    return outcome;
}

namespace {

json summary_to_json(const diag::ModuleSummary& m)
{
    json jm;
    jm["module_id"] = m.module_id;
    jm["q_ah"] = m.q_ah;
    jm["e_wh"] = m.e_wh;
    jm["q_module_ah"] = m.rollup.q_module_ah;
    jm["e_module_wh"] = m.rollup.e_module_wh;
    jm["weakest_position"] = m.rollup.weakest_index + 1;
    jm["weakest_tie"] = m.rollup.weakest_tie;
    json jr = json::array();
    for (const auto& [key, r] : m.r_mohm) {
        json point;
        point["temp_setpoint_c"] = key.first;
        point["soc_level"] = key.second;
        point["r_mohm"] = r;
        point["mean_temp_c"] = m.pulse_temp_c.at(key);
        jr.push_back(std::move(point));
    }
    jm["resistance"] = std::move(jr);
    return jm;
}

diag::ModuleSummary summary_from_json(const json& jm)
{
    diag::ModuleSummary m;
    m.module_id = jm.at("module_id").get<int>();
    m.q_ah = jm.at("q_ah").get<std::array<double, 3>>();
    m.e_wh = jm.at("e_wh").get<std::array<double, 3>>();
    m.rollup.q_module_ah = jm.at("q_module_ah").get<double>();
    m.rollup.e_module_wh = jm.at("e_module_wh").get<double>();
    m.rollup.weakest_index = jm.at("weakest_position").get<int>() - 1;
    m.rollup.weakest_tie = jm.at("weakest_tie").get<bool>();
    for (const auto& point : jm.at("resistance")) {
        const std::pair<double, double> key{point.at("temp_setpoint_c").get<double>(),
                                            point.at("soc_level").get<double>()};
        m.r_mohm[key] = point.at("r_mohm").get<std::array<double, 3>>();
        m.pulse_temp_c[key] = point.at("mean_temp_c").get<double>();
    }
    return m;
}

}  // namespace

void save_metrics(const std::filesystem::path& path, const MetricsFile& metrics)
{
    json j;
    j["schema_version"] = io::kSchemaVersion;
    j["window"] = {{"v_lower_v", metrics.window.v_lower_v},
                   {"v_upper_v", metrics.window.v_upper_v}};
    json jm = json::array();
    for (const auto& m : metrics.modules)
        jm.push_back(summary_to_json(m));
    j["modules"] = std::move(jm);

    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

MetricsFile load_metrics(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open metrics file " + path.string());
    json j;
    try {
        in >> j;
        MetricsFile metrics;
        metrics.window.v_lower_v = j.at("window").at("v_lower_v").get<double>();
        metrics.window.v_upper_v = j.at("window").at("v_upper_v").get<double>();
        for (const auto& jm : j.at("modules"))
            metrics.modules.push_back(summary_from_json(jm));
        return metrics;
    } catch (const json::exception& err) {
        throw std::runtime_error(path.string() + ": " + err.what());
    }
}

void save_fit(const std::filesystem::path& path, const diag::RtFit& fit)
{
    json rows = json::array();
    for (const auto& row : fit.rows) {
        rows.push_back({{"soc_level", row.soc_level},
                        {"a1", row.a1},
                        {"a2", row.a2},
                        {"a3", row.a3},
                        {"rmse_mohm", row.rmse_mohm},
                        {"points", row.point_count},
                        {"r_25c_mohm", row.eval_mohm(25.0)}});
    }
    json j;
    j["fit"] = std::move(rows);
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

std::vector<diag::RtPoint> fit_points(const MetricsFile& metrics)
{
    std::vector<diag::RtPoint> points;
    for (const auto& m : metrics.modules) {
        for (const auto& [key, r] : m.r_mohm) {
            const double temp = m.pulse_temp_c.at(key);
            for (int pos = 0; pos < 3; ++pos)
                points.push_back({temp, key.second, r[pos]});
        }
    }
    return points;
}

void write_report_files(const MetricsFile& metrics, const diag::PackReport& report,
                        const std::filesystem::path& out_dir)
{
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream txt(out_dir / "report.txt");
        txt << diag::render_pack_report(report);
    }

    {
        json j;
        j["module_count"] = report.module_count;
        auto stats_json = [](const diag::PositionStats& s) {
            return json{{"mean", s.mean}, {"sd", s.sd}, {"min", s.min}, {"max", s.max},
                        {"n", s.n}};
        };
        for (int pos = 0; pos < 3; ++pos) {
            j["capacity"]["cell" + std::to_string(pos + 1)] =
                stats_json(report.q_by_position[pos]);
            j["energy"]["cell" + std::to_string(pos + 1)] = stats_json(report.e_by_position[pos]);
        }
        j["capacity"]["module"] = stats_json(report.q_module);
        j["energy"]["module"] = stats_json(report.e_module);
        j["weakest_counts"] = report.weakest_counts;
        j["weakest_cumulative"] = report.weakest_cumulative;
        j["weakest_tie_present"] = report.any_tie;
        j["pearson_qe"] = report.pearson_qe;
        for (const auto& [temp, stats] : report.r_by_temp) {
            json block;
            for (int pos = 0; pos < 3; ++pos)
                block["cell" + std::to_string(pos + 1)] = stats_json(stats[pos]);
            char key[32];
            std::snprintf(key, sizeof key, "%.0fC", temp);
            j["resistance"][key] = std::move(block);
        }
        std::ofstream out(out_dir / "report.json");
        out << j.dump(2) << '\n';
    }

    {
        std::ofstream out(out_dir / "cell_capacity_energy.csv");
        out << "module_id,position,q_ah,e_wh\n";
        char buf[128];
        for (const auto& m : metrics.modules)
            for (int pos = 0; pos < 3; ++pos) {
                std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f\n", m.module_id, pos + 1,
                              m.q_ah[pos], m.e_wh[pos]);
                out << buf;
            }
    }

    {
        std::ofstream out(out_dir / "module_capacity_energy.csv");
        out << "module_id,q_module_ah,e_module_wh\n";
        char buf[128];
        for (const auto& m : metrics.modules) {
            std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", m.module_id,
                          m.rollup.q_module_ah, m.rollup.e_module_wh);
            out << buf;
        }
    }

    {
        std::ofstream out(out_dir / "weakest_histogram.csv");
        out << "position,count,cumulative\n";
        for (int pos = 0; pos < 3; ++pos)
            out << pos + 1 << ',' << report.weakest_counts[pos] << ','
                << report.weakest_cumulative[pos] << '\n';
    }

    {
        std::ofstream out(out_dir / "resistance_vs_temperature.csv");
        out << "module_id,position,soc_level,temp_setpoint_c,mean_temp_c,r_mohm\n";
        char buf[160];
        for (const auto& m : metrics.modules)
            for (const auto& [key, r] : m.r_mohm)
                for (int pos = 0; pos < 3; ++pos) {
                    std::snprintf(buf, sizeof buf, "%d,%d,%.2f,%.1f,%.6f,%.6f\n", m.module_id,
                                  pos + 1, key.second, key.first, m.pulse_temp_c.at(key),
                                  r[pos]);
                    out << buf;
                }
    }
}

}  // namespace cellscreen::campaign
