/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cellscreen/diagnostics.hpp"
#include "cellscreen/ecm.hpp"
#include "cellscreen/mbh.hpp"
#include "cellscreen/module_sim.hpp"
#include "cellscreen/protocol.hpp"

namespace cellscreen::campaign {

struct ParamTriple {
    std::array<double, 3> mean{};
    std::array<double, 3> sd{};
};

struct CampaignConfig {
    int modules = 1;
    std::uint64_t seed = 0;
    double dt_s = 0.1;
    std::vector<double> temperatures_c{25.0};
    std::string plan_preset = "fig3-standard";
    std::optional<protocol::TestPlan> custom_plan;

    double initial_soc_mean = 0.5;
    double initial_soc_sd = 0.001;

    ParamTriple capacity_ah{{244.8, 244.8, 244.8}, {0.0, 0.0, 0.0}};
    ParamTriple r0_scale{{1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
    ecm::OcvCurve ocv = ecm::default_ocv_curve();
    ecm::ResistanceLaw r0_law = ecm::default_resistance_law();

    sim::ThermalConfig thermal;
    mbh::MbhConfig mbh_cfg = mbh::MbhConfig::defaults();
    mbh::BalancerConfig balancer;
    double interconnect_r_ohm = 0.0;
    double soc_saturation_tol = 0.005;
};

/// Deterministic seed stream: independent draws per (master, module, lane).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b);

CampaignConfig parse_campaign_config(const std::string& json_text, const std::string& origin);
CampaignConfig load_campaign_config(const std::filesystem::path& path);

struct ModuleDraw {
    std::array<ecm::CellParams, 3> cells;
    std::array<double, 3> initial_soc{};
};

/// Per-module parameter draw; independent of the temperature lane so one
/// module keeps its cells across all its runs.
ModuleDraw draw_module(const CampaignConfig& cfg, int module_id);

protocol::TestPlan plan_for(const CampaignConfig& cfg, double setpoint_c);
sim::ModuleConfig module_config_for(const CampaignConfig& cfg, const ModuleDraw& draw,
                                    double setpoint_c);

std::string log_filename(int module_id, double setpoint_c);

struct CampaignOutcome {
    int runs = 0;
    int aborted = 0;
    std::vector<std::string> messages;  // one per aborted run
};

/// Fan out one run per (module, temperature), writing one log file each.
/// Deterministic for a fixed config + seed regardless of scheduling.
CampaignOutcome run_campaign(const CampaignConfig& cfg, const std::filesystem::path& out_dir,
                             bool parallel = true);

struct MetricsFile {
    diag::VoltageWindow window;
    std::vector<diag::ModuleSummary> modules;
};

void save_metrics(const std::filesystem::path& path, const MetricsFile& metrics);
MetricsFile load_metrics(const std::filesystem::path& path);

void save_fit(const std::filesystem::path& path, const diag::RtFit& fit);

/// Fit input assembled from analyzed metrics: one point per (module, Cell,
/// setpoint, SOC level) at the measured mean pulse temperature.
std::vector<diag::RtPoint> fit_points(const MetricsFile& metrics);

/// report.txt, report.json and the plot-data series under out_dir.
void write_report_files(const MetricsFile& metrics, const diag::PackReport& report,
                        const std::filesystem::path& out_dir);

}  // namespace cellscreen::campaign
