/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cellscreen::io {

inline constexpr int kSchemaVersion = 1;

/// One cycler row at the 10 Hz logging rate. Cell voltages are the CAN
/// values (delayed, quantized, corrected); current, module voltage and
/// temperatures are direct cycler measurements.
struct LogRecord {
    double time_s = 0.0;
    int segment_id = 0;
    double i_module_a = 0.0;
    double v_module_v = 0.0;
    double v1_v = 0.0;
    double v2_v = 0.0;
    double v3_v = 0.0;
    int s1 = 0;
    int s2 = 0;
    int s3 = 0;
    double t_tc1_c = 0.0;
    double t_tc2_c = 0.0;
    double t_tc3_c = 0.0;
    int balancing_enabled = 0;

    double cell_v(int j) const { return j == 0 ? v1_v : (j == 1 ? v2_v : v3_v); }
};

struct SegmentInfo {
    int id = 0;
    std::string kind;   // cc | cv | rest | pulse
    std::string label;
};

struct TestLog {
    // Ordered so writes are deterministic. Required keys: schema_version,
    // seed, plan_preset, pulse_ordering.
    std::map<std::string, std::string> metadata;
    std::vector<SegmentInfo> segments;
    std::vector<LogRecord> records;

    bool has_meta(const std::string& key) const { return metadata.count(key) != 0; }
    const std::string& meta(const std::string& key) const;
    double meta_double(const std::string& key) const;
    void set_meta(const std::string& key, const std::string& value) { metadata[key] = value; }
    void set_meta(const std::string& key, double value);

    const SegmentInfo* find_segment(int id) const;
};

/// Delimited-text schema: '#key=value' metadata block, '#segment=id:kind:label'
/// entries, a header row naming the LogRecord fields, then one comma-separated
/// row per sample with numeric fields at 6 decimal places.
void write_log(const std::filesystem::path& path, const TestLog& log);

/// Validating reader: rejects unknown columns, non-monotone time, missing
/// required metadata and schema-version mismatches, with line numbers.
TestLog read_log(const std::filesystem::path& path);

}  // namespace cellscreen::io
