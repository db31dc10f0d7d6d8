/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/log_io.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cellscreen::io {

namespace {

constexpr std::array<const char*, 14> kColumns = {
    "time_s", "segment_id", "i_module_a", "v_module_v", "v1_v", "v2_v", "v3_v",
    "s1",     "s2",         "s3",         "t_tc1_c",    "t_tc2_c", "t_tc3_c",
    "balancing_enabled",
};

constexpr std::array<const char*, 4> kRequiredMeta = {
    "schema_version", "seed", "plan_preset", "pulse_ordering",
};

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what)
{
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split(const std::string& s, char delim)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, delim))
        out.push_back(item);
    if (!s.empty() && s.back() == delim)
        out.emplace_back();
    return out;
}

double parse_double(const std::filesystem::path& path, std::size_t line, const std::string& s)
{
    double value = 0.0;
    const auto* begin = s.data();
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        fail(path, line, "not a number: '" + s + "'");
    if (!std::isfinite(value))
        fail(path, line, "non-finite value: '" + s + "'");
    return value;
}

int parse_int(const std::filesystem::path& path, std::size_t line, const std::string& s)
{
    int value = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        fail(path, line, "not an integer: '" + s + "'");
    return value;
}

int parse_switch(const std::filesystem::path& path, std::size_t line, const std::string& s)
{
    const int v = parse_int(path, line, s);
    if (v != 0 && v != 1)
        fail(path, line, "switch field must be 0 or 1, got '" + s + "'");
    return v;
}

}  // namespace

const std::string& TestLog::meta(const std::string& key) const
{
    auto it = metadata.find(key);
    if (it == metadata.end())
        throw std::runtime_error("missing log metadata key '" + key + "'");
    return it->second;
}

double TestLog::meta_double(const std::string& key) const
{
    return std::stod(meta(key));
}

void TestLog::set_meta(const std::string& key, double value)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    metadata[key] = buf;
}

const SegmentInfo* TestLog::find_segment(int id) const
{
    for (const auto& seg : segments)
        if (seg.id == id)
            return &seg;
    return nullptr;
}

void write_log(const std::filesystem::path& path, const TestLog& log)
{
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (f == nullptr)
        throw std::runtime_error("cannot open " + path.string() + " for writing");

    for (const auto& [key, value] : log.metadata)
        std::fprintf(f, "#%s=%s\n", key.c_str(), value.c_str());
    for (const auto& seg : log.segments)
        std::fprintf(f, "#segment=%d:%s:%s\n", seg.id, seg.kind.c_str(), seg.label.c_str());

    for (std::size_t i = 0; i < kColumns.size(); ++i)
        std::fprintf(f, "%s%s", i == 0 ? "" : ",", kColumns[i]);
    std::fputc('\n', f);

    for (const auto& r : log.records) {
        std::fprintf(f, "%.6f,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%d,%d,%.6f,%.6f,%.6f,%d\n",
                     r.time_s, r.segment_id, r.i_module_a, r.v_module_v, r.v1_v, r.v2_v, r.v3_v,
                     r.s1, r.s2, r.s3, r.t_tc1_c, r.t_tc2_c, r.t_tc3_c, r.balancing_enabled);
    }

    if (std::fclose(f) != 0)
        throw std::runtime_error("error writing " + path.string());
}

TestLog read_log(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());

    TestLog log;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;

        if (line.front() == '#') {
            if (header_seen)
                fail(path, line_no, "metadata after the header row");
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                fail(path, line_no, "metadata line without '='");
            const std::string key = line.substr(1, eq - 1);
            const std::string value = line.substr(eq + 1);
            if (key == "segment") {
                const auto parts = split(value, ':');
                if (parts.size() < 2)
                    fail(path, line_no, "segment entry needs id:kind[:label]");
                SegmentInfo seg;
                seg.id = parse_int(path, line_no, parts[0]);
                seg.kind = parts[1];
                if (parts.size() > 2)
                    seg.label = parts[2];
                log.segments.push_back(std::move(seg));
            } else {
                log.metadata[key] = value;
            }
            continue;
        }

        if (!header_seen) {
            const auto cols = split(line, ',');
            if (cols.size() != kColumns.size())
                fail(path, line_no, "expected " + std::to_string(kColumns.size()) +
                                        " columns, found " + std::to_string(cols.size()));
            for (std::size_t i = 0; i < cols.size(); ++i)
                if (cols[i] != kColumns[i])
                    fail(path, line_no, "unknown column '" + cols[i] + "' (expected '" +
                                            kColumns[i] + "')");
            header_seen = true;
            continue;
        }

        const auto fields = split(line, ',');
        if (fields.size() != kColumns.size())
            fail(path, line_no, "expected " + std::to_string(kColumns.size()) +
                                    " fields, found " + std::to_string(fields.size()));
        LogRecord r;
        r.time_s = parse_double(path, line_no, fields[0]);
        r.segment_id = parse_int(path, line_no, fields[1]);
        r.i_module_a = parse_double(path, line_no, fields[2]);
        r.v_module_v = parse_double(path, line_no, fields[3]);
        r.v1_v = parse_double(path, line_no, fields[4]);
        r.v2_v = parse_double(path, line_no, fields[5]);
        r.v3_v = parse_double(path, line_no, fields[6]);
        r.s1 = parse_switch(path, line_no, fields[7]);
        r.s2 = parse_switch(path, line_no, fields[8]);
        r.s3 = parse_switch(path, line_no, fields[9]);
        r.t_tc1_c = parse_double(path, line_no, fields[10]);
        r.t_tc2_c = parse_double(path, line_no, fields[11]);
        r.t_tc3_c = parse_double(path, line_no, fields[12]);
        r.balancing_enabled = parse_switch(path, line_no, fields[13]);

        if (!log.records.empty() && r.time_s <= log.records.back().time_s)
            fail(path, line_no, "time must be strictly increasing");
        log.records.push_back(r);
    }

    if (!header_seen)
        fail(path, line_no, "missing header row");
    for (const char* key : kRequiredMeta)
        if (!log.has_meta(key))
            throw std::runtime_error(path.string() + ": missing metadata key '" +
                                     std::string(key) + "'");
    if (log.meta("schema_version") != std::to_string(kSchemaVersion))
        throw std::runtime_error(path.string() + ": unsupported schema version '" +
                                 log.meta("schema_version") + "' (expected " +
                                 std::to_string(kSchemaVersion) + ")");
    return log;
}

}  // namespace cellscreen::io
