/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/ecm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cellscreen::ecm {

namespace {

constexpr double kSecondsPerHour = 3600.0;

[[noreturn]] void throw_soc_domain(double soc)
{
    throw std::domain_error("soc " + std::to_string(soc) + " outside [0, 1]");
}

}  // namespace

OcvCurve::OcvCurve(std::vector<Point> points) : points_(std::move(points))
{
    if (points_.size() < 2)
        throw std::invalid_argument("OcvCurve needs at least 2 points");
    for (std::size_t i = 1; i < points_.size(); ++i) {
        if (points_[i].soc <= points_[i - 1].soc)
            throw std::invalid_argument("OcvCurve soc values must be strictly increasing");
        if (points_[i].ocv_v <= points_[i - 1].ocv_v)
            throw std::invalid_argument("OcvCurve ocv values must be strictly increasing");
    }
    if (points_.front().soc < 0.0 || points_.back().soc > 1.0)
        throw std::invalid_argument("OcvCurve soc values must lie in [0, 1]");
}

double OcvCurve::lookup(double soc) const
{
    if (points_.size() < 2)
        throw std::logic_error("OcvCurve is empty");
    if (!(soc >= 0.0 && soc <= 1.0))
        throw_soc_domain(soc);

    const double lo = points_.front().soc;
    const double hi = points_.back().soc;
    // Curves normally span the full [0,1]; clamp queries onto the span edge.
    const double s = std::clamp(soc, lo, hi);

    auto it = std::lower_bound(points_.begin(), points_.end(), s,
                               [](const Point& p, double v) { return p.soc < v; });
    if (it == points_.begin())
        return it->ocv_v;
    if (it == points_.end())
        return points_.back().ocv_v;

    const Point& b = *it;
    const Point& a = *(it - 1);
    const double t = (s - a.soc) / (b.soc - a.soc);
    return a.ocv_v + t * (b.ocv_v - a.ocv_v);
}

double ocv_lookup(const OcvCurve& curve, double soc)
{
    return curve.lookup(soc);
}

ResistanceLaw::ResistanceLaw(std::vector<Breakpoint> breakpoints)
    : breakpoints_(std::move(breakpoints))
{
    if (breakpoints_.empty())
        throw std::invalid_argument("ResistanceLaw needs at least one breakpoint");
    for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
        if (breakpoints_[i].soc <= breakpoints_[i - 1].soc)
            throw std::invalid_argument("ResistanceLaw breakpoints must be strictly increasing in soc");
    }
}

ResistanceLaw ResistanceLaw::constant(double r_ohm)
{
    return ResistanceLaw({{0.5, {0.0, -273.15, r_ohm}}});
}

double ResistanceLaw::eval(double temp_c, double soc) const
{
    if (breakpoints_.empty())
        throw std::logic_error("ResistanceLaw is empty");

    auto eval_coeffs = [&](const Coeffs& c) {
        const double denom = temp_c - c.a2;
        if (denom <= 0.0)
            throw std::domain_error("resistance law pole: T - a2 = " + std::to_string(denom) +
                                    " at T = " + std::to_string(temp_c));
        return c.a1 / denom + c.a3;
    };

    if (soc <= breakpoints_.front().soc)
        return eval_coeffs(breakpoints_.front().coeffs);
    if (soc >= breakpoints_.back().soc)
        return eval_coeffs(breakpoints_.back().coeffs);

    auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), soc,
                               [](const Breakpoint& b, double v) { return b.soc < v; });
    const Breakpoint& hi = *it;
    const Breakpoint& lo = *(it - 1);
    const double t = (soc - lo.soc) / (hi.soc - lo.soc);
    return (1.0 - t) * eval_coeffs(lo.coeffs) + t * eval_coeffs(hi.coeffs);
}

ResistanceLaw ResistanceLaw::scaled(double factor) const
{
    std::vector<Breakpoint> bps = breakpoints_;
    for (auto& bp : bps) {
        bp.coeffs.a1 *= factor;
        bp.coeffs.a3 *= factor;
    }
    return ResistanceLaw(std::move(bps));
}

double terminal_voltage(const CellParams& params, double soc, double i_a, double temp_c)
{
    const double r0 = params.r0_law.eval(temp_c, soc);
    return params.ocv.lookup(soc) + r0 * i_a;
}

SocUpdate soc_step_open(const CellParams& params, double soc, double i_module_a, double dt_s)
{
    if (dt_s <= 0.0)
        throw std::invalid_argument("dt must be positive");
    const double raw = soc + i_module_a * dt_s / (kSecondsPerHour * params.capacity_ah);
    SocUpdate out{std::clamp(raw, 0.0, 1.0), 0.0};
    if (raw > 1.0)
        out.excess = raw - 1.0;
    else if (raw < 0.0)
        out.excess = -raw;
    return out;
}

double soc_derivative_closed(const CellParams& params, double soc, double i_module_a,
                             double r_bleed_ohm, double temp_c)
{
    if (r_bleed_ohm <= 0.0)
        throw std::invalid_argument("r_bleed must be positive");
    const double r0 = params.r0_law.eval(temp_c, soc);
    const double ocv = params.ocv.lookup(soc);
    return (r_bleed_ohm * i_module_a - ocv) /
           (kSecondsPerHour * params.capacity_ah * (r0 + r_bleed_ohm));
}

BranchCurrents branch_currents_closed(const CellParams& params, double soc, double i_module_a,
                                      double r_bleed_ohm, double temp_c)
{
    if (r_bleed_ohm <= 0.0)
        throw std::invalid_argument("r_bleed must be positive");
    const double r0 = params.r0_law.eval(temp_c, soc);
    const double ocv = params.ocv.lookup(soc);
    BranchCurrents out{};
    out.i_cell_a = (r_bleed_ohm * i_module_a - ocv) / (r0 + r_bleed_ohm);
    out.i_bleed_a = i_module_a - out.i_cell_a;
    out.v_cell_v = ocv + r0 * out.i_cell_a;
    return out;
}

OcvCurve default_ocv_curve()
{
    // NMC-like shape: steep knee at the bottom, flat plateau through the
    // middle, rising tail to the rated 4.2 V.
    return OcvCurve({
        {0.00, 3.300}, {0.05, 3.560}, {0.10, 3.590}, {0.15, 3.610}, {0.20, 3.625},
        {0.25, 3.638}, {0.30, 3.650}, {0.35, 3.661}, {0.40, 3.672}, {0.45, 3.684},
        {0.50, 3.696}, {0.55, 3.710}, {0.60, 3.726}, {0.65, 3.745}, {0.70, 3.768},
        {0.75, 3.796}, {0.80, 3.832}, {0.85, 3.880}, {0.90, 3.945}, {0.95, 4.050},
        {1.00, 4.200},
    });
}

ResistanceLaw default_resistance_law()
{
    return ResistanceLaw({
        {0.40, {0.0024, -0.0909, 0.0001}},
        {0.65, {0.0024, -0.0866, 0.0001}},
        {0.90, {0.0023, -0.0857, 0.0001}},
    });
}

CellParams default_cell_params()
{
    CellParams p;
    p.capacity_ah = 244.8;
    p.r0_law = default_resistance_law();
    p.ocv = default_ocv_curve();
    return p;
}

}  // namespace cellscreen::ecm
