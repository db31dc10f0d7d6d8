/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <vector>

namespace cellscreen::ecm {

/// Open-circuit voltage as a piecewise-linear function of state of charge.
/// Both coordinates must be strictly increasing; a monotone OCV is what ties
/// voltage-threshold balancing to SOC equalization.
class OcvCurve {
public:
    struct Point {
        double soc;    // fraction in [0, 1]
        double ocv_v;
    };

    OcvCurve() = default;
    explicit OcvCurve(std::vector<Point> points);  // validates monotonicity

    /// Interpolated OCV. Throws std::domain_error for soc outside [0, 1].
    double lookup(double soc) const;

    const std::vector<Point>& points() const { return points_; }

private:
    std::vector<Point> points_;
};

/// r(T, SOC) = a1/(T - a2) + a3, with the coefficient set interpolated
/// linearly between SOC breakpoints. All values in ohms and degC.
class ResistanceLaw {
public:
    struct Coeffs {
        double a1;  // ohm*degC
        double a2;  // degC
        double a3;  // ohm
    };
    struct Breakpoint {
        double soc;
        Coeffs coeffs;
    };

    ResistanceLaw() = default;
    explicit ResistanceLaw(std::vector<Breakpoint> breakpoints);

    /// Temperature-independent law (a1 = 0, a3 = r_ohm).
    static ResistanceLaw constant(double r_ohm);

    /// Ohms. SOC outside the breakpoint span clamps to the end breakpoints.
    /// Throws std::domain_error when T - a2 is not positive.
    double eval(double temp_c, double soc) const;

    /// Multiply a1 and a3 of every breakpoint by `factor` (per-position spread).
    ResistanceLaw scaled(double factor) const;

    const std::vector<Breakpoint>& breakpoints() const { return breakpoints_; }

private:
    std::vector<Breakpoint> breakpoints_;
};

/// Parameters of one lumped 4P group ("Cell").
struct CellParams {
    double capacity_ah = 244.8;
    ResistanceLaw r0_law;
    OcvCurve ocv;
};

/// Sign convention throughout: current positive when charging.
struct CellState {
    double soc = 0.5;
    double i_cell_a = 0.0;
    double v_terminal_v = 0.0;
};

struct SocUpdate {
    double soc;     // clamped to [0, 1]
    double excess;  // how far past the bounds the raw update went (>= 0)

    bool saturated() const { return excess > 0.0; }
};

struct BranchCurrents {
    double i_cell_a;
    double i_bleed_a;
    double v_cell_v;
};

double ocv_lookup(const OcvCurve& curve, double soc);

/// ocv(soc) + r0(T, soc) * i
double terminal_voltage(const CellParams& params, double soc, double i_a, double temp_c);

/// Open-switch Coulomb counting: soc + i*dt / (3600*Q). The caller decides
/// whether a nonzero `excess` is a protocol violation.
SocUpdate soc_step_open(const CellParams& params, double soc, double i_module_a, double dt_s);

/// dSOC/dt with the bleed branch engaged:
/// [R_b*I_m - OCV(soc)] / [3600*Q*(R_0 + R_b)], per second.
double soc_derivative_closed(const CellParams& params, double soc, double i_module_a,
                             double r_bleed_ohm, double temp_c);

/// Closed-switch branch solution of I_m = i_cell + i_bleed, v = OCV + R0*i_cell,
/// v = R_b*i_bleed.
BranchCurrents branch_currents_closed(const CellParams& params, double soc, double i_module_a,
                                      double r_bleed_ohm, double temp_c);

/// 21-point NMC-like table spanning (0, 3.30 V) to (1, 4.20 V).
OcvCurve default_ocv_curve();

/// Breakpoints at 40/65/90 % SOC with coefficients matching the fitted
/// r(25 degC) of roughly 0.19-0.20 mOhm.
ResistanceLaw default_resistance_law();

CellParams default_cell_params();

}  // namespace cellscreen::ecm
