/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace cellscreen::diag {

namespace {

struct Sample {
    double t;
    double r_ohm;
};

// Solve the 3x3 system A*x = b in place, partial pivoting. Returns false on
// a (numerically) singular matrix.
bool solve3(double a[3][3], double b[3], double x[3])
{
    int perm[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::abs(a[perm[row]][col]) > std::abs(a[perm[pivot]][col]))
                pivot = row;
        std::swap(perm[col], perm[pivot]);
        const double diag = a[perm[col]][col];
        if (std::abs(diag) < 1e-300)
            return false;
        for (int row = col + 1; row < 3; ++row) {
            const double f = a[perm[row]][col] / diag;
            for (int k = col; k < 3; ++k)
                a[perm[row]][k] -= f * a[perm[col]][k];
            b[perm[row]] -= f * b[perm[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double acc = b[perm[col]];
        for (int k = col + 1; k < 3; ++k)
            acc -= a[perm[col]][k] * x[k];
        const double diag = a[perm[col]][col];
        if (std::abs(diag) < 1e-300)
            return false;
        x[col] = acc / diag;
    }
    return true;
}

double ssr_of(const std::vector<Sample>& data, const double p[3])
{
    double ssr = 0.0;
    for (const auto& s : data) {
        const double e = s.r_ohm - (p[0] / (s.t - p[1]) + p[2]);
        ssr += e * e;
    }
    return ssr;
}

bool pole_near_data(const std::vector<Sample>& data, double a2)
{
    for (const auto& s : data)
        if (std::abs(s.t - a2) < 0.5)
            return true;
    return false;
}

// Damped Gauss-Newton (Levenberg-Marquardt) on r = a1/(T-a2) + a3.
bool fit_level(const std::vector<Sample>& data, double p[3], double* ssr_out)
{
    double lambda = 1e-3;
    double ssr = ssr_of(data, p);
    for (int iter = 0; iter < 200; ++iter) {
        if (pole_near_data(data, p[1]))
            return false;

        double jtj[3][3] = {};
        double jte[3] = {};
        for (const auto& s : data) {
            const double inv = 1.0 / (s.t - p[1]);
            const double jac[3] = {inv, p[0] * inv * inv, 1.0};
            const double e = s.r_ohm - (p[0] * inv + p[2]);
            for (int i = 0; i < 3; ++i) {
                jte[i] += jac[i] * e;
                for (int j = 0; j < 3; ++j)
                    jtj[i][j] += jac[i] * jac[j];
            }
        }

        bool stepped = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            double a[3][3];
            double b[3];
            for (int i = 0; i < 3; ++i) {
                b[i] = jte[i];
                for (int j = 0; j < 3; ++j)
                    a[i][j] = jtj[i][j];
                a[i][i] += lambda * std::max(jtj[i][i], 1e-12);
            }
            double delta[3];
            if (!solve3(a, b, delta)) {
                lambda *= 10.0;
                continue;
            }
            const double trial[3] = {p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]};
            if (pole_near_data(data, trial[1])) {
                lambda *= 10.0;
                continue;
            }
            const double trial_ssr = ssr_of(data, trial);
            if (trial_ssr <= ssr) {
                const double step = std::abs(delta[0]) + std::abs(delta[1]) + std::abs(delta[2]);
                const double improvement = ssr - trial_ssr;
                p[0] = trial[0];
                p[1] = trial[1];
                p[2] = trial[2];
                ssr = trial_ssr;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (step < 1e-12 || improvement < 1e-24) {
                    *ssr_out = ssr;
                    return true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!stepped) {
            // Damping saturated: we are at a (local) minimum.
            *ssr_out = ssr;
            return true;
        }
    }
    *ssr_out = ssr;
    return true;
}

}  // namespace

RtFit fit_rt(const std::vector<RtPoint>& points)
{
    if (points.empty())
        throw std::invalid_argument("no resistance points to fit");

    std::map<double, std::vector<Sample>, std::greater<double>> by_level;
    for (const auto& pt : points)
        by_level[pt.soc].push_back({pt.temp_c, pt.r_mohm / 1000.0});

    RtFit fit;
    for (const auto& [level, data] : by_level) {
        std::set<double> temps;
        for (const auto& s : data)
            temps.insert(s.t);
        if (temps.size() < 3)
            throw std::invalid_argument("soc level " + std::to_string(level) + " has " +
                                        std::to_string(temps.size()) +
                                        " distinct temperatures; need at least 3");

        const double t_min = *temps.begin();
        // Mean resistance in the coldest cluster anchors the two-point solve.
        double r_at_tmin = 0.0;
        int n_at_tmin = 0;
        for (const auto& s : data) {
            if (s.t - t_min < 2.0) {
                r_at_tmin += s.r_ohm;
                ++n_at_tmin;
            }
        }
        r_at_tmin /= std::max(n_at_tmin, 1);

        bool converged = false;
        double p[3] = {0.0, 0.0, 0.0};
        double ssr = 0.0;
        for (int restart = 0; restart < 5 && !converged; ++restart) {
            p[1] = t_min - 25.0 - 10.0 * restart;
            p[0] = r_at_tmin * (t_min - p[1]);
            p[2] = 0.0;
            converged = fit_level(data, p, &ssr);
        }
        if (!converged) {
            throw std::runtime_error("resistance-temperature fit did not converge at soc " +
                                     std::to_string(level) + "; residual " +
                                     std::to_string(std::sqrt(ssr / data.size()) * 1000.0) +
                                     " mOhm");
        }

        RtFitRow row;
        row.soc_level = level;
        row.a1 = p[0];
        row.a2 = p[1];
        row.a3 = p[2];
        row.point_count = static_cast<int>(data.size());
        row.rmse_mohm = std::sqrt(ssr / static_cast<double>(data.size())) * 1000.0;
        fit.rows.push_back(row);
    }
    return fit;
}

}  // namespace cellscreen::diag
