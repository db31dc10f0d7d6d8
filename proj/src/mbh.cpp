/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cellscreen/mbh.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cellscreen::mbh {

double FilterSpec::cutoff_hz() const
{
    return 1.0 / (2.0 * std::numbers::pi * time_constant_s());
}

double AdcSpec::native_step_v() const
{
    return full_scale_v / static_cast<double>(1 << usable_bits);
}

double AdcSpec::effective_step_v() const
{
    // The firmware rescale undoes the nominal 4:1 divider.
    return native_step_v() * 4.0;
}

MbhConfig MbhConfig::defaults()
{
    MbhConfig cfg;
    cfg.correction.channel = {{{0.9894, -0.002}, {0.9910, -0.002}, {0.9907, -0.002}}};
    for (int ch = 0; ch < 3; ++ch) {
        const auto& corr = cfg.correction.channel[ch];
        // Inverse of the correction, referred to the rescaled (x4) domain.
        cfg.tolerance[ch].gain = 1.0 / corr.gain;
        cfg.tolerance[ch].offset_v = -corr.bias_v / (4.0 * corr.gain);
    }
    return cfg;
}

MeasureResult measure(const MbhConfig& cfg, const std::array<double, 3>& node_potentials_v,
                      const std::array<double, 3>& filter_state, double dt_s,
                      std::mt19937_64* noise_rng)
{
    if (dt_s <= 0.0)
        throw std::invalid_argument("dt must be positive");

    const double scale = cfg.divider.scale();
    if (!(scale > 0.0 && scale < 1.0))
        throw std::invalid_argument("divider scale must lie in (0, 1)");

    const double tau = cfg.filter.time_constant_s();
    // Zero-order-hold update of the first-order stage; exact for the
    // piecewise-constant inputs the chain sees, stable at any dt.
    const double alpha = 1.0 - std::exp(-dt_s / tau);
    const double step = cfg.adc.native_step_v();
    const double rescale = 1.0 / scale;
    const bool with_noise = cfg.adc_noise_sd_v > 0.0 && noise_rng != nullptr;

    MeasureResult out;
    for (int ch = 0; ch < 3; ++ch) {
        const double x = node_potentials_v[ch] * scale * cfg.tolerance[ch].gain +
                         cfg.tolerance[ch].offset_v;
        double y = filter_state[ch] + alpha * (x - filter_state[ch]);
        out.filter_state[ch] = y;

        if (with_noise) {
            std::normal_distribution<double> noise(0.0, cfg.adc_noise_sd_v);
            y += noise(*noise_rng);
        }

        if (std::abs(y) > cfg.adc.full_scale_v)
            throw std::range_error("ADC channel " + std::to_string(ch + 1) + " input " +
                                   std::to_string(y) + " V exceeds full scale " +
                                   std::to_string(cfg.adc.full_scale_v) + " V");

        const double quantized = std::round(y / step) * step;
        out.raw_v[ch] = quantized * rescale;
        out.corrected_v[ch] = cfg.correction.apply(ch, out.raw_v[ch]);
    }
    return out;
}

std::array<double, 3> reconstruct_cells(const std::array<double, 3>& channels_v)
{
    return {channels_v[0], channels_v[1] - channels_v[0], channels_v[2] - channels_v[1]};
}

MeasuredFrame DelayLine::push(const MeasuredFrame& frame)
{
    MeasuredFrame out = pending_ ? *pending_ : MeasuredFrame{frame.timestamp_s, {}, false};
    pending_ = frame;
    return out;
}

MeasuredFrame DelayLine::peek() const
{
    return pending_ ? *pending_ : MeasuredFrame{};
}

std::array<bool, 3> balance_decide(const BalancerConfig& cfg, const std::array<double, 3>& v)
{
    std::array<bool, 3> switches{false, false, false};
    if (!cfg.enabled)
        return switches;
    const double v_min = std::min({v[0], v[1], v[2]});
    for (int j = 0; j < 3; ++j)
        switches[j] = v[j] >= v_min + cfg.v_th_v;
    return switches;
}

double delta_v_max(const std::array<double, 3>& v)
{
    return std::max({v[0], v[1], v[2]}) - std::min({v[0], v[1], v[2]});
}

namespace can {

std::array<std::uint8_t, kVoltageFrameSize> encode_voltage_frame(const VoltageFrame& frame)
{
    std::array<std::uint8_t, kVoltageFrameSize> bytes{};
    for (int j = 0; j < 3; ++j) {
        const double counts = std::round(frame.v_cells_v[j] / kVoltageLsbV);
        if (counts < 0.0 || counts > 65535.0)
            throw std::range_error("cell voltage " + std::to_string(frame.v_cells_v[j]) +
                                   " V outside the 16-bit frame range");
        const auto u = static_cast<std::uint16_t>(counts);
        bytes[2 * j] = static_cast<std::uint8_t>(u & 0xFF);
        bytes[2 * j + 1] = static_cast<std::uint8_t>(u >> 8);
    }
    bytes[6] = frame.balancing_enabled ? 0x01 : 0x00;
    return bytes;
}

VoltageFrame decode_voltage_frame(const std::array<std::uint8_t, kVoltageFrameSize>& bytes)
{
    VoltageFrame frame;
    for (int j = 0; j < 3; ++j) {
        const std::uint16_t u = static_cast<std::uint16_t>(bytes[2 * j]) |
                                static_cast<std::uint16_t>(bytes[2 * j + 1]) << 8;
        frame.v_cells_v[j] = u * kVoltageLsbV;
    }
    frame.balancing_enabled = (bytes[6] & 0x01) != 0;
    return frame;
}

std::uint8_t encode_command(bool enable_balancing)
{
    return enable_balancing ? 0x01 : 0x00;
}

bool decode_command(std::uint8_t byte)
{
    return (byte & 0x01) != 0;
}

}  // namespace can

}  // namespace cellscreen::mbh
