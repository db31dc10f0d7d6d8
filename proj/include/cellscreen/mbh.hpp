/*
 * Copyright (c) 2026 cellscreen contributors
 *
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>

namespace cellscreen::mbh {

/// Resistive front-end scaling node potentials into the ADC range.
struct DividerSpec {
    double r_high_ohm = 30e3;
    double r_low_ohm = 10e3;

    double scale() const { return r_low_ohm / (r_high_ohm + r_low_ohm); }  // 0.25 at defaults
};

/// Anti-aliasing network. Only the R1*C2 stage shapes the emulated response;
/// C1 and C3 are kept as documented board constants (input shunt, DC block).
struct FilterSpec {
    double r1_ohm = 3e3;
    double r2_ohm = 2e3;
    double c1_f = 47e-9;
    double c2_f = 470e-9;
    double c3_f = 47e-9;

    double time_constant_s() const { return r1_ohm * c2_f; }
    double cutoff_hz() const;
};

struct AdcSpec {
    int bits = 16;
    int usable_bits = 15;  // single-ended
    double full_scale_v = 4.096;
    double sample_period_s = 0.1;

    double native_step_v() const;     // 125 uV at defaults
    double effective_step_v() const;  // native * rescale = 0.5 mV
};

/// corrected = gain * raw + bias, applied per channel after the 4x rescale.
struct ChannelCorrection {
    double gain = 1.0;
    double bias_v = 0.0;
};

struct CorrectionModel {
    std::array<ChannelCorrection, 3> channel{};

    double apply(int ch, double raw_v) const
    {
        return channel[ch].gain * raw_v + channel[ch].bias_v;
    }
};

/// Analog gain/offset error of one channel (divider tolerance + ADC internal
/// gain), applied to the scaled signal ahead of the filter. The calibration
/// in CorrectionModel exists to undo exactly this.
struct ChannelTolerance {
    double gain = 1.0;
    double offset_v = 0.0;
};

struct MbhConfig {
    DividerSpec divider;
    FilterSpec filter;
    AdcSpec adc;
    CorrectionModel correction;
    std::array<ChannelTolerance, 3> tolerance{};
    double adc_noise_sd_v = 0.0;  // optional Gaussian at the ADC input, off by default

    /// Board defaults: correction gains/biases from the fitted calibration
    /// table, tolerances set to their exact inverse so corrected readings
    /// track the true potentials to within quantization.
    static MbhConfig defaults();
};

/// The Cell-voltage triple as delivered to the cycler.
struct MeasuredFrame {
    double timestamp_s = 0.0;
    std::array<double, 3> v_cells_v{};
    bool valid = false;
};

struct BalancerConfig {
    double v_th_v = 2.5e-3;
    double r_bleed_ohm = 67.5;
    bool enabled = true;
    int decimation = 1;  // evaluate the control law every Nth sample
};

struct MeasureResult {
    std::array<double, 3> corrected_v{};    // channel potentials after correction
    std::array<double, 3> raw_v{};          // after rescale, before correction (0.5 mV grid)
    std::array<double, 3> filter_state{};   // advanced filter outputs (ADC-input domain)
};

/// One pass of the measurement chain over the three cumulative node
/// potentials (C1+, C2+, C3+ vs G-): divider -> first-order filter ->
/// quantization -> rescale -> linear correction.
/// Throws std::range_error if a filtered signal exceeds the ADC full scale.
MeasureResult measure(const MbhConfig& cfg, const std::array<double, 3>& node_potentials_v,
                      const std::array<double, 3>& filter_state, double dt_s,
                      std::mt19937_64* noise_rng = nullptr);

/// v1 = ch1, v2 = ch2 - ch1, v3 = ch3 - ch2.
std::array<double, 3> reconstruct_cells(const std::array<double, 3>& channels_v);

/// Depth-1 FIFO modelling the one-sample CAN latency between the board and
/// the cycler. push() returns the frame delivered at this sample: the one
/// pushed a period earlier, or an invalid frame right after start.
class DelayLine {
public:
    MeasuredFrame push(const MeasuredFrame& frame);

    /// The frame the next push would deliver, without advancing the queue.
    MeasuredFrame peek() const;

    /// Preload the queue so the first push already delivers a valid frame
    /// (board streaming before the test starts).
    void prime(const MeasuredFrame& frame) { pending_ = frame; }

    void reset() { pending_.reset(); }

private:
    std::optional<MeasuredFrame> pending_;
};

/// Bang-bang control law: S_j = 1 iff v_j >= min(v) + v_th. The minimum Cell
/// is never switched, so at most two switches close.
std::array<bool, 3> balance_decide(const BalancerConfig& cfg, const std::array<double, 3>& v_cells_v);

double delta_v_max(const std::array<double, 3>& v_cells_v);

namespace can {

inline constexpr double kVoltageLsbV = 1e-4;  // 0.1 mV
inline constexpr std::size_t kVoltageFrameSize = 7;

struct VoltageFrame {
    std::array<double, 3> v_cells_v{};
    bool balancing_enabled = false;
};

/// 3x uint16 little-endian in 0.1 mV units plus a status byte (bit 0 =
/// balancing-enabled echo). Throws std::range_error when a voltage does not
/// fit the 16-bit range.
std::array<std::uint8_t, kVoltageFrameSize> encode_voltage_frame(const VoltageFrame& frame);
VoltageFrame decode_voltage_frame(const std::array<std::uint8_t, kVoltageFrameSize>& bytes);

std::uint8_t encode_command(bool enable_balancing);
bool decode_command(std::uint8_t byte);

}  // namespace can

}  // namespace cellscreen::mbh
