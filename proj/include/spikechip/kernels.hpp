// kernels.hpp - reusable analog primitives
//
// The differential pair integrator (DPI) low-pass filter, the basic and
// delayed pulse extenders, and the event low-pass filter built from the two.
// All operations are pure state -> state transitions.
#ifndef SPIKECHIP_KERNELS_HPP
#define SPIKECHIP_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "spikechip/params.hpp"

namespace spikechip
{

struct DpiParams
{
    double I_tau = 1e-12;
    double I_gain = 1e-12;
    double C = 1e-12;
    Polarity polarity = Polarity::n_type;
    bool mirrored = false;

    void validate() const;
};

struct DpiState
{
    double I_out = 0.0;
    double last_update = 0.0; // seconds
};

double dpi_tau(const DpiParams &params, const PhysicsConstants &consts);

// Exact update of the linear (high-output) regime for an input held constant
// over [t, t + dt].
DpiState dpi_advance(const DpiState &state, const DpiParams &params,
        double I_in, double dt, const PhysicsConstants &consts);

// Time average of the closed-form output over [t, t + dt].
double dpi_mean(const DpiState &state, const DpiParams &params, double I_in,
        double dt, const PhysicsConstants &consts);

// Right-hand side of the general current-mode equation.
double dpi_full_rhs(double I_out, double I_in, const DpiParams &params,
        const PhysicsConstants &consts);

// Adaptive RK4 (step doubling) integration of the general equation.
// The state never drops below floor.
DpiState dpi_advance_full(const DpiState &state, const DpiParams &params,
        double I_in, double dt, const PhysicsConstants &consts,
        double rtol = 1e-8, double floor = 0.0);

// +1 when the output current flows in the input direction, -1 otherwise.
constexpr int dpi_output_direction(const DpiParams &params)
{
    return params.mirrored ? -1 : 1;
}

// Solution of dI/dt = drive + rate * I over dt. Used wherever a linear
// first-order node is advanced in closed form.
double affine_advance(double I0, double drive, double rate, double dt);

// Earliest t in (0, horizon] at which affine_advance(I0, ...) reaches target
// from below; negative if it does not.
double affine_crossing_time(
        double I0, double drive, double rate, double target, double horizon);

// Generic adaptive RK4 with step doubling on a scalar ODE.
template <class Rhs>
double rk4_adaptive(Rhs &&rhs, double y, const double duration,
        const double rtol, const double floor = 0.0, double h = 0.0)
{
    if (duration <= 0.0)
    {
        return y;
    }
    if (h <= 0.0)
    {
        h = duration / 16.0;
    }
    const auto step = [&](const double y0, const double dt) {
        const double k1 = rhs(y0);
        const double k2 = rhs(std::max(y0 + 0.5 * dt * k1, floor));
        const double k3 = rhs(std::max(y0 + 0.5 * dt * k2, floor));
        const double k4 = rhs(std::max(y0 + dt * k3, floor));
        return std::max(y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), floor);
    };
    double t = 0.0;
    while (t < duration)
    {
        h = std::min(h, duration - t);
        const double full = step(y, h);
        const double half = step(step(y, 0.5 * h), 0.5 * h);
        const double scale = std::max({std::abs(y), std::abs(half), 1e-30});
        const double err = std::abs(half - full) / 15.0;
        if (err <= rtol * scale || h <= duration * 1e-14)
        {
            t += h;
            y = half + (half - full) / 15.0;
            y = std::max(y, floor);
            const double grow = err > 0.0 ?
                    0.9 * std::pow(rtol * scale / err, 0.2) :
                    4.0;
            h *= std::clamp(grow, 0.2, 4.0);
        }
        else
        {
            h *= std::clamp(0.9 * std::pow(rtol * scale / err, 0.25), 0.1, 0.9);
        }
    }
    return y;
}

enum class PulseMode : uint8_t
{
    basic,
    delayed,
};

enum class PulsePhase : uint8_t
{
    idle,
    delaying,
    pulsing,
};

struct PulseExtenderState
{
    PulseMode mode = PulseMode::basic;
    double I_pw = 1e-12;
    double I_delay = 0.0; // delayed mode only
    double C_px = 2e-12;
    PulsePhase phase = PulsePhase::idle; // phase entered at the last accepted trigger
    double phase_end = 0.0; // end of that phase
    double pulse_start = 0.0; // output window of the most recent accepted event
    double pulse_end = 0.0;

    void validate() const;
    PulsePhase phase_at(double t) const;
    bool active_at(double t) const;
};

// Time to move the pulse-extender capacitor across its switching swing.
double pulse_swing_time(double C, double I, const PhysicsConstants &consts);
double pulse_width(const PulseExtenderState &state, const PhysicsConstants &consts);
double pulse_delay(const PulseExtenderState &state, const PhysicsConstants &consts);

// Basic extender: the output is the union of [t_i, t_i + T_pulse].
PulseExtenderState px_trigger(const PulseExtenderState &state, double t,
        const PhysicsConstants &consts);

// Delayed extender: events that arrive while a delay or pulse is in progress
// are dropped.
PulseExtenderState px_delayed_trigger(const PulseExtenderState &state,
        double t, const PhysicsConstants &consts);

// Output charge per input event of the event low-pass filter.
double lpf_charge_per_event(
        double I_gain, double I_w, double I_tau, double T_pulse);

} // namespace spikechip

#endif
