// kernels.cpp

#include <cmath>
#include <limits>

#include "spikechip/kernels.hpp"

void spikechip::DpiParams::validate() const
{
    if (!(I_tau > 0.0) || !(I_gain > 0.0) || !(C > 0.0))
    {
        throw ConfigError("DPI requires positive I_tau, I_gain and C");
    }
}

double spikechip::dpi_tau(const DpiParams &params, const PhysicsConstants &consts)
{
    return params.C * consts.thermal_voltage / (consts.kappa * params.I_tau);
}

spikechip::DpiState spikechip::dpi_advance(const DpiState &state,
        const DpiParams &params, const double I_in, const double dt,
        const PhysicsConstants &consts)
{
    if (dt <= 0.0)
    {
        return state;
    }
    const double tau = dpi_tau(params, consts);
    const double steady = (params.I_gain / params.I_tau) * I_in;
    const double decay = std::exp(-dt / tau);
    // steady * (1 - decay), computed without cancellation at small dt
    const double I = state.I_out * decay - steady * std::expm1(-dt / tau);
    return DpiState{std::max(I, 0.0), state.last_update + dt};
}

double spikechip::dpi_mean(const DpiState &state, const DpiParams &params,
        const double I_in, const double dt, const PhysicsConstants &consts)
{
    if (dt <= 0.0)
    {
        return state.I_out;
    }
    const double tau = dpi_tau(params, consts);
    const double steady = (params.I_gain / params.I_tau) * I_in;
    const double x = dt / tau;
    // -expm1(-x) / x, the mean of e^{-s} over [0, x]
    const double shape = x < 1e-8 ? 1.0 - 0.5 * x : -std::expm1(-x) / x;
    return std::max(steady + (state.I_out - steady) * shape, 0.0);
}

double spikechip::dpi_full_rhs(const double I_out, const double I_in,
        const DpiParams &params, const PhysicsConstants &consts)
{
    const double tau = dpi_tau(params, consts);
    const double I = std::max(I_out, 0.0);
    const double harmonic = params.I_gain * I / (params.I_gain + I);
    return ((I_in / params.I_tau) * harmonic - I) / tau;
}

spikechip::DpiState spikechip::dpi_advance_full(const DpiState &state,
        const DpiParams &params, const double I_in, const double dt,
        const PhysicsConstants &consts, const double rtol, const double floor)
{
    if (dt <= 0.0)
    {
        return state;
    }
    const auto rhs = [&](const double I) {
        return dpi_full_rhs(I, I_in, params, consts);
    };
    const double tau = dpi_tau(params, consts);
    const double h0 = std::min(dt, tau / 8.0);
    const double I = rk4_adaptive(
            rhs, std::max(state.I_out, floor), dt, rtol, floor, h0);
    return DpiState{I, state.last_update + dt};
}

double spikechip::affine_advance(
        const double I0, const double drive, const double rate, const double dt)
{
    if (dt <= 0.0)
    {
        return I0;
    }
    if (rate == 0.0)
    {
        return I0 + drive * dt;
    }
    // I(t) = I0 e^{rate t} + (drive / rate) (e^{rate t} - 1)
    const double growth = std::expm1(rate * dt);
    return I0 + (I0 + drive / rate) * growth;
}

double spikechip::affine_crossing_time(const double I0, const double drive,
        const double rate, const double target, const double horizon)
{
    if (I0 >= target)
    {
        return 0.0;
    }
    if (rate == 0.0)
    {
        if (drive <= 0.0)
        {
            return -1.0;
        }
        const double t = (target - I0) / drive;
        return t <= horizon ? t : -1.0;
    }
    const double fixed = -drive / rate;
    const double num = target - fixed;
    const double den = I0 - fixed;
    if (den == 0.0)
    {
        return -1.0;
    }
    const double ratio = num / den;
    if (!(ratio > 0.0))
    {
        return -1.0;
    }
    const double t = std::log(ratio) / rate;
    if (!(t >= 0.0) || t > horizon)
    {
        return -1.0;
    }
    return t;
}

void spikechip::PulseExtenderState::validate() const
{
    if (!(I_pw > 0.0))
    {
        throw ConfigError("pulse extender requires I_pw > 0");
    }
    if (mode == PulseMode::delayed && !(I_delay > 0.0))
    {
        throw ConfigError("delayed pulse extender requires I_delay > 0");
    }
    if (!(C_px > 0.0))
    {
        throw ConfigError("pulse extender capacitance must be positive");
    }
}

spikechip::PulsePhase spikechip::PulseExtenderState::phase_at(const double t) const
{
    if (t >= pulse_start && t < pulse_end)
    {
        return PulsePhase::pulsing;
    }
    if (mode == PulseMode::delayed && t < pulse_start &&
            phase != PulsePhase::idle)
    {
        // delaying phase spans [trigger, pulse_start); the trigger time is
        // pulse_start minus the delay, which only matters for t < pulse_start
        return PulsePhase::delaying;
    }
    return PulsePhase::idle;
}

bool spikechip::PulseExtenderState::active_at(const double t) const
{
    return phase_at(t) == PulsePhase::pulsing;
}

double spikechip::pulse_swing_time(
        const double C, const double I, const PhysicsConstants &consts)
{
    return C * consts.supply_voltage * (1.0 - consts.switch_threshold_fraction) /
            I;
}

double spikechip::pulse_width(
        const PulseExtenderState &state, const PhysicsConstants &consts)
{
    return pulse_swing_time(state.C_px, state.I_pw, consts);
}

double spikechip::pulse_delay(
        const PulseExtenderState &state, const PhysicsConstants &consts)
{
    if (state.mode != PulseMode::delayed)
    {
        return 0.0;
    }
    return pulse_swing_time(state.C_px, state.I_delay, consts);
}

spikechip::PulseExtenderState spikechip::px_trigger(
        const PulseExtenderState &state, const double t,
        const PhysicsConstants &consts)
{
    PulseExtenderState next = state;
    const double width = pulse_width(state, consts);
    const bool active = state.phase != PulsePhase::idle &&
            t >= state.pulse_start && t < state.pulse_end;
    if (!active)
    {
        next.pulse_start = t;
    }
    // Recharging the capacitor restarts the remaining pulse
    next.pulse_end = t + width;
    next.phase = PulsePhase::pulsing;
    next.phase_end = next.pulse_end;
    return next;
}

spikechip::PulseExtenderState spikechip::px_delayed_trigger(
        const PulseExtenderState &state, const double t,
        const PhysicsConstants &consts)
{
    const bool busy = state.phase != PulsePhase::idle && t < state.pulse_end;
    if (busy)
    {
        return state;
    }
    PulseExtenderState next = state;
    const double delay = pulse_delay(state, consts);
    next.phase = PulsePhase::delaying;
    next.phase_end = t + delay;
    next.pulse_start = t + delay;
    next.pulse_end = next.pulse_start + pulse_width(state, consts);
    return next;
}

double spikechip::lpf_charge_per_event(const double I_gain, const double I_w,
        const double I_tau, const double T_pulse)
{
    return (I_gain * I_w / I_tau) * T_pulse;
}
