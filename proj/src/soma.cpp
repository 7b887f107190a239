// soma.cpp

#include <algorithm>
#include <cmath>
#include <limits>

#include "spikechip/soma.hpp"

void spikechip::SomaConfig::validate() const
{
    if (I_leak < 0.0 || I_gain < 0.0 || I_refr < 0.0 || I_dc < 0.0 ||
            I_spkthr < 0.0 || I_feedback_pw < 0.0 || I_adapt_w < 0.0 ||
            I_calcium_w < 0.0)
    {
        throw ConfigError("soma currents must be non-negative");
    }
    if (!(C_mem > 0.0) || !(C_refr > 0.0) || !(C_feedback_px > 0.0))
    {
        throw ConfigError("soma capacitances must be positive");
    }
    if (!(exp_refr_swing > 0.0) || !(exp_ceiling_factor > 0.0))
    {
        throw ConfigError("exponential model parameters must be positive");
    }
}

void spikechip::HomeostasisConfig::validate() const
{
    if (!(V_ref_L <= V_ref_M && V_ref_M <= V_ref_H))
    {
        throw ConfigError("homeostasis references must satisfy L <= M <= H");
    }
    if (rate_up < 0.0 || rate_down < 0.0 || deadband < 0.0)
    {
        throw ConfigError("homeostasis rates must be non-negative");
    }
}

spikechip::HomeostasisConfig spikechip::HomeostasisConfig::from_references(
        const double I_Ca_ref, const double V_H, const double V_M,
        const double V_L, const double time_base)
{
    HomeostasisConfig h;
    h.I_Ca_ref = I_Ca_ref;
    h.V_ref_H = V_H;
    h.V_ref_M = V_M;
    h.V_ref_L = V_L;
    if (V_M > 0.0 && V_L > 0.0 && time_base > 0.0)
    {
        h.rate_up = (V_H / V_M - 1.0) * V_M / time_base;
        h.rate_down = (V_M / V_L - 1.0) * V_M / time_base;
    }
    return h;
}

spikechip::SomaDrive spikechip::soma_input_currents(const double I_dendritic,
        const double I_somatic, const double I_adapt, const SomaConfig &cfg)
{
    const double dc = cfg.dc_enabled ? cfg.I_dc : 0.0;
    const double adapt = cfg.adaptation_enabled ? I_adapt : 0.0;
    return SomaDrive{std::max(I_dendritic + dc - adapt, 0.0),
            cfg.I_leak + std::max(I_somatic, 0.0)};
}

double spikechip::refractory_period(
        const SomaConfig &cfg, const PhysicsConstants &consts)
{
    const double swing = cfg.model == SomaModel::thresholded ?
            1.0 - consts.switch_threshold_fraction :
            cfg.exp_refr_swing;
    if (!(cfg.I_refr > 0.0))
    {
        return std::numeric_limits<double>::infinity();
    }
    return cfg.C_refr * consts.supply_voltage * swing / cfg.I_refr;
}

double spikechip::feedback_pulse_width(
        const SomaConfig &cfg, const PhysicsConstants &consts)
{
    if (!(cfg.I_feedback_pw > 0.0))
    {
        return 0.0;
    }
    return pulse_swing_time(cfg.C_feedback_px, cfg.I_feedback_pw, consts);
}

double spikechip::membrane_voltage(const double I_mem, const PhysicsConstants &consts)
{
    const double I = std::max(I_mem, consts.process_current);
    return current_to_gate_voltage(I, Polarity::n_type, consts);
}

double spikechip::soma_gain_current(const SomaState &state,
        const SomaConfig &cfg, const PhysicsConstants &consts)
{
    if (cfg.homeostasis_enabled &&
            cfg.homeostasis_target == HomeostasisTarget::soma)
    {
        return gate_voltage_to_current(state.V_gain, Polarity::n_type, consts);
    }
    return cfg.I_gain;
}

spikechip::SomaState spikechip::make_soma_state(const SomaConfig &cfg,
        const HomeostasisConfig &hcfg, const PhysicsConstants &)
{
    SomaState s;
    s.V_gain = hcfg.V_ref_M;
    s.feedback_px.mode = PulseMode::basic;
    s.feedback_px.I_pw = cfg.I_feedback_pw > 0.0 ? cfg.I_feedback_pw : 1e-30;
    s.feedback_px.C_px = cfg.C_feedback_px;
    return s;
}

int spikechip::homeostasis_direction(const HomeostasisConfig &hcfg, const double I_Ca)
{
    const double band = hcfg.deadband * hcfg.I_Ca_ref;
    if (I_Ca < hcfg.I_Ca_ref - band)
    {
        return 1;
    }
    if (I_Ca > hcfg.I_Ca_ref + band)
    {
        return -1;
    }
    return 0;
}

spikechip::SomaState spikechip::homeostasis_step(const SomaState &state,
        const SomaConfig &cfg, const HomeostasisConfig &hcfg, const double I_Ca,
        const double dt, const PhysicsConstants &consts)
{
    SomaState next = state;
    if (!cfg.homeostasis_enabled)
    {
        return next;
    }
    if (!cfg.homeostasis_active)
    {
        next.V_gain = hcfg.V_ref_M;
        return next;
    }
    const int dir = homeostasis_direction(hcfg, I_Ca);
    const double rate = dir > 0 ? hcfg.rate_up : (dir < 0 ? -hcfg.rate_down : 0.0);
    next.V_gain = std::clamp(
            state.V_gain + rate * std::max(dt, 0.0), 0.0, consts.supply_voltage);
    return next;
}

spikechip::SomaState spikechip::on_spike_feedback(const SomaState &state,
        const SomaConfig &cfg, const double t, const PhysicsConstants &consts)
{
    SomaState next = state;
    if (!(cfg.I_feedback_pw > 0.0))
    {
        return next;
    }
    next.feedback_px.I_pw = cfg.I_feedback_pw;
    next.feedback_px.C_px = cfg.C_feedback_px;
    next.feedback_px = px_trigger(next.feedback_px, t, consts);
    return next;
}

namespace
{

struct MembraneFlow
{
    double drive = 0.0;
    double rate_normal = 0.0;
    double rate_feedback = 0.0;
    double activation = std::numeric_limits<double>::infinity();
    double target = 0.0;
};

MembraneFlow membrane_flow(const spikechip::SomaDrive &drive, const double gain,
        const spikechip::SomaConfig &cfg, const spikechip::PhysicsConstants &consts)
{
    MembraneFlow f;
    const double I_tau = std::max(drive.I_tau, 1e-30);
    const double tau = cfg.C_mem * consts.thermal_voltage / (consts.kappa * I_tau);
    f.drive = (gain / I_tau) * drive.I_in / tau;
    f.rate_normal = -1.0 / tau;
    if (cfg.model == spikechip::SomaModel::exponential && cfg.exp_feedback_gain > 0.0)
    {
        f.rate_feedback = ((gain / I_tau) * cfg.exp_feedback_gain - 1.0) / tau;
        f.activation = I_tau / cfg.exp_feedback_gain;
        f.target = cfg.I_spkthr * cfg.exp_ceiling_factor;
    }
    else
    {
        f.rate_feedback = f.rate_normal;
        f.target = cfg.model == spikechip::SomaModel::exponential ?
                cfg.I_spkthr * cfg.exp_ceiling_factor :
                cfg.I_spkthr;
    }
    if (cfg.killed)
    {
        f.target = std::numeric_limits<double>::infinity();
        f.rate_feedback = f.rate_normal;
        f.activation = std::numeric_limits<double>::infinity();
    }
    return f;
}

struct MembraneAdvance
{
    double I = 0.0;
    double spike_offset = -1.0; // < 0 when no spike within the horizon
};

// Piecewise closed-form evolution across the feedback activation boundary.
MembraneAdvance advance_membrane(double I, const MembraneFlow &f, const double horizon)
{
    double elapsed = 0.0;
    bool feedback = I >= f.activation;
    for (int iter = 0; iter < 8 && elapsed < horizon; ++iter)
    {
        const double remaining = horizon - elapsed;
        const double rate = feedback ? f.rate_feedback : f.rate_normal;
        const double t_spike =
                spikechip::affine_crossing_time(I, f.drive, rate, f.target, remaining);
        double t_switch = -1.0;
        if (!feedback && std::isfinite(f.activation) && f.activation < f.target)
        {
            t_switch = spikechip::affine_crossing_time(
                    I, f.drive, rate, f.activation, remaining);
        }
        else if (feedback)
        {
            t_switch = spikechip::affine_crossing_time(
                    -I, -f.drive, rate, -f.activation, remaining);
            if (t_switch == 0.0)
            {
                t_switch = -1.0; // sitting on the boundary moving upward
            }
        }
        if (t_spike >= 0.0 && (t_switch < 0.0 || t_spike <= t_switch))
        {
            return MembraneAdvance{f.target, elapsed + t_spike};
        }
        if (t_switch >= 0.0)
        {
            elapsed += t_switch;
            I = f.activation;
            feedback = !feedback;
            continue;
        }
        I = spikechip::affine_advance(I, f.drive, rate, remaining);
        elapsed = horizon;
    }
    return MembraneAdvance{std::max(I, 0.0), -1.0};
}

// General-equation membrane: a scalar autonomous flow, so the trajectory is
// monotone and a crossing is bracketed by the end value.
MembraneAdvance advance_membrane_full(const double I0, const spikechip::SomaDrive &drive,
        const double gain, const spikechip::SomaConfig &cfg,
        const spikechip::PhysicsConstants &consts, const double horizon,
        const spikechip::SomaStepOptions &opts)
{
    const MembraneFlow f = membrane_flow(drive, gain, cfg, consts);
    const double I_tau = std::max(drive.I_tau, 1e-30);
    const double tau = cfg.C_mem * consts.thermal_voltage / (consts.kappa * I_tau);
    const double fb = cfg.model == spikechip::SomaModel::exponential ? cfg.exp_feedback_gain : 0.0;
    const auto rhs = [&](const double I) {
        const double in = drive.I_in + (fb > 0.0 && I >= f.activation ? fb * I : 0.0);
        const double harmonic = gain > 0.0 ? gain * I / (gain + I) : 0.0;
        return ((in / I_tau) * harmonic - I) / tau;
    };
    const auto integrate = [&](const double span) {
        return spikechip::rk4_adaptive(rhs, std::max(I0, opts.full_floor), span,
                opts.full_rtol, opts.full_floor, std::min(span, tau / 8.0));
    };
    const double I_end = integrate(horizon);
    if (!(I_end >= f.target))
    {
        return MembraneAdvance{I_end, -1.0};
    }
    double lo = 0.0;
    double hi = horizon;
    for (int iter = 0; iter < 60 && hi - lo > 1e-13; ++iter)
    {
        const double mid = 0.5 * (lo + hi);
        if (integrate(mid) >= f.target)
        {
            hi = mid;
        }
        else
        {
            lo = mid;
        }
    }
    return MembraneAdvance{f.target, hi};
}

} // namespace

spikechip::SomaStepResult spikechip::soma_step(const SomaState &state,
        const SomaConfig &cfg, const HomeostasisConfig &hcfg,
        const SomaInputs &inputs, const double t0, const double dt,
        const PhysicsConstants &consts, const SomaStepOptions &opts)
{
    SomaStepResult result{state, {}};
    SomaState &s = result.state;
    const double t_end = t0 + std::max(dt, 0.0);
    double t = t0;
    for (int guard = 0; t < t_end && guard < 100000; ++guard)
    {
        double seg_end = t_end;
        const bool px_on = s.feedback_px.active_at(t);
        if (px_on && s.feedback_px.pulse_end < seg_end)
        {
            seg_end = s.feedback_px.pulse_end;
        }
        const bool refractory = t < s.refractory_until;
        if (refractory && s.refractory_until < seg_end)
        {
            seg_end = s.refractory_until;
        }
        double h = seg_end - t;

        const double gain = soma_gain_current(s, cfg, consts);
        const double in_adapt = px_on ? cfg.I_adapt_w : 0.0;
        MembraneAdvance mem{0.0, -1.0};
        if (!refractory)
        {
            // The membrane sees the adaptation current averaged over the
            // segment; refine when a spike shortens it
            double span = h;
            for (int iter = 0; iter < 4; ++iter)
            {
                const double I_adapt = cfg.adaptation_enabled ?
                        dpi_mean(s.adaptation, cfg.adaptation, in_adapt, span, consts) :
                        0.0;
                const SomaDrive drive = soma_input_currents(
                        inputs.I_dendritic, inputs.I_somatic, I_adapt, cfg);
                const MembraneAdvance attempt = opts.full_model ?
                        advance_membrane_full(s.membrane.I_out, drive, gain, cfg,
                                consts, span, opts) :
                        advance_membrane(s.membrane.I_out,
                                membrane_flow(drive, gain, cfg, consts), span);
                if (iter > 0 && attempt.spike_offset < 0.0)
                {
                    break; // keep the previous crossing
                }
                mem = attempt;
                if (mem.spike_offset <= 0.0 || !cfg.adaptation_enabled ||
                        std::abs(mem.spike_offset - span) <= 1e-15 * h)
                {
                    break;
                }
                span = mem.spike_offset;
            }
        }
        const bool spiked = mem.spike_offset >= 0.0;
        if (spiked)
        {
            h = mem.spike_offset;
        }

        const double I_Ca = s.calcium.I_out;
        const double in_ca = px_on ? cfg.I_calcium_w : 0.0;
        s.adaptation = dpi_advance(s.adaptation, cfg.adaptation, in_adapt, h, consts);
        s.calcium = dpi_advance(s.calcium, cfg.calcium, in_ca, h, consts);
        s = homeostasis_step(s, cfg, hcfg, I_Ca, h, consts);
        s.membrane.last_update = t + h;
        t += h;

        const double rest = opts.full_model ? opts.full_floor : 0.0;
        if (spiked)
        {
            s.membrane.I_out = rest;
            s.refractory_until = t + refractory_period(cfg, consts);
            s = on_spike_feedback(s, cfg, t, consts);
            result.spikes.push_back(t);
            if (opts.stop_at_first_spike)
            {
                break;
            }
        }
        else
        {
            s.membrane.I_out = refractory ? rest : mem.I;
        }
    }

    if (opts.end_threshold_tolerance > 0.0 && result.spikes.empty() &&
            !cfg.killed && t >= s.refractory_until)
    {
        const double target = cfg.model == SomaModel::thresholded ?
                cfg.I_spkthr :
                cfg.I_spkthr * cfg.exp_ceiling_factor;
        if (s.membrane.I_out >= target * (1.0 - opts.end_threshold_tolerance))
        {
            s.membrane.I_out = opts.full_model ? opts.full_floor : 0.0;
            s.refractory_until = t + refractory_period(cfg, consts);
            s = on_spike_feedback(s, cfg, t, consts);
            result.spikes.push_back(t);
        }
    }
    return result;
}
