// synapse.cpp

#include <cmath>
#include <string>

#include "spikechip/synapse.hpp"

const char *spikechip::dendrite_name(const Dendrite d)
{
    switch (d)
    {
    case Dendrite::ampa:
        return "AMPA";
    case Dendrite::nmda:
        return "NMDA";
    case Dendrite::gaba_b:
        return "GABA_B";
    case Dendrite::gaba_a:
        return "GABA_A";
    }
    return "?";
}

void spikechip::SynapseConfig::validate() const
{
    if (cam_tag > max_tag)
    {
        throw ConfigError("CAM tag " + std::to_string(cam_tag) +
                " does not fit in 11 bits");
    }
    int selected = 0;
    for (const bool s : dendrite_select)
    {
        selected += s ? 1 : 0;
    }
    if (selected > 1)
    {
        throw ConfigError("synapse selects more than one dendrite");
    }
}

std::optional<spikechip::Dendrite> spikechip::SynapseConfig::target() const
{
    for (int i = 0; i < dendrite_count; ++i)
    {
        if (dendrite_select[i])
        {
            return static_cast<Dendrite>(i);
        }
    }
    return std::nullopt;
}

void spikechip::SynapseConfig::set_target(const std::optional<Dendrite> d)
{
    dendrite_select.fill(false);
    if (d.has_value())
    {
        dendrite_select[static_cast<int>(*d)] = true;
    }
}

double spikechip::stp_weight(const StpState &stp, const PhysicsConstants &consts)
{
    return gate_voltage_to_current(stp.V_stp, Polarity::n_type, consts);
}

double spikechip::synapse_weight_current(const SynapseConfig &cfg,
        const std::span<const double, 4> base_weights, const StpState *stp,
        const PhysicsConstants &consts)
{
    if (cfg.stp_enabled && stp != nullptr)
    {
        return stp_weight(*stp, consts);
    }
    return flexible_dac_output(base_weights, cfg.weight_bits, false);
}

double spikechip::synapse_delay_current(const SynapseConfig &cfg,
        const DelayBases &bases, const DelayFactors &factors)
{
    // x_0 is hard-wired on: I_dly0 always contributes
    double I = bases.I_dly0 * factors.dly0;
    if (cfg.precise_delay)
    {
        I += bases.I_dly1 * factors.dly1;
    }
    if (cfg.mismatched_delay)
    {
        I += bases.I_dly2 * factors.dly2;
    }
    return I;
}

double spikechip::synapse_delay_time(const SynapseConfig &cfg,
        const DelayBases &bases, const DelayFactors &factors, const double C_px,
        const PhysicsConstants &consts)
{
    if (!(bases.I_dly0 > 0.0))
    {
        throw ConfigError("SYPD_DLY0 must be positive");
    }
    return pulse_swing_time(
            C_px, synapse_delay_current(cfg, bases, factors), consts);
}

spikechip::StpState spikechip::stp_on_pulse(
        const StpState &state, const double pulse_width)
{
    StpState next = state;
    if (pulse_width <= 0.0)
    {
        return next;
    }
    next.V_stp = std::max(
            state.V_stp - state.I_stpstr * pulse_width / state.C_stp, 0.0);
    return next;
}

spikechip::StpState spikechip::stp_recover(const StpState &state, const double dt)
{
    StpState next = state;
    if (dt <= 0.0)
    {
        return next;
    }
    next.V_stp = state.V_stpw +
            (state.V_stp - state.V_stpw) * std::exp(-dt / state.tau_recovery);
    return next;
}
