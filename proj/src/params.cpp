// params.cpp

#include <cmath>
#include <limits>
#include <string>

#include "spikechip/params.hpp"

void spikechip::PhysicsConstants::validate() const
{
    if (!(thermal_voltage > 0.0))
    {
        throw ConfigError("thermal voltage must be positive");
    }
    if (!(kappa > 0.0 && kappa <= 1.0))
    {
        throw ConfigError("kappa must lie in (0, 1]");
    }
    if (!(process_current > 0.0))
    {
        throw ConfigError("process current I_0 must be positive");
    }
    if (!(supply_voltage > 0.0))
    {
        throw ConfigError("supply voltage must be positive");
    }
    if (!(switch_threshold_fraction > 0.0 && switch_threshold_fraction < 1.0))
    {
        throw ConfigError("switch threshold fraction must lie in (0, 1)");
    }
}

void spikechip::BiasCode::validate() const
{
    if (coarse < 0 || coarse >= coarse_levels)
    {
        throw ConfigError("coarse value " + std::to_string(coarse) +
                " out of range [0, 5]");
    }
    if (fine < 0 || fine > fine_max)
    {
        throw ConfigError(
                "fine value " + std::to_string(fine) + " out of range [0, 255]");
    }
    if (!(k_parameter > 0.0))
    {
        throw ConfigError("k_parameter must be positive");
    }
}

double spikechip::resolve_bias(
        const BiasCode &code, const CoarseTable &coarse_table)
{
    code.validate();
    return code.k_parameter * coarse_table[code.coarse] *
            (static_cast<double>(code.fine) / fine_max);
}

spikechip::BiasCode spikechip::bias_for_current(
        const double current, const CoarseTable &coarse_table)
{
    BiasCode best{};
    double best_err = std::numeric_limits<double>::infinity();
    for (int coarse = 0; coarse < coarse_levels; ++coarse)
    {
        const double step = coarse_table[coarse] / fine_max;
        const long fine = std::lround(current / step);
        if (fine < 0 || fine > fine_max)
        {
            continue;
        }
        const double err = std::abs(static_cast<double>(fine) * step - current);
        // Relative tolerance so equal-error ties keep the lowest coarse level
        if (err < best_err * (1.0 - 1e-12))
        {
            best_err = err;
            best = BiasCode{coarse, static_cast<int>(fine), 1.0};
        }
    }
    if (!std::isfinite(best_err))
    {
        throw ConfigError("current " + std::to_string(current) +
                " A is outside the parameter generator range");
    }
    return best;
}

double spikechip::current_to_gate_voltage(const double current,
        const Polarity polarity, const PhysicsConstants &consts)
{
    if (!(current > 0.0))
    {
        throw DomainError("gate voltage requires a positive current");
    }
    const double v = (consts.thermal_voltage / consts.kappa) *
            std::log(current / consts.process_current);
    return polarity == Polarity::n_type ? v : consts.supply_voltage - v;
}

double spikechip::gate_voltage_to_current(const double voltage,
        const Polarity polarity, const PhysicsConstants &consts)
{
    const double v = polarity == Polarity::n_type ?
            voltage :
            consts.supply_voltage - voltage;
    return consts.process_current *
            std::exp(consts.kappa * v / consts.thermal_voltage);
}

void spikechip::FlexibleDacConfig::validate() const
{
    if (base_currents.size() != select_bits.size())
    {
        throw ConfigError("flexible DAC: base current and select bit counts "
                          "differ");
    }
    for (const double base : base_currents)
    {
        if (!(base >= 0.0))
        {
            throw ConfigError("flexible DAC: negative base current");
        }
    }
}

double spikechip::flexible_dac_output(const FlexibleDacConfig &cfg)
{
    cfg.validate();
    double out = 0.0;
    for (std::size_t i = 0; i < cfg.base_currents.size(); ++i)
    {
        const bool on = cfg.select_bits[i] || (i == 0 && cfg.always_on_bit0);
        if (on)
        {
            out += cfg.base_currents[i];
        }
    }
    return out;
}

double spikechip::flexible_dac_output(const std::span<const double> bases,
        const std::span<const bool> bits, const bool always_on_bit0)
{
    double out = 0.0;
    for (std::size_t i = 0; i < bases.size(); ++i)
    {
        if (bits[i] || (i == 0 && always_on_bit0))
        {
            out += bases[i];
        }
    }
    return out;
}
