// chip_config.cpp

#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "spikechip/chip_config.hpp"
#include "spikechip/dendrite.hpp"

const std::vector<spikechip::BiasSpec> &spikechip::core_bias_table()
{
    using K = BiasKind;
    // Leak and refractory codes carry the calibration factor that puts
    // them on 0.834 pA and 1.71 pA.
    static const std::vector<BiasSpec> table = {
            {"SOIF_LEAK", K::current, {0, 3, 1.01275}},
            {"SOIF_GAIN", K::current, {0, 36, 1.0}},
            {"SOIF_REFR", K::current, {0, 6, 1.03825}},
            {"SOIF_DC", K::current, {0, 0, 1.0}},
            {"SOIF_SPKTHR", K::current, {2, 34, 1.0}},
            {"SOAD_PWTAU", K::current, {2, 155, 1.0}},
            {"SOAD_W", K::current, {0, 0, 1.0}},
            {"SOAD_GAIN", K::current, {0, 13, 1.0}},
            {"SOAD_TAU", K::current, {0, 13, 1.0}},
            {"SOCA_W", K::current, {0, 0, 1.0}},
            {"SOCA_GAIN", K::current, {0, 13, 1.0}},
            {"SOCA_TAU", K::current, {0, 13, 1.0}},
            {"SOHO_VREF", K::current, {0, 0, 1.0}},
            {"SOHO_VREF_H", K::voltage, {0, 9, 1.0}},
            {"SOHO_VREF_M", K::voltage, {0, 8, 1.0}},
            {"SOHO_VREF_L", K::voltage, {0, 7, 1.0}},
            {"SYPD_EXT", K::current, {2, 155, 1.0}},
            {"SYPD_DLY0", K::current, {5, 255, 1.0}},
            {"SYPD_DLY1", K::current, {5, 255, 1.0}},
            {"SYPD_DLY2", K::current, {5, 255, 1.0}},
            {"SYAN_STDW", K::voltage, {1, 100, 1.0}},
            {"SYAN_STDSTR", K::current, {0, 0, 1.0}},
            {"SYAM_W0", K::current, {0, 0, 1.0}},
            {"SYAM_W1", K::current, {0, 0, 1.0}},
            {"SYAM_W2", K::current, {0, 0, 1.0}},
            {"SYAM_W3", K::current, {0, 0, 1.0}},
            {"DEAM_ETAU", K::current, {0, 13, 1.0}},
            {"DEAM_EGAIN", K::current, {0, 13, 1.0}},
            {"DEAM_ITAU", K::current, {0, 13, 1.0}},
            {"DEAM_IGAIN", K::current, {0, 0, 1.0}},
            {"DENM_ETAU", K::current, {0, 13, 1.0}},
            {"DENM_EGAIN", K::current, {0, 13, 1.0}},
            {"DENM_ITAU", K::current, {0, 13, 1.0}},
            {"DENM_IGAIN", K::current, {0, 0, 1.0}},
            {"DEGA_TAU", K::current, {0, 13, 1.0}},
            {"DEGA_GAIN", K::current, {0, 13, 1.0}},
            {"DESC_TAU", K::current, {0, 13, 1.0}},
            {"DESC_GAIN", K::current, {0, 13, 1.0}},
            {"DEAM_REV", K::voltage, {2, 100, 1.0}},
            {"DENM_REV", K::voltage, {2, 100, 1.0}},
            {"DEGA_REV", K::voltage, {2, 100, 1.0}},
            {"DENM_NMREV", K::voltage, {1, 100, 1.0}},
            {"DEAM_NRES", K::conductance, {2, 57, 1.0}},
            {"DEAM_HRES", K::conductance, {2, 57, 1.0}},
            {"DEAM_VRES", K::conductance, {2, 57, 1.0}},
    };
    return table;
}

const spikechip::BiasSpec *spikechip::find_bias(const std::string &name)
{
    for (const auto &b : core_bias_table())
    {
        if (name == b.name)
        {
            return &b;
        }
    }
    return nullptr;
}

const std::vector<std::pair<const char *, bool spikechip::NeuronLatches::*>> &
spikechip::latch_table()
{
    using L = NeuronLatches;
    static const std::vector<std::pair<const char *, bool L::*>> table = {
            {"SOIF_TYPE", &L::SOIF_TYPE},
            {"SOIF_KILL", &L::SOIF_KILL},
            {"SO_DC", &L::SO_DC},
            {"SO_ADAPTATION", &L::SO_ADAPTATION},
            {"HO_ENABLE", &L::HO_ENABLE},
            {"HO_ACTIVE", &L::HO_ACTIVE},
            {"HO_SO_DE", &L::HO_SO_DE},
            {"COHO_CA_MEM", &L::COHO_CA_MEM},
            {"DEAM_ALPHA", &L::DEAM_ALPHA},
            {"DENM_ALPHA", &L::DENM_ALPHA},
            {"DEAM_CONDUCTANCE", &L::DEAM_CONDUCTANCE},
            {"DENM_CONDUCTANCE", &L::DENM_CONDUCTANCE},
            {"DEGA_CONDUCTANCE", &L::DEGA_CONDUCTANCE},
            {"DEAM_AMPA", &L::DEAM_AMPA},
            {"DENM_NMDA", &L::DENM_NMDA},
    };
    return table;
}

bool *spikechip::find_latch(NeuronLatches &latches, const std::string &name)
{
    for (const auto &[n, member] : latch_table())
    {
        if (name == n)
        {
            return &(latches.*member);
        }
    }
    return nullptr;
}

const bool *spikechip::find_latch(const NeuronLatches &latches, const std::string &name)
{
    for (const auto &[n, member] : latch_table())
    {
        if (name == n)
        {
            return &(latches.*member);
        }
    }
    return nullptr;
}

spikechip::BiasCode spikechip::CoreConfig::bias_code(const std::string &name) const
{
    const auto it = biases.find(name);
    if (it != biases.end())
    {
        return it->second;
    }
    const BiasSpec *spec = find_bias(name);
    if (spec == nullptr)
    {
        throw ConfigError("unknown bias '" + name + "'");
    }
    return spec->nominal;
}

void spikechip::CoreConfig::set_bias(const std::string &name, const BiasCode &code)
{
    if (find_bias(name) == nullptr)
    {
        throw ConfigError("unknown bias '" + name + "'");
    }
    code.validate();
    biases[name] = code;
}

void spikechip::AnalogConfig::validate() const
{
    physics.validate();
    for (const double c : coarse_table)
    {
        if (!(c > 0.0))
        {
            throw ConfigError("coarse table entries must be positive");
        }
    }
    for (const double c : {C_mem, C_refr, C_feedback_px, C_synapse_px, C_dendrite,
                 C_adaptation, C_calcium, C_stp})
    {
        if (!(c > 0.0))
        {
            throw ConfigError("capacitances must be positive");
        }
    }
    if (!(stp_tau_recovery > 0.0) || !(homeostasis_time_base > 0.0))
    {
        throw ConfigError("time constants must be positive");
    }
    if (exp_feedback_gain < 0.0 || !(exp_ceiling_factor > 0.0) ||
            !(exp_refr_swing > 0.0) || exp_refr_swing > 1.0)
    {
        throw ConfigError("exponential model parameters out of range");
    }
    if (homeostasis_deadband < 0.0 || energy_thresholded_pJ < 0.0 ||
            energy_exponential_pJ < 0.0)
    {
        throw ConfigError("deadband and energy constants must be non-negative");
    }
}

void spikechip::EngineConfig::validate() const
{
    if (max_step_ns < 1)
    {
        throw ConfigError("max_step_ns must be at least 1");
    }
    if (link_latency_ns < 0)
    {
        throw ConfigError("link_latency_ns must be non-negative");
    }
    if (!(full_rtol > 0.0) || !(full_floor > 0.0))
    {
        throw ConfigError("full-mode tolerance and floor must be positive");
    }
}

void spikechip::MismatchConfig::validate() const
{
    for (const auto &[name, cv] : cv)
    {
        if (!(cv >= 0.0) || !std::isfinite(cv))
        {
            throw ConfigError("mismatch CV for '" + name + "' must be non-negative");
        }
    }
}

const char *spikechip::monitor_source_name(const MonitorSource s)
{
    switch (s)
    {
    case MonitorSource::external:
        return "external";
    case MonitorSource::membrane:
        return "membrane";
    case MonitorSource::refractory:
        return "refractory";
    case MonitorSource::calibration:
        return "calibration";
    case MonitorSource::adaptation:
        return "adaptation";
    case MonitorSource::calcium:
        return "calcium";
    case MonitorSource::dendritic:
        return "dendritic";
    case MonitorSource::synapse_weight:
        return "synapse_weight";
    case MonitorSource::homeo_gain:
        return "homeo_gain";
    }
    return "?";
}

spikechip::MonitorSource spikechip::parse_monitor_source(const std::string &name)
{
    for (int i = 0; i <= static_cast<int>(MonitorSource::homeo_gain); ++i)
    {
        const auto s = static_cast<MonitorSource>(i);
        if (name == monitor_source_name(s))
        {
            return s;
        }
    }
    throw ConfigError("unknown monitor source '" + name + "'");
}

bool spikechip::sadc_group_allows(const int group, const MonitorSource source)
{
    using S = MonitorSource;
    switch (group)
    {
    case 0:
        return source == S::external || source == S::membrane || source == S::refractory;
    case 1:
        return source == S::calibration || source == S::adaptation ||
                source == S::calcium || source == S::dendritic;
    case 2:
        return source == S::calibration || source == S::synapse_weight ||
                source == S::homeo_gain;
    default:
        return false;
    }
}

void spikechip::MonitorTap::validate() const
{
    if (core < 0 || core >= cores_per_chip || neuron < 0 || neuron >= neurons_per_core)
    {
        throw ConfigError("monitor tap core/neuron out of range");
    }
    if (interval_ns < 1)
    {
        throw ConfigError("monitor interval must be at least 1 ns");
    }
    if (source == MonitorSource::synapse_weight && synapse != 20 && synapse != 41)
    {
        throw ConfigError("only synapses 20 and 41 can be monitored");
    }
    if (kind == MonitorKind::sadc)
    {
        if (channel < 0 || channel > 63)
        {
            throw ConfigError("sADC channel must lie in 0-63");
        }
        if (!sadc_group_allows(group, source))
        {
            throw ConfigError(std::string("sADC group ") + std::to_string(group) +
                    " cannot monitor " + monitor_source_name(source));
        }
        if (!(gain > 0.0))
        {
            throw ConfigError("sADC gain must be positive");
        }
        if (window_samples < 1)
        {
            throw ConfigError("sADC window must hold at least one sample");
        }
    }
}

std::string spikechip::MonitorTap::label() const
{
    std::string s = kind == MonitorKind::sadc ? "sadc" : "probe";
    s += std::to_string(channel) + "_chip" + std::to_string(chip.x) + "_" +
            std::to_string(chip.y) + "_core" + std::to_string(core) + "_n" +
            std::to_string(neuron) + "_" + monitor_source_name(source);
    if (source == MonitorSource::dendritic)
    {
        s += std::string("_") + dendrite_name(branch);
    }
    if (source == MonitorSource::synapse_weight)
    {
        s += "_syn" + std::to_string(synapse);
    }
    return s;
}

int spikechip::ChipGridConfig::chip_index(const ChipCoord c) const
{
    if (c.x < 0 || c.y < 0 || c.x >= width || c.y >= height)
    {
        return -1;
    }
    return c.y * width + c.x;
}

spikechip::ChipConfig &spikechip::ChipGridConfig::chip(const ChipCoord c)
{
    const int i = chip_index(c);
    if (i < 0 || i >= static_cast<int>(chips.size()))
    {
        throw ConfigError("chip (" + std::to_string(c.x) + ", " + std::to_string(c.y) +
                ") is outside the grid");
    }
    return chips[i];
}

const spikechip::ChipConfig &spikechip::ChipGridConfig::chip(const ChipCoord c) const
{
    return const_cast<ChipGridConfig *>(this)->chip(c);
}

double spikechip::bias_value(
        const BiasSpec &spec, const BiasCode &code, const AnalogConfig &analog)
{
    const double I = resolve_bias(code, analog.coarse_table);
    switch (spec.kind)
    {
    case BiasKind::current:
        return I;
    case BiasKind::voltage:
        return I > 0.0 ? current_to_gate_voltage(I, Polarity::n_type, analog.physics) : 0.0;
    case BiasKind::conductance:
        return pseudo_resistor_conductance(I, analog.physics);
    }
    return I;
}

double spikechip::ChipGridConfig::bias_current(
        const ChipCoord c, const int core, const std::string &name) const
{
    const BiasSpec *spec = find_bias(name);
    if (spec == nullptr)
    {
        throw ConfigError("unknown bias '" + name + "'");
    }
    return bias_value(*spec, chip(c).cores.at(core).bias_code(name), analog);
}

void spikechip::ChipGridConfig::validate() const
{
    if (width < 1 || height < 1 || width > 16 || height > 16)
    {
        throw ConfigError("grid dimensions must lie within 1x1 and 16x16");
    }
    if (static_cast<int>(chips.size()) != width * height)
    {
        throw ConfigError("grid holds " + std::to_string(chips.size()) +
                " chips, expected " + std::to_string(width * height));
    }
    analog.validate();
    engine.validate();
    mismatch.validate();
    for (std::size_t ci = 0; ci < chips.size(); ++ci)
    {
        const ChipConfig &chip = chips[ci];
        const std::string chip_name = "chip" + std::to_string(ci);
        for (int c = 0; c < cores_per_chip; ++c)
        {
            const CoreConfig &core = chip.cores[c];
            const std::string where = chip_name + "/core" + std::to_string(c);
            for (const auto &[name, code] : core.biases)
            {
                if (find_bias(name) == nullptr)
                {
                    throw ConfigError(where + ": unknown bias '" + name + "'");
                }
                try
                {
                    code.validate();
                }
                catch (const ConfigError &e)
                {
                    throw ConfigError(where + "/" + name + ": " + e.what());
                }
            }
            for (int n = 0; n < neurons_per_core; ++n)
            {
                const NeuronConfig &neuron = core.neurons[n];
                for (int k = 0; k < sram_entries; ++k)
                {
                    try
                    {
                        neuron.srams[k].validate();
                    }
                    catch (const std::invalid_argument &e)
                    {
                        throw ConfigError(where + "/n" + std::to_string(n) + "/sram" +
                                std::to_string(k) + ": " + e.what());
                    }
                }
                for (int s = 0; s < synapses_per_neuron; ++s)
                {
                    try
                    {
                        neuron.synapses[s].validate();
                    }
                    catch (const ConfigError &e)
                    {
                        throw ConfigError(where + "/n" + std::to_string(n) + "/syn" +
                                std::to_string(s) + ": " + e.what());
                    }
                }
            }
        }
        if (chip.sensor.has_value())
        {
            chip.sensor->validate();
        }
    }
    std::set<std::tuple<int, int, int>> sadc_channels;
    std::set<std::tuple<int, int, int>> membrane_probes;
    std::map<std::tuple<int, int, int>, double> group_gain;
    for (const MonitorTap &tap : monitors)
    {
        tap.validate();
        if (chip_index(tap.chip) < 0)
        {
            throw ConfigError("monitor tap " + tap.label() + " is outside the grid");
        }
        if (tap.kind == MonitorKind::sadc)
        {
            if (!sadc_channels.insert({tap.chip.x, tap.chip.y, tap.channel}).second)
            {
                throw ConfigError("sADC channel " + std::to_string(tap.channel) +
                        " used twice on one chip");
            }
            const auto key = std::make_tuple(tap.chip.x, tap.chip.y, tap.group);
            const auto it = group_gain.find(key);
            if (it != group_gain.end() && it->second != tap.gain)
            {
                throw ConfigError("sADC group " + std::to_string(tap.group) +
                        " has conflicting gains on one chip");
            }
            group_gain[key] = tap.gain;
        }
        else if (tap.source == MonitorSource::membrane)
        {
            if (!membrane_probes.insert({tap.chip.x, tap.chip.y, tap.core}).second)
            {
                throw ConfigError("only one directly monitored membrane per core");
            }
        }
    }
}

spikechip::ChipGridConfig spikechip::make_grid(const int width, const int height)
{
    ChipGridConfig g;
    g.width = width;
    g.height = height;
    g.chips.assign(static_cast<std::size_t>(std::max(width * height, 0)), ChipConfig{});
    return g;
}
