// chip_config.hpp - configuration tree of a chip grid
//
// Grid -> chip -> core -> neuron -> {SRAM entries, synapses}. Biases are
// per core and named by their on-chip mnemonics; latches are per neuron
// except DE_MUX, which is per core.
#ifndef SPIKECHIP_CHIP_CONFIG_HPP
#define SPIKECHIP_CHIP_CONFIG_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spikechip/params.hpp"
#include "spikechip/routing.hpp"
#include "spikechip/sensor.hpp"
#include "spikechip/synapse.hpp"

namespace spikechip
{

constexpr int config_schema_version = 1;

enum class BiasKind : uint8_t
{
    current, // used as the resolved current
    voltage, // used as the N-type gate voltage of the resolved current
    conductance, // pseudo-resistor conductance kappa * I / U_T
};

struct BiasSpec
{
    const char *name;
    BiasKind kind;
    BiasCode nominal;
};

// Every core bias with its nominal-chip code.
const std::vector<BiasSpec> &core_bias_table();
const BiasSpec *find_bias(const std::string &name);

struct NeuronLatches
{
    bool SOIF_TYPE = false; // 1 = exponential model
    bool SOIF_KILL = false;
    bool SO_DC = false;
    bool SO_ADAPTATION = false;
    bool HO_ENABLE = false;
    bool HO_ACTIVE = false;
    bool HO_SO_DE = false; // 1 = homeostasis drives the NMDA gain
    bool COHO_CA_MEM = false; // 1 = conductance blocks use V_Ca
    bool DEAM_ALPHA = false;
    bool DENM_ALPHA = false;
    bool DEAM_CONDUCTANCE = false;
    bool DENM_CONDUCTANCE = false;
    bool DEGA_CONDUCTANCE = false;
    bool DEAM_AMPA = false; // diffusion
    bool DENM_NMDA = false; // membrane gating

    bool operator==(const NeuronLatches &) const = default;
};

// Name -> member table for latch access by mnemonic.
const std::vector<std::pair<const char *, bool NeuronLatches::*>> &latch_table();
bool *find_latch(NeuronLatches &latches, const std::string &name);
const bool *find_latch(const NeuronLatches &latches, const std::string &name);

struct NeuronConfig
{
    NeuronLatches latches{};
    std::array<SramEntry, sram_entries> srams{};
    std::array<SynapseConfig, synapses_per_neuron> synapses{};

    bool operator==(const NeuronConfig &) const = default;
};

struct CoreConfig
{
    std::map<std::string, BiasCode> biases; // missing names use the nominal code
    bool de_mux = false;
    std::array<NeuronConfig, neurons_per_core> neurons{};

    BiasCode bias_code(const std::string &name) const;
    void set_bias(const std::string &name, const BiasCode &code);
    bool operator==(const CoreConfig &) const = default;
};

struct ChipConfig
{
    std::array<CoreConfig, cores_per_chip> cores{};
    std::optional<SensorPipelineConfig> sensor;

    bool operator==(const ChipConfig &) const = default;
};

struct AnalogConfig
{
    PhysicsConstants physics{};
    CoarseTable coarse_table = nominal_coarse_table;
    double C_mem = 7.72e-12;
    double C_refr = 2e-12;
    double C_feedback_px = 2e-12;
    double C_synapse_px = 2e-12;
    double C_dendrite = 1e-12;
    double C_adaptation = 1e-12;
    double C_calcium = 1e-12;
    double C_stp = 1e-12;
    double stp_tau_recovery = 50e-3;
    double exp_feedback_gain = 4.0;
    double exp_ceiling_factor = 1000.0;
    double exp_refr_swing = 0.355;
    double homeostasis_time_base = 1.0;
    double homeostasis_deadband = 0.01;
    double energy_thresholded_pJ = 150.0;
    double energy_exponential_pJ = 300.0;

    void validate() const;
    bool operator==(const AnalogConfig &) const = default;
};

enum class EngineMode : uint8_t
{
    closed,
    full,
};

struct EngineConfig
{
    int64_t max_step_ns = 20000;
    int64_t link_latency_ns = 0;
    EngineMode mode = EngineMode::closed;
    double full_rtol = 1e-8;
    double full_floor = 1e-21;

    void validate() const;
    bool operator==(const EngineConfig &) const = default;
};

struct MismatchConfig
{
    bool enabled = false;
    uint64_t seed = 1;
    std::map<std::string, double> cv = {
            {"dly0", 0.054},
            {"dly1", 0.067},
            {"dly2", 0.371},
            {"leak", 0.111},
            {"refr", 0.063},
            {"weight", 0.0},
            {"pulse", 0.0},
            {"gain", 0.0},
            {"spkthr", 0.0},
            {"dc", 0.0},
            {"tau", 0.0},
            {"cmem", 0.0},
    };

    void validate() const;
    bool operator==(const MismatchConfig &) const = default;
};

enum class MonitorSource : uint8_t
{
    external,
    membrane,
    refractory,
    calibration,
    adaptation,
    calcium,
    dendritic,
    synapse_weight,
    homeo_gain,
};

const char *monitor_source_name(MonitorSource s);
MonitorSource parse_monitor_source(const std::string &name);

enum class MonitorKind : uint8_t
{
    sadc, // counts per window
    probe, // instantaneous value each interval
};

struct MonitorTap
{
    MonitorKind kind = MonitorKind::sadc;
    int channel = 0; // sADC channel 0-63 per chip; probes use it as an id
    int group = 0; // sADC group 0, 1 or 2
    MonitorSource source = MonitorSource::membrane;
    ChipCoord chip{};
    int core = 0;
    int neuron = 0;
    Dendrite branch = Dendrite::ampa; // dendritic source
    int synapse = 20; // synapse_weight source: 20 or 41
    double gain = 1e12; // sADC [Hz/A]
    int64_t interval_ns = 1000000; // sampling period
    int window_samples = 10; // sADC window = interval * window_samples
    double constant_value = 0.0; // external / calibration channels [A]

    void validate() const;
    std::string label() const;
    bool operator==(const MonitorTap &) const = default;
};

// Group allowed for each sADC source.
bool sadc_group_allows(int group, MonitorSource source);

struct ChipGridConfig
{
    int width = 1;
    int height = 1;
    std::vector<ChipConfig> chips = std::vector<ChipConfig>(1);
    AnalogConfig analog{};
    EngineConfig engine{};
    MismatchConfig mismatch{};
    std::vector<MonitorTap> monitors;

    // Throws ConfigError on the first structural violation.
    void validate() const;
    int chip_index(ChipCoord c) const;
    ChipConfig &chip(ChipCoord c);
    const ChipConfig &chip(ChipCoord c) const;
    double bias_current(ChipCoord c, int core, const std::string &name) const;
    bool operator==(const ChipGridConfig &) const = default;
};

ChipGridConfig make_grid(int width, int height);

// Resolved value of a bias in the unit its kind implies.
double bias_value(const BiasSpec &spec, const BiasCode &code,
        const AnalogConfig &analog);

} // namespace spikechip

#endif
