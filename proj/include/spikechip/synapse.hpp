// synapse.hpp - per-neuron synapse units
//
// CAM tag matching, the 4-bit weight DAC, the 2-bit delay DAC with its four
// delay groups, and short-term depression.
#ifndef SPIKECHIP_SYNAPSE_HPP
#define SPIKECHIP_SYNAPSE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "spikechip/kernels.hpp"
#include "spikechip/params.hpp"

namespace spikechip
{

constexpr int synapses_per_neuron = 64;
constexpr int tag_bits = 11;
constexpr uint16_t max_tag = (1U << tag_bits) - 1U;

enum class Dendrite : uint8_t
{
    ampa = 0,
    nmda = 1,
    gaba_b = 2,
    gaba_a = 3,
};
constexpr int dendrite_count = 4;

const char *dendrite_name(Dendrite d);

struct SynapseConfig
{
    uint16_t cam_tag = 0;
    std::array<bool, 4> weight_bits{};
    bool precise_delay = false;
    bool mismatched_delay = false;
    bool stp_enabled = false;
    // One-hot dendrite selection; all false means disconnected
    std::array<bool, dendrite_count> dendrite_select{};

    void validate() const;
    std::optional<Dendrite> target() const;
    void set_target(std::optional<Dendrite> d);
    bool operator==(const SynapseConfig &) const = default;
};

struct StpState
{
    double V_stp = 0.0;
    double V_stpw = 0.0; // steady-state bias voltage
    double I_stpstr = 0.0;
    double tau_recovery = 50e-3;
    double C_stp = 1e-12;
};

struct DelayBases
{
    double I_dly0 = 0.0;
    double I_dly1 = 0.0;
    double I_dly2 = 0.0;
};

// Per-synapse multiplicative mismatch factors of the three delay bases.
struct DelayFactors
{
    double dly0 = 1.0;
    double dly1 = 1.0;
    double dly2 = 1.0;
};

constexpr bool cam_match(const uint16_t broadcast_tag, const uint16_t cam_tag)
{
    return broadcast_tag == cam_tag;
}

double stp_weight(const StpState &stp, const PhysicsConstants &consts);

double synapse_weight_current(const SynapseConfig &cfg,
        std::span<const double, 4> base_weights, const StpState *stp,
        const PhysicsConstants &consts);

double synapse_delay_current(const SynapseConfig &cfg,
        const DelayBases &bases, const DelayFactors &factors = {});

double synapse_delay_time(const SynapseConfig &cfg, const DelayBases &bases,
        const DelayFactors &factors, double C_px,
        const PhysicsConstants &consts);

StpState stp_on_pulse(const StpState &state, double pulse_width);
StpState stp_recover(const StpState &state, double dt);

} // namespace spikechip

#endif
