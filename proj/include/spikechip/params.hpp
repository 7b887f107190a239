// params.hpp - on-chip bias generation
//
// Parameter-generator currents (coarse/fine codes), the subthreshold
// current <-> gate-voltage conversion and the flexible multi-bit DAC used
// for synaptic weights and delays.
#ifndef SPIKECHIP_PARAMS_HPP
#define SPIKECHIP_PARAMS_HPP

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace spikechip
{

class ConfigError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

enum class Polarity : uint8_t
{
    n_type,
    p_type,
};

struct PhysicsConstants
{
    double thermal_voltage = 0.025; // U_T [V]
    double kappa = 0.7; // subthreshold slope factor
    double process_current = 0.5e-15; // I_0 [A]
    double supply_voltage = 1.8; // V_dd [V]
    double switch_threshold_fraction = 0.25; // pulse-extender inverter threshold / V_dd

    void validate() const;
    bool operator==(const PhysicsConstants &) const = default;
};

constexpr int coarse_levels = 6;
constexpr int fine_max = 255;
using CoarseTable = std::array<double, coarse_levels>;

// Nominal I_coarse per coarse level [A].
constexpr CoarseTable nominal_coarse_table = {
        70e-12, 550e-12, 4.45e-9, 35e-9, 0.28e-6, 2.25e-6};

struct BiasCode
{
    int coarse = 0;
    int fine = 0;
    double k_parameter = 1.0;

    void validate() const;
    bool operator==(const BiasCode &) const = default;
};

double resolve_bias(const BiasCode &code,
        const CoarseTable &coarse_table = nominal_coarse_table);

// Inverse search: the (coarse, fine) code whose resolved current is closest
// to the target, preferring the lowest coarse level on ties.
BiasCode bias_for_current(double current,
        const CoarseTable &coarse_table = nominal_coarse_table);

double current_to_gate_voltage(
        double current, Polarity polarity, const PhysicsConstants &consts);
double gate_voltage_to_current(
        double voltage, Polarity polarity, const PhysicsConstants &consts);

struct FlexibleDacConfig
{
    std::vector<double> base_currents;
    std::vector<bool> select_bits;
    bool always_on_bit0 = false;

    void validate() const;
};

double flexible_dac_output(const FlexibleDacConfig &cfg);

// Same sum without allocating a config; bits.size() must equal bases.size().
double flexible_dac_output(std::span<const double> bases,
        std::span<const bool> bits, bool always_on_bit0);

} // namespace spikechip

#endif
