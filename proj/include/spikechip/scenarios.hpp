// scenarios.hpp - shipped demonstration scenarios
//
// Each scenario builds a single-core configuration from a fixed parameter
// set, drives it with a fixed input schedule and extracts the measurements
// its demo plots. All of them use neuron 0 of core 0 on chip (0,0) except
// diffusion, which uses the first row of 16 neurons.
#ifndef SPIKECHIP_SCENARIOS_HPP
#define SPIKECHIP_SCENARIOS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikechip/dendrite.hpp"
#include "spikechip/engine.hpp"

namespace spikechip
{

struct ScenarioRun
{
    std::string name;
    ChipGridConfig config;
    std::vector<InputEvent> inputs;
    SimulationReport report;
};

// Poisson train of one word: exponential gaps from a 64-bit Mersenne
// Twister, so the schedule is identical on every host.
std::vector<InputEvent> poisson_train(double rate_hz, double duration_s, uint64_t seed,
        uint32_t word, ChipCoord chip = {});

// Time constant C * U_T / (kappa * I) of a DPI or leak current.
double dpi_time_constant(double capacitance, double I_tau, const PhysicsConstants &consts);

// ---- spike-frequency adaptation ------------------------------------------

struct AdaptationResult
{
    ScenarioRun run;
    int64_t input_off_ns = 0; // SO_DC is cleared here
    double tau_adaptation = 0.0; // [s]
    std::vector<int64_t> spike_times;
    std::vector<double> rates; // 1 / ISI [Hz], one per interval
    double I_adapt_at_off = 0.0;
    double I_adapt_after = 0.0; // at input_off + 5 tau
};

ChipGridConfig adaptation_config();
AdaptationResult run_adaptation();

// ---- homeostatic gain control --------------------------------------------

struct HomeostasisResult
{
    ScenarioRun run;
    double I_Ca_ref = 0.0;
    double window_s = 0.0; // sADC calcium window
    double reference_counts = 0.0; // I_Ca_ref in sADC counts
    std::vector<double> calcium_counts; // one reading per window
    double initial_gain = 0.0; // soma gain current at t = 0
    double settled_gain = 0.0; // mean gain over the second half
    // dV_gain/dt sign checks on 1 ms intervals whose calcium stays on one
    // side of the reference band
    uint64_t direction_checks = 0;
    uint64_t direction_violations = 0;
};

constexpr uint64_t homeostasis_seed = 15;
constexpr double homeostasis_duration_s = 30.0;

ChipGridConfig homeostasis_config();
HomeostasisResult run_homeostasis(uint64_t seed = homeostasis_seed,
        double duration_s = homeostasis_duration_s);

// ---- dendritic order detection -------------------------------------------

enum class OrderMechanism : uint8_t
{
    conductance,
    alpha,
    nmda,
};

const char *order_mechanism_name(OrderMechanism m);

struct OrderResult
{
    OrderMechanism mechanism = OrderMechanism::conductance;
    ScenarioRun run;
    int64_t gap_ns = 0; // A then B after gap_ns
    int64_t reversed_at_ns = 0; // B, then A after gap_ns
    int forward_spikes = 0; // in [0, reversed_at)
    int reversed_spikes = 0; // in [reversed_at, end)
};

// Input A reaches synapse 0 (tag 1, AMPA) and B synapse 1 (tag 2, NMDA).
ChipGridConfig order_config(OrderMechanism m);
OrderResult run_order_detection(OrderMechanism m);

// ---- AMPA diffusion ------------------------------------------------------

struct DiffusionResult
{
    ScenarioRun run;
    int injected_node = 0;
    double injected_current = 0.0; // synaptic pulse current entering node
    std::vector<double> outputs; // AMPA input of each row node during the pulse
    std::vector<double> peak_membrane; // peak V_mem per node [V]
    DiffusionGridConfig grid; // equivalent 16 x 1 grid
};

constexpr int diffusion_nodes = 16;

ChipGridConfig diffusion_config();
DiffusionResult run_diffusion();

// ---- short-term depression -----------------------------------------------

struct StpResult
{
    ScenarioRun run;
    std::vector<int64_t> pulse_times;
    std::vector<double> peaks; // max AMPA output after each pulse
    double baseline_weight = 0.0;
    int64_t input_end_ns = 0;
    double weight_at_end = 0.0;
    double weight_recovered = 0.0; // at input_end + 5 * tau_recovery
    int64_t recovered_ns = -1; // first time weight >= 99% of baseline
};

ChipGridConfig stp_config();
StpResult run_stp();

// ---- demos ---------------------------------------------------------------

struct DemoOutput
{
    ScenarioRun run;
    nlohmann::json metrics;
};

const std::vector<std::string> &demo_names();
// Throws ConfigError for an unknown name.
DemoOutput run_demo(const std::string &name);

} // namespace spikechip

#endif
