// soma.hpp - integrate-and-fire soma
//
// Somatic DPI with the thresholded and exponential firing models, refractory
// clamp, spike-frequency adaptation, calcium rate estimate and homeostatic
// gain control. Times are in seconds.
#ifndef SPIKECHIP_SOMA_HPP
#define SPIKECHIP_SOMA_HPP

#include <optional>
#include <vector>

#include "spikechip/kernels.hpp"
#include "spikechip/params.hpp"

namespace spikechip
{

enum class SomaModel : uint8_t
{
    thresholded,
    exponential,
};

enum class HomeostasisTarget : uint8_t
{
    soma,
    nmda,
};

struct SomaConfig
{
    SomaModel model = SomaModel::thresholded; // SOIF_TYPE
    double I_leak = 1e-12; // SOIF_LEAK
    double I_gain = 1e-12; // SOIF_GAIN
    double I_refr = 1e-12; // SOIF_REFR
    double I_dc = 0.0; // SOIF_DC
    double I_spkthr = 1e-9; // SOIF_SPKTHR
    bool dc_enabled = false; // SO_DC
    bool killed = false; // SOIF_KILL
    bool adaptation_enabled = false; // SO_ADAPTATION
    bool homeostasis_enabled = false; // HO_ENABLE
    bool homeostasis_active = false; // HO_ACTIVE
    HomeostasisTarget homeostasis_target = HomeostasisTarget::soma; // HO_SO_DE
    double C_mem = 7.72e-12;
    double C_refr = 2e-12;
    double exp_feedback_gain = 4.0;
    double exp_ceiling_factor = 1000.0;
    // The exponential model's refractory extender has no positive feedback;
    // its discharge swing is a fraction of V_dd calibrated separately.
    double exp_refr_swing = 0.355;

    // Shared adaptation/calcium pulse extender and the two LPF DPIs.
    double I_feedback_pw = 1e-12; // SOAD_PWTAU
    double C_feedback_px = 2e-12;
    double I_adapt_w = 0.0; // SOAD_W
    DpiParams adaptation{}; // SOAD_GAIN / SOAD_TAU
    double I_calcium_w = 0.0; // SOCA_W
    DpiParams calcium{}; // SOCA_GAIN / SOCA_TAU

    void validate() const;
};

struct HomeostasisConfig
{
    double I_Ca_ref = 0.0; // SOHO_VREF
    double V_ref_H = 0.0;
    double V_ref_M = 0.0;
    double V_ref_L = 0.0;
    double rate_up = 0.0; // [V/s]
    double rate_down = 0.0; // [V/s]
    double deadband = 0.01; // relative, around I_Ca_ref

    void validate() const;
    // Ramp rates from the reference ratios: equal ratios give equal rates.
    static HomeostasisConfig from_references(double I_Ca_ref, double V_H,
            double V_M, double V_L, double time_base);
};

struct SomaState
{
    DpiState membrane{};
    double refractory_until = 0.0;
    DpiState adaptation{};
    DpiState calcium{};
    double V_gain = 0.0; // log-domain homeostatic gain
    PulseExtenderState feedback_px{};
};

struct SomaInputs
{
    double I_dendritic = 0.0; // AMPA + NMDA - GABA_B
    double I_somatic = 0.0; // GABA_A shunt
};

struct SomaDrive
{
    double I_in = 0.0;
    double I_tau = 0.0;
};

SomaDrive soma_input_currents(
        double I_dendritic, double I_somatic, double I_adapt, const SomaConfig &cfg);

double refractory_period(const SomaConfig &cfg, const PhysicsConstants &consts);
double feedback_pulse_width(const SomaConfig &cfg, const PhysicsConstants &consts);

// Gate voltage of the membrane current (N-type), floored at I_0.
double membrane_voltage(double I_mem, const PhysicsConstants &consts);

// Effective somatic gain current.
double soma_gain_current(const SomaState &state, const SomaConfig &cfg,
        const PhysicsConstants &consts);

SomaState make_soma_state(const SomaConfig &cfg, const HomeostasisConfig &hcfg,
        const PhysicsConstants &consts);

struct SomaStepOptions
{
    bool stop_at_first_spike = false;
    // Spike if the membrane ends within this relative distance of threshold
    // at the end of the step.
    double end_threshold_tolerance = 0.0;
    // Integrate the membrane with the general current-mode equation instead
    // of the closed form. The membrane never drops below full_floor.
    bool full_model = false;
    double full_rtol = 1e-8;
    double full_floor = 1e-21;
};

struct SomaStepResult
{
    SomaState state;
    std::vector<double> spikes; // absolute times
};

// Advance the soma from t0 by dt with dendritic inputs held constant.
SomaStepResult soma_step(const SomaState &state, const SomaConfig &cfg,
        const HomeostasisConfig &hcfg, const SomaInputs &inputs, double t0,
        double dt, const PhysicsConstants &consts, const SomaStepOptions &opts = {});

SomaState on_spike_feedback(const SomaState &state, const SomaConfig &cfg,
        double t, const PhysicsConstants &consts);

SomaState homeostasis_step(const SomaState &state, const SomaConfig &cfg,
        const HomeostasisConfig &hcfg, double I_Ca, double dt,
        const PhysicsConstants &consts);

// Sign of dV_gain/dt for a calcium reading: +1, 0 or -1.
int homeostasis_direction(const HomeostasisConfig &hcfg, double I_Ca);

} // namespace spikechip

#endif
