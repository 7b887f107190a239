// dendrite.hpp - dendritic branches
//
// Output transforms applied to the four dendritic DPIs (conductance mode,
// alpha-function double DPI, NMDA membrane gating) and the resistive AMPA
// diffusion grid.
#ifndef SPIKECHIP_DENDRITE_HPP
#define SPIKECHIP_DENDRITE_HPP

#include <memory>
#include <span>
#include <vector>

#include "spikechip/kernels.hpp"
#include "spikechip/params.hpp"
#include "spikechip/synapse.hpp"

namespace spikechip
{

enum class GateSource : uint8_t
{
    membrane,
    calcium,
};

struct DendriteBranchConfig
{
    Dendrite branch = Dendrite::ampa;
    DpiParams dpi{};
    bool conductance_enabled = false;
    double V_reversal = 0.0;
    GateSource gate_source = GateSource::membrane;
    bool alpha_enabled = false; // AMPA/NMDA only
    DpiParams alpha_inhibitory{};
    bool nmda_gating = false; // NMDA only
    double V_nmda = 0.0;
    bool diffusion_enabled = false; // AMPA only

    void validate() const;
};

double conductance_transform(double I_dendrite, double V_reversal,
        double V_neuron, const PhysicsConstants &consts);

double alpha_ddpi_output(
        double W_E, double tau_E, double W_I, double tau_I, double t_since_spike);

// Time of the alpha-function peak for W_E = W_I.
double alpha_peak_time(double tau_E, double tau_I);

constexpr double nmda_gate(
        const double I_in, const double V_mem, const double V_nmda)
{
    return V_mem > V_nmda ? I_in : 0.0;
}

struct DiffusionGridConfig
{
    int width = 16;
    int height = 16;
    double g_n = 1e-9; // neuron pseudo-resistor [S]
    double g_h = 1e-9; // between n and n+1 within a row
    double g_v = 1e-9; // between n and n+width
    std::vector<bool> enabled_mask = std::vector<bool>(256, false);

    void validate() const;
    int size() const { return width * height; }
};

// Pseudo-resistor conductance from its gate-bias current.
double pseudo_resistor_conductance(double I_bias, const PhysicsConstants &consts);

// Quasi-static solve of the grid with a cached factorization.
class DiffusionSolver
{
public:
    explicit DiffusionSolver(const DiffusionGridConfig &grid);
    ~DiffusionSolver();
    DiffusionSolver(const DiffusionSolver &) = delete;
    DiffusionSolver &operator=(const DiffusionSolver &) = delete;
    DiffusionSolver(DiffusionSolver &&) noexcept;
    DiffusionSolver &operator=(DiffusionSolver &&) noexcept;

    std::vector<double> solve(std::span<const double> injections) const;
    const DiffusionGridConfig &grid() const { return grid_; }

private:
    struct Impl;
    DiffusionGridConfig grid_;
    std::unique_ptr<Impl> impl_;
};

std::vector<double> diffuse(
        std::span<const double> injections, const DiffusionGridConfig &grid);

} // namespace spikechip

#endif
