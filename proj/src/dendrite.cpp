// dendrite.cpp

#include <cmath>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "spikechip/dendrite.hpp"

void spikechip::DendriteBranchConfig::validate() const
{
    dpi.validate();
    const bool excitatory = branch == Dendrite::ampa || branch == Dendrite::nmda;
    if (alpha_enabled && !excitatory)
    {
        throw ConfigError("alpha function is only available on AMPA and NMDA");
    }
    if (alpha_enabled)
    {
        alpha_inhibitory.validate();
    }
    if (nmda_gating && branch != Dendrite::nmda)
    {
        throw ConfigError("membrane gating is only available on NMDA");
    }
    if (diffusion_enabled && branch != Dendrite::ampa)
    {
        throw ConfigError("diffusion is only available on AMPA");
    }
    if (conductance_enabled && branch == Dendrite::gaba_a)
    {
        throw ConfigError("GABA_A has no conductance block");
    }
}

double spikechip::conductance_transform(const double I_dendrite,
        const double V_reversal, const double V_neuron,
        const PhysicsConstants &consts)
{
    return I_dendrite *
            std::tanh((V_reversal - V_neuron) / consts.thermal_voltage);
}

double spikechip::alpha_ddpi_output(const double W_E, const double tau_E,
        const double W_I, const double tau_I, const double t_since_spike)
{
    const double out = W_E * std::exp(-t_since_spike / tau_E) -
            W_I * std::exp(-t_since_spike / tau_I);
    return std::max(out, 0.0);
}

double spikechip::alpha_peak_time(const double tau_E, const double tau_I)
{
    return std::log(tau_E / tau_I) / (1.0 / tau_I - 1.0 / tau_E);
}

void spikechip::DiffusionGridConfig::validate() const
{
    if (width <= 0 || height <= 0)
    {
        throw ConfigError("diffusion grid dimensions must be positive");
    }
    if (static_cast<int>(enabled_mask.size()) != size())
    {
        throw ConfigError("diffusion grid mask size does not match dimensions");
    }
    if (g_n < 0.0 || g_h < 0.0 || g_v < 0.0)
    {
        throw ConfigError("diffusion grid conductances must be non-negative");
    }
    bool any = false;
    for (const bool e : enabled_mask)
    {
        any = any || e;
    }
    if (any && !(g_n > 0.0))
    {
        throw ConfigError("diffusion grid is singular: g_n must be positive");
    }
}

double spikechip::pseudo_resistor_conductance(
        const double I_bias, const PhysicsConstants &consts)
{
    return consts.kappa * I_bias / consts.thermal_voltage;
}

struct spikechip::DiffusionSolver::Impl
{
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
    std::vector<int> node_of; // grid index -> unknown index, -1 if disabled
    int unknowns = 0;
};

spikechip::DiffusionSolver::DiffusionSolver(const DiffusionGridConfig &grid)
        : grid_(grid)
        , impl_(std::make_unique<Impl>())
{
    grid_.validate();
    const int n = grid_.size();
    impl_->node_of.assign(n, -1);
    for (int i = 0; i < n; ++i)
    {
        if (grid_.enabled_mask[i])
        {
            impl_->node_of[i] = impl_->unknowns++;
        }
    }
    if (impl_->unknowns == 0)
    {
        return;
    }
    std::vector<Eigen::Triplet<double>> triplets;
    const auto couple = [&](const int a, const int b, const double g) {
        const int ia = impl_->node_of[a];
        const int ib = impl_->node_of[b];
        if (ia < 0 || ib < 0 || g == 0.0)
        {
            return;
        }
        triplets.emplace_back(ia, ia, g);
        triplets.emplace_back(ib, ib, g);
        triplets.emplace_back(ia, ib, -g);
        triplets.emplace_back(ib, ia, -g);
    };
    for (int i = 0; i < n; ++i)
    {
        const int row = i / grid_.width;
        const int col = i % grid_.width;
        if (impl_->node_of[i] >= 0)
        {
            triplets.emplace_back(impl_->node_of[i], impl_->node_of[i], grid_.g_n);
        }
        if (col + 1 < grid_.width)
        {
            couple(i, i + 1, grid_.g_h);
        }
        if (row + 1 < grid_.height)
        {
            couple(i, i + grid_.width, grid_.g_v);
        }
    }
    Eigen::SparseMatrix<double> G(impl_->unknowns, impl_->unknowns);
    G.setFromTriplets(triplets.begin(), triplets.end());
    impl_->llt.compute(G);
    if (impl_->llt.info() != Eigen::Success)
    {
        throw ConfigError("diffusion grid conductance matrix is singular");
    }
}

spikechip::DiffusionSolver::~DiffusionSolver() = default;
spikechip::DiffusionSolver::DiffusionSolver(DiffusionSolver &&) noexcept = default;
spikechip::DiffusionSolver &spikechip::DiffusionSolver::operator=(
        DiffusionSolver &&) noexcept = default;

std::vector<double> spikechip::DiffusionSolver::solve(
        const std::span<const double> injections) const
{
    const int n = grid_.size();
    if (static_cast<int>(injections.size()) != n)
    {
        throw ConfigError("diffusion: expected " + std::to_string(n) +
                " injections, got " + std::to_string(injections.size()));
    }
    std::vector<double> out(injections.begin(), injections.end());
    if (impl_->unknowns == 0)
    {
        return out;
    }
    Eigen::VectorXd b(impl_->unknowns);
    for (int i = 0; i < n; ++i)
    {
        if (impl_->node_of[i] >= 0)
        {
            b[impl_->node_of[i]] = injections[i];
        }
    }
    const Eigen::VectorXd v = impl_->llt.solve(b);
    for (int i = 0; i < n; ++i)
    {
        if (impl_->node_of[i] >= 0)
        {
            out[i] = grid_.g_n * v[impl_->node_of[i]];
        }
    }
    return out;
}

std::vector<double> spikechip::diffuse(
        const std::span<const double> injections, const DiffusionGridConfig &grid)
{
    return DiffusionSolver(grid).solve(injections);
}
