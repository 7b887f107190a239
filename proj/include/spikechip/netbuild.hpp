// netbuild.hpp - network description compiled to a chip configuration
//
// Populations occupy a contiguous run of neurons (or, on a multiplexed
// core, of somas) in one core. Projections allocate tags from the
// destination core's namespace, lowest free first, and fill the pre
// neurons' SRAMs and the post neurons' CAMs.
#ifndef SPIKECHIP_NETBUILD_HPP
#define SPIKECHIP_NETBUILD_HPP

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spikechip/chip_config.hpp"

namespace spikechip
{

struct PopulationSpec
{
    std::string name;
    int size = 1;
    ChipCoord chip{};
    int core = 0;
    int first = 0; // first neuron, or first soma slot on a multiplexed core
    std::map<std::string, bool> latches; // soma/dendrite profile

    bool operator==(const PopulationSpec &) const = default;
};

enum class ProjectionRule : uint8_t
{
    all_to_all,
    ring,
    pairs,
};

const char *projection_rule_name(ProjectionRule r);
ProjectionRule parse_projection_rule(const std::string &name);

struct SynapseProfile
{
    Dendrite dendrite = Dendrite::ampa;
    std::array<bool, 4> weight_bits{true, false, false, false};
    bool precise_delay = false;
    bool mismatched_delay = false;
    bool stp = false;

    bool operator==(const SynapseProfile &) const = default;
};

struct ProjectionSpec
{
    std::string pre;
    std::string post;
    ProjectionRule rule = ProjectionRule::all_to_all;
    // all_to_all: synapses per post neuron; ring: neighbourhood radius
    int r = 1;
    std::vector<std::pair<int, int>> pairs; // (pre index, post index)
    SynapseProfile synapse{};
    // Forced first tag instead of the lowest free one.
    std::optional<uint16_t> tag;

    bool operator==(const ProjectionSpec &) const = default;
};

struct CoreSettings
{
    ChipCoord chip{};
    int core = 0;
    bool de_mux = false;
    std::map<std::string, BiasCode> biases;

    bool operator==(const CoreSettings &) const = default;
};

struct NetworkSpec
{
    int width = 1;
    int height = 1;
    std::vector<PopulationSpec> populations;
    std::vector<ProjectionSpec> projections;
    std::vector<CoreSettings> cores;
    // Starting point for everything the network does not set.
    std::optional<ChipGridConfig> base;

    bool operator==(const NetworkSpec &) const = default;
};

enum class Severity : uint8_t
{
    warning,
    error,
};

struct Diagnostic
{
    Severity severity = Severity::error;
    std::string where;
    std::string message;

    std::string text() const;
};

// Where each projection's tags landed.
struct ProjectionTags
{
    ChipCoord chip{};
    int core = 0;
    std::vector<uint16_t> tags; // ascending
};

struct CompileResult
{
    ChipGridConfig config;
    std::vector<ProjectionTags> tags; // one per projection
    std::vector<Diagnostic> diagnostics; // warnings only; errors throw
};

// Throws ConfigError naming the neuron/core and the violated limit.
CompileResult compile(const NetworkSpec &spec);

// Neuron index of population element i.
int population_neuron(const PopulationSpec &pop, int i, bool de_mux);

// Structural checks of any configuration; never throws.
std::vector<Diagnostic> validate(const ChipGridConfig &cfg);
// Adds the per-projection tag aliasing check.
std::vector<Diagnostic> validate(const ChipGridConfig &cfg, const CompileResult &compiled);

bool has_errors(const std::vector<Diagnostic> &diags);

// The two built-in generators: n pre onto n post neurons of one core.
NetworkSpec all_to_all_network(int n, int r, int pre_core = 0, int post_core = 1);
NetworkSpec ring_network(int n, int r, int pre_core = 0, int post_core = 1);

} // namespace spikechip

#endif
