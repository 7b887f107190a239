// netbuild.cpp

#include <algorithm>
#include <set>
#include <tuple>

#include "spikechip/netbuild.hpp"

namespace
{

using namespace spikechip;

constexpr int mux_somas_per_row = 8;
constexpr int neurons_per_row = 16;

std::string chip_core_name(const ChipCoord c, const int core)
{
    return "chip(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")/core" +
            std::to_string(core);
}

std::string neuron_name(const ChipCoord c, const int core, const int n)
{
    return chip_core_name(c, core) + "/n" + std::to_string(n);
}

// Synapse slots of a soma: its own 64, or those of its four dendrites.
std::vector<std::pair<int, int>> synapse_slots(const int soma, const bool de_mux)
{
    std::vector<int> dendrites = {soma};
    if (de_mux)
    {
        dendrites = {soma, soma + 1, soma + neurons_per_row, soma + neurons_per_row + 1};
    }
    std::vector<std::pair<int, int>> slots;
    for (const int d : dendrites)
    {
        for (int k = 0; k < synapses_per_neuron; ++k)
        {
            slots.emplace_back(d, k);
        }
    }
    return slots;
}

struct Builder
{
    const NetworkSpec &spec;
    ChipGridConfig cfg;
    std::map<std::string, const PopulationSpec *> pops;
    // (chip index, core) -> tags in use
    std::map<std::pair<int, int>, std::set<uint16_t>> used;
    // (chip index, core, tag) -> projection indices
    std::map<std::tuple<int, int, uint16_t>, std::set<std::size_t>> owners;
    std::vector<Diagnostic> diags;

    explicit Builder(const NetworkSpec &s) : spec(s) {}

    CoreConfig &core_of(const ChipCoord c, const int core)
    {
        return cfg.chip(c).cores[core];
    }

    bool mux(const ChipCoord c, const int core) const
    {
        return cfg.chip(c).cores[core].de_mux;
    }

    void seed_used_tags()
    {
        for (int ci = 0; ci < cfg.width * cfg.height; ++ci)
        {
            for (int core = 0; core < cores_per_chip; ++core)
            {
                auto &set = used[{ci, core}];
                for (const auto &n : cfg.chips[ci].cores[core].neurons)
                {
                    for (const auto &s : n.synapses)
                    {
                        if (s.target().has_value())
                        {
                            set.insert(s.cam_tag);
                        }
                    }
                }
            }
        }
    }

    void apply_cores()
    {
        for (const CoreSettings &cs : spec.cores)
        {
            if (cfg.chip_index(cs.chip) < 0 || cs.core < 0 || cs.core >= cores_per_chip)
            {
                throw ConfigError("core settings for " + chip_core_name(cs.chip, cs.core) +
                        " lie outside the grid");
            }
            CoreConfig &core = core_of(cs.chip, cs.core);
            core.de_mux = cs.de_mux;
            for (const auto &[name, code] : cs.biases)
            {
                core.set_bias(name, code);
            }
        }
    }

    void place_populations()
    {
        std::map<std::tuple<int, int, int>, std::string> owner;
        for (const PopulationSpec &p : spec.populations)
        {
            if (!pops.emplace(p.name, &p).second)
            {
                throw ConfigError("population '" + p.name + "' is defined twice");
            }
            if (cfg.chip_index(p.chip) < 0 || p.core < 0 || p.core >= cores_per_chip)
            {
                throw ConfigError("population '" + p.name + "' is placed outside the grid");
            }
            const bool m = mux(p.chip, p.core);
            const int capacity = m ? neurons_per_core / 4 : neurons_per_core;
            if (p.size < 1 || p.first < 0 || p.first + p.size > capacity)
            {
                throw ConfigError("population '" + p.name + "' needs slots " +
                        std::to_string(p.first) + ".." + std::to_string(p.first + p.size - 1) +
                        " of " + chip_core_name(p.chip, p.core) + ", which has " +
                        std::to_string(capacity) + (m ? " somas" : " neurons"));
            }
            const int ci = cfg.chip_index(p.chip);
            for (int i = 0; i < p.size; ++i)
            {
                const int n = population_neuron(p, i, m);
                const auto key = std::make_tuple(ci, p.core, n);
                const auto [it, fresh] = owner.emplace(key, p.name);
                if (!fresh)
                {
                    throw ConfigError(neuron_name(p.chip, p.core, n) + " belongs to both '" +
                            it->second + "' and '" + p.name + "'");
                }
                NeuronLatches &l = core_of(p.chip, p.core).neurons[n].latches;
                for (const auto &[name, value] : p.latches)
                {
                    bool *latch = find_latch(l, name);
                    if (latch == nullptr)
                    {
                        throw ConfigError("population '" + p.name + "': unknown latch '" +
                                name + "'");
                    }
                    *latch = value;
                }
            }
        }
    }

    const PopulationSpec &population(const std::string &name) const
    {
        const auto it = pops.find(name);
        if (it == pops.end())
        {
            throw ConfigError("projection refers to unknown population '" + name + "'");
        }
        return *it->second;
    }

    // Lowest x with [x, x + count) free in the core, or the forced tag.
    uint16_t allocate(const int ci, const int core, const int count,
            const std::optional<uint16_t> forced, const std::string &what)
    {
        auto &set = used[{ci, core}];
        if (forced.has_value())
        {
            if (*forced + count - 1 > max_tag)
            {
                throw ConfigError(what + ": forced tags " + std::to_string(*forced) + ".." +
                        std::to_string(*forced + count - 1) + " exceed the 11-bit tag space");
            }
            return *forced;
        }
        for (int x = 0; x + count - 1 <= max_tag; ++x)
        {
            bool free = true;
            for (int k = 0; k < count && free; ++k)
            {
                if (set.count(static_cast<uint16_t>(x + k)))
                {
                    free = false;
                    x += k; // resume past the collision
                }
            }
            if (free)
            {
                return static_cast<uint16_t>(x);
            }
        }
        throw ConfigError(what + ": " + chip_core_name(cfg_coord(ci), core) + " has no " +
                std::to_string(count) + " consecutive free tags (2048-tag namespace)");
    }

    ChipCoord cfg_coord(const int ci) const
    {
        return {ci % cfg.width, ci / cfg.width};
    }

    void claim(const int ci, const int core, const uint16_t tag, const std::size_t proj)
    {
        used[{ci, core}].insert(tag);
        owners[{ci, core, tag}].insert(proj);
    }

    void add_sram(const PopulationSpec &pre, const int i, const PopulationSpec &post,
            const uint16_t tag)
    {
        const int n = population_neuron(pre, i, mux(pre.chip, pre.core));
        NeuronConfig &nc = core_of(pre.chip, pre.core).neurons[n];
        const int dx = post.chip.x - pre.chip.x;
        const int dy = post.chip.y - pre.chip.y;
        if (std::abs(dx) > max_displacement || std::abs(dy) > max_displacement)
        {
            throw ConfigError(neuron_name(pre.chip, pre.core, n) + ": destination " +
                    chip_core_name(post.chip, post.core) + " is beyond the +-7 chip reach");
        }
        const auto bit = static_cast<uint8_t>(1U << post.core);
        for (SramEntry &e : nc.srams)
        {
            if (e.cores != 0 && e.tag == tag && e.dx == dx && e.dy == dy)
            {
                e.cores |= bit;
                return;
            }
        }
        for (SramEntry &e : nc.srams)
        {
            if (e.cores == 0)
            {
                e = SramEntry{tag, dx, dy, bit};
                return;
            }
        }
        throw ConfigError(neuron_name(pre.chip, pre.core, n) + " needs more than " +
                std::to_string(sram_entries) + " SRAM entries");
    }

    void add_cam(const PopulationSpec &post, const int j, const uint16_t tag,
            const SynapseProfile &prof)
    {
        const bool m = mux(post.chip, post.core);
        const int soma = population_neuron(post, j, m);
        CoreConfig &core = core_of(post.chip, post.core);
        for (const auto &[d, k] : synapse_slots(soma, m))
        {
            SynapseConfig &s = core.neurons[d].synapses[k];
            if (s.target().has_value())
            {
                continue;
            }
            s.cam_tag = tag;
            s.weight_bits = prof.weight_bits;
            s.precise_delay = prof.precise_delay;
            s.mismatched_delay = prof.mismatched_delay;
            s.stp_enabled = prof.stp;
            s.set_target(prof.dendrite);
            return;
        }
        const int limit = m ? 4 * synapses_per_neuron : synapses_per_neuron;
        throw ConfigError(neuron_name(post.chip, post.core, soma) + " needs more than " +
                std::to_string(limit) + " CAMs" + (m ? " (multiplexed)" : ""));
    }

    ProjectionTags project(const ProjectionSpec &p, const std::size_t index)
    {
        const PopulationSpec &pre = population(p.pre);
        const PopulationSpec &post = population(p.post);
        const int ci = cfg.chip_index(post.chip);
        const std::string what = "projection " + std::to_string(index) + " (" + p.pre +
                " -> " + p.post + ")";
        ProjectionTags out{post.chip, post.core, {}};
        switch (p.rule)
        {
        case ProjectionRule::all_to_all:
        {
            if (p.r < 0)
            {
                throw ConfigError(what + ": r must be non-negative");
            }
            const uint16_t x = allocate(ci, post.core, 1, p.tag, what);
            claim(ci, post.core, x, index);
            out.tags = {x};
            for (int i = 0; i < pre.size; ++i)
            {
                add_sram(pre, i, post, x);
            }
            for (int j = 0; j < post.size; ++j)
            {
                for (int k = 0; k < p.r; ++k)
                {
                    add_cam(post, j, x, p.synapse);
                }
            }
            break;
        }
        case ProjectionRule::ring:
        {
            const int n = pre.size;
            if (post.size != n)
            {
                throw ConfigError(what + ": ring needs equal population sizes");
            }
            if (p.r < 0)
            {
                throw ConfigError(what + ": r must be non-negative");
            }
            const uint16_t x = allocate(ci, post.core, n, p.tag, what);
            for (int i = 0; i < n; ++i)
            {
                const auto t = static_cast<uint16_t>(x + i);
                claim(ci, post.core, t, index);
                out.tags.push_back(t);
                add_sram(pre, i, post, t);
            }
            for (int i = 0; i < n; ++i)
            {
                for (int k = -p.r; k <= p.r; ++k)
                {
                    const int m = ((i + k) % n + n) % n;
                    add_cam(post, i, static_cast<uint16_t>(x + m), p.synapse);
                }
            }
            break;
        }
        case ProjectionRule::pairs:
        {
            std::map<int, uint16_t> tag_of;
            for (const auto &[i, j] : p.pairs)
            {
                if (i < 0 || i >= pre.size || j < 0 || j >= post.size)
                {
                    throw ConfigError(what + ": pair (" + std::to_string(i) + ", " +
                            std::to_string(j) + ") is outside the populations");
                }
                if (!tag_of.count(i))
                {
                    std::optional<uint16_t> forced;
                    if (p.tag.has_value())
                    {
                        forced = static_cast<uint16_t>(*p.tag + tag_of.size());
                    }
                    const uint16_t t = allocate(ci, post.core, 1, forced, what);
                    claim(ci, post.core, t, index);
                    tag_of[i] = t;
                    out.tags.push_back(t);
                    add_sram(pre, i, post, t);
                }
                add_cam(post, j, tag_of[i], p.synapse);
            }
            std::sort(out.tags.begin(), out.tags.end());
            break;
        }
        }
        return out;
    }

    void aliasing_warnings()
    {
        for (const auto &[key, projs] : owners)
        {
            if (projs.size() < 2)
            {
                continue;
            }
            const auto &[ci, core, tag] = key;
            std::string list;
            for (const std::size_t p : projs)
            {
                list += (list.empty() ? "" : ", ") + std::to_string(p);
            }
            diags.push_back({Severity::warning, chip_core_name(cfg_coord(ci), core),
                    "tag " + std::to_string(tag) + " is shared by projections " + list +
                            "; a core identifies events by tag alone, so their synapses "
                            "cannot tell the sources apart"});
        }
    }
};

} // namespace

const char *spikechip::projection_rule_name(const ProjectionRule r)
{
    switch (r)
    {
    case ProjectionRule::all_to_all:
        return "all_to_all";
    case ProjectionRule::ring:
        return "ring";
    case ProjectionRule::pairs:
        return "pairs";
    }
    return "?";
}

spikechip::ProjectionRule spikechip::parse_projection_rule(const std::string &name)
{
    for (const auto r : {ProjectionRule::all_to_all, ProjectionRule::ring, ProjectionRule::pairs})
    {
        if (name == projection_rule_name(r))
        {
            return r;
        }
    }
    throw ConfigError("unknown projection rule '" + name + "'");
}

std::string spikechip::Diagnostic::text() const
{
    return std::string(severity == Severity::error ? "error" : "warning") + ": " + where +
            ": " + message;
}

int spikechip::population_neuron(const PopulationSpec &pop, const int i, const bool de_mux)
{
    const int slot = pop.first + i;
    if (!de_mux)
    {
        return slot;
    }
    const int row = slot / mux_somas_per_row * 2;
    const int col = slot % mux_somas_per_row * 2;
    return row * neurons_per_row + col;
}

spikechip::CompileResult spikechip::compile(const NetworkSpec &spec)
{
    Builder b(spec);
    if (spec.base.has_value())
    {
        b.cfg = *spec.base;
        if (b.cfg.width != spec.width || b.cfg.height != spec.height)
        {
            throw ConfigError("base configuration grid differs from the network grid");
        }
    }
    else
    {
        if (spec.width < 1 || spec.height < 1 || spec.width > 16 || spec.height > 16)
        {
            throw ConfigError("grid dimensions must lie within 1x1 and 16x16");
        }
        b.cfg = make_grid(spec.width, spec.height);
    }
    b.apply_cores();
    b.seed_used_tags();
    b.place_populations();
    CompileResult out;
    for (std::size_t i = 0; i < spec.projections.size(); ++i)
    {
        out.tags.push_back(b.project(spec.projections[i], i));
    }
    b.aliasing_warnings();
    b.cfg.validate();
    out.config = std::move(b.cfg);
    out.diagnostics = std::move(b.diags);
    return out;
}

std::vector<spikechip::Diagnostic> spikechip::validate(const ChipGridConfig &cfg)
{
    std::vector<Diagnostic> d;
    const auto err = [&](std::string where, std::string msg) {
        d.push_back({Severity::error, std::move(where), std::move(msg)});
    };
    const auto warn = [&](std::string where, std::string msg) {
        d.push_back({Severity::warning, std::move(where), std::move(msg)});
    };
    if (cfg.width < 1 || cfg.height < 1 || cfg.width > 16 || cfg.height > 16 ||
            static_cast<int>(cfg.chips.size()) != cfg.width * cfg.height)
    {
        err("grid", "dimensions " + std::to_string(cfg.width) + "x" +
                        std::to_string(cfg.height) + " with " + std::to_string(cfg.chips.size()) +
                        " chips are invalid");
        return d;
    }
    // (dest chip, core, tag) -> source cores
    std::map<std::tuple<int, int, uint16_t>, std::set<std::pair<int, int>>> senders;
    for (int ci = 0; ci < cfg.width * cfg.height; ++ci)
    {
        const ChipCoord cc{ci % cfg.width, ci / cfg.width};
        for (int core = 0; core < cores_per_chip; ++core)
        {
            const CoreConfig &cr = cfg.chips[ci].cores[core];
            for (const auto &[name, code] : cr.biases)
            {
                if (find_bias(name) == nullptr)
                {
                    err(chip_core_name(cc, core), "unknown bias '" + name + "'");
                    continue;
                }
                try
                {
                    code.validate();
                }
                catch (const std::exception &e)
                {
                    err(chip_core_name(cc, core) + "/" + name, e.what());
                }
            }
            for (int n = 0; n < neurons_per_core; ++n)
            {
                const NeuronConfig &nc = cr.neurons[n];
                const bool is_soma = mux_soma_of(n, cr.de_mux) == n;
                for (int k = 0; k < sram_entries; ++k)
                {
                    const SramEntry &e = nc.srams[k];
                    const std::string where = neuron_name(cc, core, n) + "/sram" + std::to_string(k);
                    try
                    {
                        e.validate();
                    }
                    catch (const std::exception &ex)
                    {
                        err(where, ex.what());
                        continue;
                    }
                    if (e.cores == 0)
                    {
                        continue;
                    }
                    if (!is_soma)
                    {
                        warn(where, "neuron is a dendrite of soma " +
                                        std::to_string(mux_soma_of(n, true)) +
                                        " on a multiplexed core and never fires");
                    }
                    const ChipCoord dest{cc.x + e.dx, cc.y + e.dy};
                    const int di = cfg.chip_index(dest);
                    if (di < 0)
                    {
                        err(where, "destination chip (" + std::to_string(dest.x) + ", " +
                                        std::to_string(dest.y) + ") is outside the grid");
                        continue;
                    }
                    for (int c = 0; c < cores_per_chip; ++c)
                    {
                        if (e.cores & (1U << c))
                        {
                            senders[{di, c, e.tag}].insert({ci, core});
                        }
                    }
                }
                for (int s = 0; s < synapses_per_neuron; ++s)
                {
                    try
                    {
                        nc.synapses[s].validate();
                    }
                    catch (const std::exception &ex)
                    {
                        err(neuron_name(cc, core, n) + "/syn" + std::to_string(s), ex.what());
                    }
                }
            }
        }
    }
    for (const auto &[key, src] : senders)
    {
        const auto &[di, core, tag] = key;
        const ChipCoord dc{di % cfg.width, di / cfg.width};
        if (src.size() > 1)
        {
            warn(chip_core_name(dc, core),
                    "tag " + std::to_string(tag) + " arrives from " + std::to_string(src.size()) +
                            " source cores; a core identifies events by tag alone, so "
                            "their synapses cannot tell the sources apart");
        }
        bool heard = false;
        for (const auto &nc : cfg.chips[di].cores[core].neurons)
        {
            for (const auto &s : nc.synapses)
            {
                heard = heard || (s.target().has_value() && s.cam_tag == tag);
            }
        }
        if (!heard)
        {
            warn(chip_core_name(dc, core), "tag " + std::to_string(tag) +
                            " is sent here but no synapse listens for it");
        }
    }
    if (!has_errors(d))
    {
        try
        {
            cfg.validate();
        }
        catch (const std::exception &e)
        {
            err("config", e.what());
        }
    }
    return d;
}

std::vector<spikechip::Diagnostic> spikechip::validate(
        const ChipGridConfig &cfg, const CompileResult &compiled)
{
    std::vector<Diagnostic> d = validate(cfg);
    // Cross-core sharing is already reported; keep only the projection view
    std::erase_if(d, [](const Diagnostic &x) {
        return x.severity == Severity::warning &&
                x.message.find("source cores") != std::string::npos;
    });
    d.insert(d.end(), compiled.diagnostics.begin(), compiled.diagnostics.end());
    return d;
}

bool spikechip::has_errors(const std::vector<Diagnostic> &diags)
{
    return std::any_of(diags.begin(), diags.end(),
            [](const Diagnostic &d) { return d.severity == Severity::error; });
}

spikechip::NetworkSpec spikechip::all_to_all_network(
        const int n, const int r, const int pre_core, const int post_core)
{
    NetworkSpec s;
    s.populations = {{"pre", n, {0, 0}, pre_core, 0, {}},
            {"post", n, {0, 0}, post_core, pre_core == post_core ? n : 0, {}}};
    ProjectionSpec p;
    p.pre = "pre";
    p.post = "post";
    p.rule = ProjectionRule::all_to_all;
    p.r = r;
    s.projections = {p};
    return s;
}

spikechip::NetworkSpec spikechip::ring_network(
        const int n, const int r, const int pre_core, const int post_core)
{
    NetworkSpec s = all_to_all_network(n, r, pre_core, post_core);
    s.projections[0].rule = ProjectionRule::ring;
    return s;
}
