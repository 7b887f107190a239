// engine.cpp

#include <algorithm>
#include <cinttypes>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <queue>
#include <set>

#include "spikechip/dendrite.hpp"
#include "spikechip/engine.hpp"
#include "spikechip/kernels.hpp"
#include "spikechip/mismatch.hpp"
#include "spikechip/soma.hpp"
#include "spikechip/synapse.hpp"

const char *spikechip::event_kind_name(const EventKind k)
{
    switch (k)
    {
    case EventKind::pulse_edge:
        return "pulse_edge";
    case EventKind::input_word:
        return "input_word";
    case EventKind::delivery:
        return "delivery";
    case EventKind::monitor_tick:
        return "monitor_tick";
    }
    return "?";
}

namespace
{

using namespace spikechip;

constexpr double quiet_current = 1e-18;
constexpr double min_tau_current = 1e-24;
constexpr int64_t never = std::numeric_limits<int64_t>::min();
constexpr int neurons_per_chip = cores_per_chip * neurons_per_core;
constexpr uint32_t from_neighbour = 1;

double ns_to_s(const int64_t t)
{
    return static_cast<double>(t) * 1e-9;
}

int64_t duration_ns(const double seconds, const char *what)
{
    if (!std::isfinite(seconds) || seconds > 9e9)
    {
        throw ConfigError(std::string(what) + " is unbounded; its bias current is zero");
    }
    return std::max<int64_t>(std::llround(seconds * 1e9), 0);
}

struct SynapseParams
{
    int64_t delay_ns = 0;
    int64_t width_ns = 0;
    double weight = 0.0; // DAC weight, used when STP is off
    bool stp = false;
    int8_t target = -1;
};

struct SynapseState
{
    int64_t busy_until = never;
    double V_stp = 0.0;
    int64_t stp_t = 0;
    bool stp_init = false;
};

struct NeuronParams
{
    SomaConfig soma{};
    HomeostasisConfig homeo{};
    std::array<DpiParams, dendrite_count> dpi{};
    std::array<DpiParams, 2> inh{}; // alpha inhibitory DPIs of AMPA, NMDA
    std::array<bool, 2> alpha{};
    std::array<bool, 3> cond{};
    std::array<double, 3> V_rev{};
    bool gate_from_ca = false;
    bool nmda_gate = false;
    double V_nmda = 0.0;
    bool diffusion = false;
};

struct NeuronState
{
    SomaState soma{};
    std::array<DpiState, dendrite_count> dend{};
    std::array<DpiState, 2> inh{};
    std::array<double, dendrite_count> input{};
    std::array<int, dendrite_count> pulses{};
    double ampa_eff = 0.0; // AMPA input after diffusion
};

struct CoreRuntime
{
    CamIndex cam;
    double V_stpw = 0.0;
    double I_stpstr = 0.0;
    bool de_mux = false;
    std::unique_ptr<DiffusionSolver> diffusion;
    std::vector<int> diffusion_neurons; // local indices with diffusion enabled
};

struct Group
{
    int soma = 0; // global neuron index
    std::vector<int> dendrites;
    int64_t t_ns = 0;
};

struct TapState
{
    bool have_prev = false;
    double prev = 0.0;
    double charge = 0.0;
    int64_t samples = 0;
};

struct EventAfter
{
    bool operator()(const SimEvent &x, const SimEvent &y) const
    {
        return event_before(y, x);
    }
};

void append(std::string &out, const char *fmt, ...) __attribute__((format(printf, 2, 3)));

void append(std::string &out, const char *fmt, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    const int n = std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    if (n > 0)
    {
        out.append(buf, static_cast<std::size_t>(std::min<int>(n, sizeof buf - 1)));
    }
}

} // namespace

struct spikechip::Simulator::Impl
{
    ChipGridConfig cfg;
    ChipGrid grid{1, 1};
    MismatchModel mismatch;
    std::vector<NeuronParams> nparams;
    std::vector<NeuronState> nstate;
    std::vector<SynapseParams> sparams;
    std::vector<SynapseState> sstate;
    std::vector<CoreRuntime> cores;
    std::vector<Group> groups;
    std::vector<int> group_of;
    std::set<int> active;
    std::priority_queue<SimEvent, std::vector<SimEvent>, EventAfter> queue;
    uint64_t seq = 0;
    int64_t now = 0;
    SimulationReport report;
    std::vector<TapState> taps;
    uint32_t monitor_generation = 0;
    std::function<void()> command_hook;
    std::function<void(const SpikeRecord &)> spike_listener;
    std::function<void(std::size_t, const TraceSample &)> sample_listener;
    std::function<void(const SimEvent &)> event_listener;
    std::function<void(int64_t, int64_t)> step_listener;

    const PhysicsConstants &phys() const { return cfg.analog.physics; }
    bool full() const { return cfg.engine.mode == EngineMode::full; }
    int chip_count() const { return cfg.width * cfg.height; }

    void push(SimEvent ev)
    {
        ev.seq = seq++;
        queue.push(ev);
    }

    // ---- configuration -------------------------------------------------

    void build(const ChipGridConfig &next, const bool fresh)
    {
        next.validate();
        const bool dims_changed = fresh || next.width != cfg.width || next.height != cfg.height;
        const bool monitors_changed = fresh || dims_changed || next.monitors != cfg.monitors;
        const bool mode_changed = !fresh && next.engine.mode != cfg.engine.mode;
        if (!fresh)
        {
            catch_up_all(now);
        }
        cfg = next;
        mismatch = MismatchModel(cfg.mismatch);
        if (dims_changed)
        {
            grid = ChipGrid(cfg.width, cfg.height);
            nstate.assign(static_cast<std::size_t>(chip_count()) * neurons_per_chip, {});
            sstate.assign(nstate.size() * synapses_per_neuron, {});
            active.clear();
        }
        nparams.assign(nstate.size(), {});
        sparams.assign(sstate.size(), {});
        cores.clear();
        cores.resize(static_cast<std::size_t>(chip_count()) * cores_per_chip);
        for (int chip = 0; chip < chip_count(); ++chip)
        {
            for (int core = 0; core < cores_per_chip; ++core)
            {
                derive_core(chip, core);
            }
        }
        if (dims_changed)
        {
            for (std::size_t g = 0; g < nstate.size(); ++g)
            {
                init_state(static_cast<int>(g));
            }
        }
        else
        {
            for (std::size_t g = 0; g < nstate.size(); ++g)
            {
                auto &px = nstate[g].soma.feedback_px;
                const SomaConfig &sc = nparams[g].soma;
                px.I_pw = sc.I_feedback_pw > 0.0 ? sc.I_feedback_pw : 1e-30;
                px.C_px = sc.C_feedback_px;
                if (mode_changed && full())
                {
                    lift_to_floor(nstate[g]);
                }
            }
        }
        build_groups();
        for (int chip = 0; chip < chip_count(); ++chip)
        {
            for (int core = 0; core < cores_per_chip; ++core)
            {
                update_diffusion(chip, core);
            }
        }
        for (const auto &w : mismatch.warnings())
        {
            if (std::find(report.warnings.begin(), report.warnings.end(), w) ==
                    report.warnings.end())
            {
                report.warnings.push_back(w);
            }
        }
        if (monitors_changed)
        {
            reset_monitors();
        }
        report.energy = EnergyLedger(
                cfg.analog.energy_thresholded_pJ, cfg.analog.energy_exponential_pJ);
        rebuild_energy();
        refresh_activity();
    }

    void rebuild_energy()
    {
        for (const auto &s : report.spikes)
        {
            const int chip = cfg.chip_index(s.chip);
            const int gid = (chip * cores_per_chip + s.core) * neurons_per_core + s.neuron;
            report.energy.record_spike(chip, s.core, nparams[gid].soma.model);
        }
    }

    void lift_to_floor(NeuronState &st) const
    {
        const double f = cfg.engine.full_floor;
        for (auto &d : st.dend)
        {
            d.I_out = std::max(d.I_out, f);
        }
        for (auto &d : st.inh)
        {
            d.I_out = std::max(d.I_out, f);
        }
        st.soma.membrane.I_out = std::max(st.soma.membrane.I_out, f);
    }

    void init_state(const int gid)
    {
        NeuronState &st = nstate[gid];
        st = NeuronState{};
        st.soma = make_soma_state(nparams[gid].soma, nparams[gid].homeo, phys());
        if (full())
        {
            lift_to_floor(st);
        }
    }

    std::string path_of(const int chip, const int core, const int n) const
    {
        return "chip" + std::to_string(chip) + "/core" + std::to_string(core) + "/n" +
                std::to_string(n);
    }

    void derive_core(const int chip, const int core)
    {
        const ChipConfig &cc = cfg.chips[chip];
        const CoreConfig &core_cfg = cc.cores[core];
        const AnalogConfig &an = cfg.analog;
        const auto bias = [&](const char *name) {
            return bias_value(*find_bias(name), core_cfg.bias_code(name), an);
        };
        CoreRuntime &rt = cores[chip * cores_per_chip + core];
        rt.de_mux = core_cfg.de_mux;
        rt.V_stpw = bias("SYAN_STDW");
        rt.I_stpstr = bias("SYAN_STDSTR");

        const double leak = bias("SOIF_LEAK");
        const double gain = bias("SOIF_GAIN");
        const double refr = bias("SOIF_REFR");
        const double dc = bias("SOIF_DC");
        const double spkthr = bias("SOIF_SPKTHR");
        const HomeostasisConfig homeo = [&] {
            HomeostasisConfig h = HomeostasisConfig::from_references(bias("SOHO_VREF"),
                    bias("SOHO_VREF_H"), bias("SOHO_VREF_M"), bias("SOHO_VREF_L"),
                    an.homeostasis_time_base);
            h.deadband = an.homeostasis_deadband;
            return h;
        }();
        const std::array<double, 4> w_base = {
                bias("SYAM_W0"), bias("SYAM_W1"), bias("SYAM_W2"), bias("SYAM_W3")};
        const DelayBases delay_bases{bias("SYPD_DLY0"), bias("SYPD_DLY1"), bias("SYPD_DLY2")};
        const double I_ext = bias("SYPD_EXT");
        const auto dpi = [&](const char *tau, const char *g, const double C) {
            DpiParams p;
            p.I_tau = std::max(bias(tau), min_tau_current);
            p.I_gain = bias(g);
            p.C = C;
            return p;
        };
        const DpiParams ampa_e = dpi("DEAM_ETAU", "DEAM_EGAIN", an.C_dendrite);
        const DpiParams ampa_i = dpi("DEAM_ITAU", "DEAM_IGAIN", an.C_dendrite);
        const DpiParams nmda_e = dpi("DENM_ETAU", "DENM_EGAIN", an.C_dendrite);
        const DpiParams nmda_i = dpi("DENM_ITAU", "DENM_IGAIN", an.C_dendrite);
        const DpiParams gaba_b = dpi("DEGA_TAU", "DEGA_GAIN", an.C_dendrite);
        const DpiParams gaba_a = dpi("DESC_TAU", "DESC_GAIN", an.C_dendrite);
        const DpiParams adapt = dpi("SOAD_TAU", "SOAD_GAIN", an.C_adaptation);
        const DpiParams calcium = dpi("SOCA_TAU", "SOCA_GAIN", an.C_calcium);
        const std::array<double, 3> V_rev = {bias("DEAM_REV"), bias("DENM_REV"), bias("DEGA_REV")};
        const double V_nmda = bias("DENM_NMREV");

        const bool mm = mismatch.enabled();
        for (int n = 0; n < neurons_per_core; ++n)
        {
            const int gid = (chip * cores_per_chip + core) * neurons_per_core + n;
            const NeuronConfig &nc = core_cfg.neurons[n];
            const NeuronLatches &L = nc.latches;
            const std::string base = mm ? path_of(chip, core, n) + "/" : std::string();
            const auto f = [&](const std::string &suffix) {
                return mm ? mismatch.sample(base + suffix) : 1.0;
            };
            NeuronParams &p = nparams[gid];
            SomaConfig &s = p.soma;
            s.model = L.SOIF_TYPE ? SomaModel::exponential : SomaModel::thresholded;
            s.I_leak = leak * f("leak");
            s.I_gain = gain * f("gain");
            s.I_refr = refr * f("refr");
            s.I_dc = dc * f("dc");
            s.I_spkthr = spkthr * f("spkthr");
            s.dc_enabled = L.SO_DC;
            s.killed = L.SOIF_KILL;
            s.adaptation_enabled = L.SO_ADAPTATION;
            s.homeostasis_enabled = L.HO_ENABLE;
            s.homeostasis_active = L.HO_ACTIVE;
            s.homeostasis_target = L.HO_SO_DE ? HomeostasisTarget::nmda : HomeostasisTarget::soma;
            s.C_mem = an.C_mem * f("cmem");
            s.C_refr = an.C_refr;
            s.exp_feedback_gain = an.exp_feedback_gain;
            s.exp_ceiling_factor = an.exp_ceiling_factor;
            s.exp_refr_swing = an.exp_refr_swing;
            s.I_feedback_pw = bias("SOAD_PWTAU");
            s.C_feedback_px = an.C_feedback_px;
            s.I_adapt_w = bias("SOAD_W");
            s.adaptation = adapt;
            s.I_calcium_w = bias("SOCA_W");
            s.calcium = calcium;
            p.homeo = homeo;

            p.dpi[0] = ampa_e;
            p.dpi[1] = nmda_e;
            p.dpi[2] = gaba_b;
            p.dpi[3] = gaba_a;
            if (mm)
            {
                static const char *names[] = {"ampa", "nmda", "gaba_b", "gaba_a"};
                for (int b = 0; b < dendrite_count; ++b)
                {
                    p.dpi[b].I_tau *= f(std::string(names[b]) + "/tau");
                }
            }
            p.inh = {ampa_i, nmda_i};
            p.alpha = {L.DEAM_ALPHA, L.DENM_ALPHA};
            p.cond = {L.DEAM_CONDUCTANCE, L.DENM_CONDUCTANCE, L.DEGA_CONDUCTANCE};
            p.V_rev = V_rev;
            p.gate_from_ca = L.COHO_CA_MEM;
            p.nmda_gate = L.DENM_NMDA;
            p.V_nmda = V_nmda;
            p.diffusion = L.DEAM_AMPA;

            for (int k = 0; k < synapses_per_neuron; ++k)
            {
                const SynapseConfig &sc = nc.synapses[k];
                const std::size_t sid = static_cast<std::size_t>(gid) * synapses_per_neuron + k;
                SynapseParams &sp = sparams[sid];
                const auto target = sc.target();
                if (!target.has_value())
                {
                    sp = SynapseParams{};
                    continue;
                }
                const std::string sbase = mm ? base + "syn" + std::to_string(k) + "/" : "";
                const auto fs = [&](const char *cls) {
                    return mm ? mismatch.sample(sbase + cls) : 1.0;
                };
                sp.target = static_cast<int8_t>(*target);
                sp.stp = sc.stp_enabled;
                sp.weight = flexible_dac_output(w_base, sc.weight_bits, false) * fs("weight");
                const DelayFactors df{fs("dly0"), fs("dly1"), fs("dly2")};
                const double I_delay = synapse_delay_current(sc, delay_bases, df);
                sp.delay_ns = duration_ns(pulse_swing_time(
                                                  an.C_synapse_px, I_delay, phys()),
                        "synaptic delay");
                sp.width_ns = std::max<int64_t>(
                        duration_ns(pulse_swing_time(an.C_synapse_px, I_ext * fs("pulse"), phys()),
                                "synaptic pulse width"),
                        1);
                rt.cam.add(sc.cam_tag, SynapseRef{static_cast<uint16_t>(n),
                                               static_cast<uint8_t>(k)});
            }
        }
        rt.cam.finalize();

        DiffusionGridConfig grid_cfg;
        grid_cfg.g_n = bias("DEAM_NRES");
        grid_cfg.g_h = bias("DEAM_HRES");
        grid_cfg.g_v = bias("DEAM_VRES");
        rt.diffusion_neurons.clear();
        for (int n = 0; n < neurons_per_core; ++n)
        {
            if (core_cfg.neurons[n].latches.DEAM_AMPA)
            {
                grid_cfg.enabled_mask[n] = true;
                rt.diffusion_neurons.push_back(n);
            }
        }
        rt.diffusion.reset();
        if (!rt.diffusion_neurons.empty())
        {
            if (!(grid_cfg.g_n > 0.0))
            {
                throw ConfigError("DEAM_NRES must be positive when diffusion is enabled");
            }
            rt.diffusion = std::make_unique<DiffusionSolver>(grid_cfg);
        }
    }

    void build_groups()
    {
        groups.clear();
        group_of.assign(nstate.size(), -1);
        for (int chip = 0; chip < chip_count(); ++chip)
        {
            for (int core = 0; core < cores_per_chip; ++core)
            {
                const bool mux = cores[chip * cores_per_chip + core].de_mux;
                const int base = (chip * cores_per_chip + core) * neurons_per_core;
                for (int n = 0; n < neurons_per_core; ++n)
                {
                    if (mux_soma_of(n, mux) != n)
                    {
                        continue;
                    }
                    Group g;
                    g.soma = base + n;
                    g.t_ns = now;
                    for (int d = 0; d < neurons_per_core; ++d)
                    {
                        if (mux_soma_of(d, mux) == n)
                        {
                            g.dendrites.push_back(base + d);
                        }
                    }
                    for (const int d : g.dendrites)
                    {
                        group_of[d] = static_cast<int>(groups.size());
                    }
                    groups.push_back(std::move(g));
                }
            }
        }
    }

    void update_diffusion(const int chip, const int core)
    {
        CoreRuntime &rt = cores[chip * cores_per_chip + core];
        const int base = (chip * cores_per_chip + core) * neurons_per_core;
        if (!rt.diffusion)
        {
            for (int n = 0; n < neurons_per_core; ++n)
            {
                nstate[base + n].ampa_eff = 0.0;
            }
            return;
        }
        std::vector<double> inj(neurons_per_core, 0.0);
        for (const int n : rt.diffusion_neurons)
        {
            inj[n] = nstate[base + n].input[0];
        }
        const std::vector<double> out = rt.diffusion->solve(inj);
        for (const int n : rt.diffusion_neurons)
        {
            const double v = out[n] > 1e-3 * quiet_current ? out[n] : 0.0;
            if (v != nstate[base + n].ampa_eff)
            {
                catch_up(group_of[base + n], now);
                nstate[base + n].ampa_eff = v;
                active.insert(group_of[base + n]);
            }
        }
    }

    // ---- monitors ---------------------------------------------------------

    void reset_monitors()
    {
        ++monitor_generation;
        report.traces.clear();
        taps.assign(cfg.monitors.size(), {});
        for (std::size_t i = 0; i < cfg.monitors.size(); ++i)
        {
            report.traces.push_back(TraceRecord{cfg.monitors[i], {}});
            SimEvent ev;
            ev.t_ns = now;
            ev.kind = EventKind::monitor_tick;
            ev.a = static_cast<uint32_t>(i);
            ev.b = monitor_generation;
            push(ev);
        }
    }

    int neuron_gid(const ChipCoord chip, const int core, const int n) const
    {
        const int ci = cfg.chip_index(chip);
        if (ci < 0 || core < 0 || core >= cores_per_chip || n < 0 || n >= neurons_per_core)
        {
            throw ConfigError("neuron address out of range");
        }
        return (ci * cores_per_chip + core) * neurons_per_core + n;
    }

    double gain_current(const int soma_gid) const
    {
        const NeuronParams &p = nparams[soma_gid];
        if (p.soma.homeostasis_enabled && p.soma.homeostasis_target == HomeostasisTarget::nmda)
        {
            return gate_voltage_to_current(nstate[soma_gid].soma.V_gain, Polarity::n_type, phys());
        }
        return soma_gain_current(nstate[soma_gid].soma, p.soma, phys());
    }

    double dendrite_output(const int gid, const int b) const
    {
        const NeuronParams &p = nparams[gid];
        const NeuronState &st = nstate[gid];
        double x = st.dend[b].I_out;
        if (b < 2 && p.alpha[b])
        {
            x = std::max(x - st.inh[b].I_out, 0.0);
        }
        return x;
    }

    double weight_now(const std::size_t sid) const
    {
        const SynapseParams &sp = sparams[sid];
        if (!sp.stp)
        {
            return sp.weight;
        }
        const SynapseState &ss = sstate[sid];
        if (!ss.stp_init)
        {
            const int core_rt = static_cast<int>(sid / synapses_per_neuron / neurons_per_core);
            return gate_voltage_to_current(cores[core_rt].V_stpw, Polarity::n_type, phys());
        }
        StpState s = stp_state(sid);
        s = stp_recover(s, ns_to_s(now - ss.stp_t));
        return stp_weight(s, phys());
    }

    StpState stp_state(const std::size_t sid) const
    {
        const int core_rt = static_cast<int>(sid / synapses_per_neuron / neurons_per_core);
        StpState s;
        s.V_stpw = cores[core_rt].V_stpw;
        s.I_stpstr = cores[core_rt].I_stpstr;
        s.tau_recovery = cfg.analog.stp_tau_recovery;
        s.C_stp = cfg.analog.C_stp;
        s.V_stp = sstate[sid].stp_init ? sstate[sid].V_stp : s.V_stpw;
        return s;
    }

    double tap_value(const MonitorTap &tap)
    {
        using S = MonitorSource;
        if (tap.source == S::external || tap.source == S::calibration)
        {
            return tap.constant_value;
        }
        const int ci = cfg.chip_index(tap.chip);
        const bool mux = cores[ci * cores_per_chip + tap.core].de_mux;
        const int gid = neuron_gid(tap.chip, tap.core, tap.neuron);
        const int soma_gid = neuron_gid(tap.chip, tap.core, mux_soma_of(tap.neuron, mux));
        catch_up(group_of[gid], now);
        const NeuronState &st = nstate[soma_gid];
        switch (tap.source)
        {
        case S::membrane:
            return tap.kind == MonitorKind::probe ?
                    membrane_voltage(st.soma.membrane.I_out, phys()) :
                    st.soma.membrane.I_out;
        case S::refractory:
            return ns_to_s(now) < st.soma.refractory_until ? nparams[soma_gid].soma.I_refr : 0.0;
        case S::adaptation:
            return st.soma.adaptation.I_out;
        case S::calcium:
            return st.soma.calcium.I_out;
        case S::dendritic:
            return dendrite_output(gid, static_cast<int>(tap.branch));
        case S::synapse_weight:
            return weight_now(static_cast<std::size_t>(gid) * synapses_per_neuron + tap.synapse);
        case S::homeo_gain:
            return gain_current(soma_gid);
        default:
            return 0.0;
        }
    }

    void on_monitor_tick(const SimEvent &ev)
    {
        if (ev.b != monitor_generation || ev.a >= taps.size())
        {
            return;
        }
        const MonitorTap &tap = cfg.monitors[ev.a];
        TapState &ts = taps[ev.a];
        const double v = tap_value(tap);
        auto &trace = report.traces[ev.a];
        if (tap.kind == MonitorKind::probe)
        {
            trace.samples.push_back({now, v});
            if (sample_listener)
            {
                sample_listener(ev.a, trace.samples.back());
            }
        }
        else
        {
            if (ts.have_prev)
            {
                ts.charge += 0.5 * (ts.prev + v) * ns_to_s(tap.interval_ns);
                ++ts.samples;
                if (ts.samples % tap.window_samples == 0)
                {
                    const double window = ns_to_s(tap.interval_ns * tap.window_samples);
                    const int64_t counts = sadc_counts(tap, ts.charge / window, window);
                    trace.samples.push_back({now, static_cast<double>(counts)});
                    ts.charge = 0.0;
                    if (sample_listener)
                    {
                        sample_listener(ev.a, trace.samples.back());
                    }
                }
            }
            ts.prev = v;
            ts.have_prev = true;
        }
        SimEvent next = ev;
        next.t_ns = now + tap.interval_ns;
        push(next);
    }

    // ---- neuron dynamics --------------------------------------------------

    DpiParams nmda_params(const int gid, const int soma_gid) const
    {
        DpiParams p = nparams[gid].dpi[1];
        const SomaConfig &s = nparams[soma_gid].soma;
        if (s.homeostasis_enabled && s.homeostasis_target == HomeostasisTarget::nmda)
        {
            p.I_gain = gate_voltage_to_current(nstate[soma_gid].soma.V_gain, Polarity::n_type, phys());
        }
        return p;
    }

    double branch_input(const int gid, const int b) const
    {
        const NeuronState &st = nstate[gid];
        if (b == 0 && nparams[gid].diffusion)
        {
            return st.ampa_eff;
        }
        return st.input[b];
    }

    DpiState advance_dpi(const DpiState &s, const DpiParams &p, const double in, const double h) const
    {
        if (full() && in > 0.0)
        {
            return dpi_advance_full(s, p, in, h, phys(), cfg.engine.full_rtol, cfg.engine.full_floor);
        }
        return dpi_advance(s, p, in, h, phys());
    }

    double mean_dpi(const DpiState &s, const DpiParams &p, const double in, const double h) const
    {
        if (full() && in > 0.0)
        {
            const DpiState e = advance_dpi(s, p, in, h);
            return 0.5 * (s.I_out + e.I_out);
        }
        return dpi_mean(s, p, in, h, phys());
    }

    SomaInputs mean_inputs(const Group &g, const double h) const
    {
        const NeuronState &soma = nstate[g.soma];
        const double V_mem = membrane_voltage(soma.soma.membrane.I_out, phys());
        const double V_ca = membrane_voltage(soma.soma.calcium.I_out, phys());
        SomaInputs in;
        for (const int d : g.dendrites)
        {
            const NeuronParams &p = nparams[d];
            const NeuronState &st = nstate[d];
            std::array<double, dendrite_count> out{};
            for (int b = 0; b < dendrite_count; ++b)
            {
                const double I_in = branch_input(d, b);
                const DpiParams params = b == 1 ? nmda_params(d, g.soma) : p.dpi[b];
                double x = mean_dpi(st.dend[b], params, I_in, h);
                if (b < 2 && p.alpha[b])
                {
                    x = std::max(x - mean_dpi(st.inh[b], p.inh[b], I_in, h), 0.0);
                }
                if (b == 1 && p.nmda_gate)
                {
                    x = nmda_gate(x, V_mem, p.V_nmda);
                }
                if (b < 3 && p.cond[b])
                {
                    x = conductance_transform(x, p.V_rev[b], p.gate_from_ca ? V_ca : V_mem, phys());
                }
                out[b] = x;
            }
            in.I_dendritic += out[0] + out[1] - out[2];
            in.I_somatic += out[3];
        }
        return in;
    }

    void advance_dendrites(const Group &g, const double h)
    {
        for (const int d : g.dendrites)
        {
            const NeuronParams &p = nparams[d];
            NeuronState &st = nstate[d];
            for (int b = 0; b < dendrite_count; ++b)
            {
                const double I_in = branch_input(d, b);
                const DpiParams params = b == 1 ? nmda_params(d, g.soma) : p.dpi[b];
                st.dend[b] = advance_dpi(st.dend[b], params, I_in, h);
                if (b < 2 && p.alpha[b])
                {
                    st.inh[b] = advance_dpi(st.inh[b], p.inh[b], I_in, h);
                }
            }
        }
    }

    SomaStepOptions soma_options(const bool stop_at_first) const
    {
        SomaStepOptions o;
        o.stop_at_first_spike = stop_at_first;
        o.end_threshold_tolerance = stop_at_first ? 0.0 : 1e-9;
        o.full_model = full();
        o.full_rtol = cfg.engine.full_rtol;
        o.full_floor = cfg.engine.full_floor;
        return o;
    }

    // Exact catch-up of a group whose inputs are all zero.
    void catch_up(const int gi, const int64_t t)
    {
        if (gi < 0)
        {
            return;
        }
        Group &g = groups[gi];
        if (g.t_ns >= t)
        {
            return;
        }
        const double h = ns_to_s(t - g.t_ns);
        advance_dendrites(g, h);
        const NeuronParams &p = nparams[g.soma];
        NeuronState &st = nstate[g.soma];
        st.soma = soma_step(st.soma, p.soma, p.homeo, mean_inputs(g, 0.0),
                ns_to_s(g.t_ns), h, phys(), soma_options(false))
                          .state;
        g.t_ns = t;
    }

    void catch_up_all(const int64_t t)
    {
        for (std::size_t g = 0; g < groups.size(); ++g)
        {
            catch_up(static_cast<int>(g), t);
        }
    }

    bool is_quiet(const Group &g) const
    {
        const double thr = std::max(quiet_current, 10.0 * cfg.engine.full_floor);
        for (const int d : g.dendrites)
        {
            const NeuronState &st = nstate[d];
            for (int b = 0; b < dendrite_count; ++b)
            {
                if (st.pulses[b] > 0 || st.input[b] > 0.0 || st.dend[b].I_out > thr)
                {
                    return false;
                }
            }
            if (st.ampa_eff > 0.0 || st.inh[0].I_out > thr || st.inh[1].I_out > thr)
            {
                return false;
            }
        }
        const NeuronParams &p = nparams[g.soma];
        const NeuronState &st = nstate[g.soma];
        if (st.soma.membrane.I_out > thr)
        {
            return false;
        }
        if (p.soma.dc_enabled && p.soma.I_dc > 0.0)
        {
            return false;
        }
        if (p.soma.homeostasis_enabled && p.soma.homeostasis_active)
        {
            return false;
        }
        return true;
    }

    void refresh_activity()
    {
        for (std::size_t g = 0; g < groups.size(); ++g)
        {
            groups[g].t_ns = std::max(groups[g].t_ns, std::min(groups[g].t_ns, now));
            if (!is_quiet(groups[g]))
            {
                catch_up(static_cast<int>(g), now);
                active.insert(static_cast<int>(g));
            }
        }
        std::set<int> keep;
        for (const int g : active)
        {
            if (g < static_cast<int>(groups.size()))
            {
                keep.insert(g);
            }
        }
        active.swap(keep);
    }

    void substep(const int64_t target)
    {
        if (active.empty())
        {
            now = target;
            return;
        }
        const int64_t h_ns = std::min(cfg.engine.max_step_ns, target - now);
        const double t0 = ns_to_s(now);
        const double h = ns_to_s(h_ns);
        const std::vector<int> act(active.begin(), active.end());
        std::vector<SomaInputs> inputs(act.size());
        double first = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < act.size(); ++i)
        {
            const Group &g = groups[act[i]];
            inputs[i] = mean_inputs(g, h);
            const NeuronParams &p = nparams[g.soma];
            const auto r = soma_step(nstate[g.soma].soma, p.soma, p.homeo, inputs[i], t0, h,
                    phys(), soma_options(true));
            if (!r.spikes.empty())
            {
                first = std::min(first, r.spikes.front());
            }
        }
        int64_t t_stop = now + h_ns;
        if (std::isfinite(first))
        {
            const int64_t off = std::max<int64_t>(
                    static_cast<int64_t>(std::ceil((first - t0) * 1e9)), 1);
            t_stop = std::min(t_stop, now + off);
        }
        const double hh = ns_to_s(t_stop - now);
        std::vector<int> fired;
        for (std::size_t i = 0; i < act.size(); ++i)
        {
            Group &g = groups[act[i]];
            advance_dendrites(g, hh);
            const NeuronParams &p = nparams[g.soma];
            NeuronState &st = nstate[g.soma];
            const auto r = soma_step(st.soma, p.soma, p.homeo, inputs[i], t0, hh, phys(),
                    soma_options(false));
            st.soma = r.state;
            g.t_ns = t_stop;
            if (!r.spikes.empty())
            {
                fired.push_back(g.soma);
            }
        }
        if (step_listener)
        {
            step_listener(now, t_stop);
        }
        now = t_stop;
        ++report.counters.substeps;
        for (const int gi : act)
        {
            if (is_quiet(groups[gi]))
            {
                active.erase(gi);
            }
        }
        for (const int s : fired)
        {
            emit_spike(s);
        }
    }

    // ---- events -----------------------------------------------------------

    void emit_spike(const int gid)
    {
        const int chip = gid / neurons_per_chip;
        const int core = (gid / neurons_per_core) % cores_per_chip;
        const int n = gid % neurons_per_core;
        const ChipCoord cc{chip % cfg.width, chip / cfg.width};
        const SpikeRecord rec{now, cc, core, n};
        report.spikes.push_back(rec);
        report.energy.record_spike(chip, core, nparams[gid].soma.model);
        ++report.counters.spikes;
        if (spike_listener)
        {
            spike_listener(rec);
        }
        const NeuronConfig &nc = cfg.chips[chip].cores[core].neurons[n];
        for (const SramEntry &e : nc.srams)
        {
            if (e.cores == 0)
            {
                continue;
            }
            const uint32_t word = encode_word(InterNeuronEvent::make(e.tag, e.dx, e.dy, e.cores));
            report.output_events.push_back({now, word, cc});
            route_word(cc, word, now);
        }
    }

    void error(const std::string &msg)
    {
        report.errors.push_back({now, msg});
        ++report.counters.input_errors;
    }

    void route_word(const ChipCoord src, const uint32_t word, const int64_t t)
    {
        ++report.counters.words_routed;
        const RouteResult rr = grid.route(src, word);
        if (!rr.delivered)
        {
            ++report.counters.words_dropped_grid;
            return;
        }
        SimEvent ev;
        ev.t_ns = t + rr.hops * cfg.engine.link_latency_ns;
        ev.b = static_cast<uint32_t>(cfg.chip_index(rr.destination));
        if (is_sensor_word(rr.word))
        {
            ev.kind = EventKind::input_word;
            ev.a = rr.word;
            ev.c = from_neighbour;
        }
        else
        {
            const auto ine = std::get<InterNeuronEvent>(decode_word(rr.word));
            ev.kind = EventKind::delivery;
            ev.a = ine.tag;
            ev.c = ine.cores;
        }
        push(ev);
    }

    void on_input(const SimEvent &ev)
    {
        ++report.counters.input_events;
        const int chip = static_cast<int>(ev.b);
        const ChipCoord cc{chip % cfg.width, chip / cfg.width};
        if (!is_sensor_word(ev.a))
        {
            route_word(cc, ev.a, now);
            return;
        }
        const auto &pipe = cfg.chips[chip].sensor;
        if (!pipe.has_value())
        {
            error("sensor word 0x" + [&] {
                char b[16];
                std::snprintf(b, sizeof b, "%06X", ev.a);
                return std::string(b);
            }() + " at a chip without a sensor pipeline");
            return;
        }
        auto se = std::get<SensorEvent>(decode_word(ev.a));
        SensorPipelineConfig local = *pipe;
        if (ev.c & from_neighbour)
        {
            local.duplicate_to.reset();
        }
        const SensorResult r = process_sensor_event(se, local);
        report.sensor.record(r);
        if (r.duplicate_word.has_value())
        {
            route_word(cc, *r.duplicate_word, now);
        }
        if (r.mapped_word.has_value())
        {
            route_word(cc, *r.mapped_word, now);
        }
    }

    void on_delivery(const SimEvent &ev)
    {
        ++report.counters.deliveries;
        if (ev.c == 0)
        {
            ++report.counters.words_dropped_no_cores;
            return;
        }
        const int chip = static_cast<int>(ev.b);
        for (int core = 0; core < cores_per_chip; ++core)
        {
            if (!(ev.c & (1U << core)))
            {
                continue;
            }
            const CoreRuntime &rt = cores[chip * cores_per_chip + core];
            for (const SynapseRef &ref : rt.cam.matches(static_cast<uint16_t>(ev.a)))
            {
                ++report.counters.cam_matches;
                const int gid = (chip * cores_per_chip + core) * neurons_per_core + ref.neuron;
                trigger_synapse(static_cast<std::size_t>(gid) * synapses_per_neuron + ref.synapse);
            }
        }
    }

    void trigger_synapse(const std::size_t sid)
    {
        SynapseState &ss = sstate[sid];
        const SynapseParams &sp = sparams[sid];
        if (now < ss.busy_until)
        {
            ++report.counters.pulses_dropped_busy;
            return;
        }
        const int64_t onset = now + sp.delay_ns;
        ss.busy_until = onset + sp.width_ns;
        SimEvent ev;
        ev.t_ns = onset;
        ev.kind = EventKind::pulse_edge;
        ev.a = static_cast<uint32_t>(sid);
        ev.b = 1;
        push(ev);
    }

    void on_pulse_edge(const SimEvent &ev)
    {
        const std::size_t sid = ev.a;
        const int gid = static_cast<int>(sid / synapses_per_neuron);
        const SynapseParams &sp = sparams[sid];
        if (sp.target < 0)
        {
            return;
        }
        const int b = sp.target;
        const int gi = group_of[gid];
        catch_up(gi, now);
        NeuronState &st = nstate[gid];
        if (ev.b == 1)
        {
            double w = sp.weight;
            if (sp.stp)
            {
                SynapseState &ss = sstate[sid];
                StpState s = stp_state(sid);
                if (ss.stp_init)
                {
                    s = stp_recover(s, ns_to_s(now - ss.stp_t));
                }
                w = stp_weight(s, phys());
                s = stp_on_pulse(s, ns_to_s(sp.width_ns));
                ss.V_stp = s.V_stp;
                ss.stp_t = now;
                ss.stp_init = true;
            }
            ++report.counters.pulses_started;
            st.input[b] += w;
            ++st.pulses[b];
            SimEvent off = ev;
            off.t_ns = now + sp.width_ns;
            off.b = 0;
            off.w = w;
            push(off);
        }
        else
        {
            --st.pulses[b];
            st.input[b] = st.pulses[b] > 0 ? std::max(st.input[b] - ev.w, 0.0) : 0.0;
        }
        active.insert(gi);
        if (b == 0 && nparams[gid].diffusion)
        {
            const int chip = gid / neurons_per_chip;
            const int core = (gid / neurons_per_core) % cores_per_chip;
            update_diffusion(chip, core);
        }
    }

    void process(const SimEvent &ev)
    {
        switch (ev.kind)
        {
        case EventKind::pulse_edge:
            on_pulse_edge(ev);
            break;
        case EventKind::input_word:
            on_input(ev);
            break;
        case EventKind::delivery:
            on_delivery(ev);
            break;
        case EventKind::monitor_tick:
            on_monitor_tick(ev);
            break;
        }
    }

    void run_until(const int64_t T)
    {
        while (true)
        {
            const int64_t t_evt = queue.empty() ? std::numeric_limits<int64_t>::max() :
                                                  queue.top().t_ns;
            const int64_t target = std::min(t_evt, T);
            if (now < target)
            {
                substep(target);
                continue;
            }
            if (t_evt > T)
            {
                break;
            }
            const SimEvent ev = queue.top();
            queue.pop();
            process(ev);
            ++report.counters.events_processed;
            if (event_listener)
            {
                event_listener(ev);
            }
            if (command_hook)
            {
                command_hook();
            }
        }
        now = std::max(now, T);
        report.until_ns = std::max(report.until_ns, now);
    }
};

spikechip::Simulator::Simulator(ChipGridConfig cfg) : impl_(std::make_unique<Impl>())
{
    impl_->build(cfg, true);
}

spikechip::Simulator::~Simulator() = default;
spikechip::Simulator::Simulator(Simulator &&) noexcept = default;
spikechip::Simulator &spikechip::Simulator::operator=(Simulator &&) noexcept = default;

void spikechip::Simulator::inject(const InputEvent &ev)
{
    Impl &m = *impl_;
    if (ev.t_ns < m.now)
    {
        m.error("input event at " + std::to_string(ev.t_ns) + " ns lies in the past");
        return;
    }
    if (ev.word > word_mask)
    {
        m.error("input word wider than 24 bits");
        return;
    }
    const int ci = m.cfg.chip_index(ev.chip);
    if (ci < 0)
    {
        m.error("input event addressed to chip (" + std::to_string(ev.chip.x) + ", " +
                std::to_string(ev.chip.y) + ") outside the grid");
        return;
    }
    SimEvent e;
    e.t_ns = ev.t_ns;
    e.kind = EventKind::input_word;
    e.a = ev.word;
    e.b = static_cast<uint32_t>(ci);
    m.push(e);
}

void spikechip::Simulator::inject(const std::span<const InputEvent> events)
{
    for (const auto &e : events)
    {
        inject(e);
    }
}

void spikechip::Simulator::run_until(const int64_t t_ns)
{
    impl_->run_until(t_ns);
}

int64_t spikechip::Simulator::now() const
{
    return impl_->now;
}

int64_t spikechip::Simulator::next_event_time() const
{
    return impl_->queue.empty() ? std::numeric_limits<int64_t>::max() : impl_->queue.top().t_ns;
}

const spikechip::ChipGridConfig &spikechip::Simulator::config() const
{
    return impl_->cfg;
}

void spikechip::Simulator::apply_config(const ChipGridConfig &cfg)
{
    impl_->build(cfg, false);
}

void spikechip::Simulator::set_bias(
        const ChipCoord chip, const int core, const std::string &name, const BiasCode &code)
{
    ChipGridConfig next = impl_->cfg;
    if (core < 0 || core >= cores_per_chip)
    {
        throw ConfigError("core index out of range");
    }
    next.chip(chip).cores[core].set_bias(name, code);
    impl_->build(next, false);
}

void spikechip::Simulator::set_latch(const ChipCoord chip, const int core,
        const int neuron, const std::string &name, const bool value)
{
    ChipGridConfig next = impl_->cfg;
    if (core < 0 || core >= cores_per_chip || neuron < 0 || neuron >= neurons_per_core)
    {
        throw ConfigError("neuron address out of range");
    }
    if (name == "DE_MUX")
    {
        next.chip(chip).cores[core].de_mux = value;
    }
    else
    {
        bool *latch = find_latch(next.chip(chip).cores[core].neurons[neuron].latches, name);
        if (latch == nullptr)
        {
            throw ConfigError("unknown latch '" + name + "'");
        }
        *latch = value;
    }
    impl_->build(next, false);
}

void spikechip::Simulator::set_command_hook(std::function<void()> hook)
{
    impl_->command_hook = std::move(hook);
}

void spikechip::Simulator::set_spike_listener(std::function<void(const SpikeRecord &)> listener)
{
    impl_->spike_listener = std::move(listener);
}

void spikechip::Simulator::set_sample_listener(
        std::function<void(std::size_t, const TraceSample &)> listener)
{
    impl_->sample_listener = std::move(listener);
}

void spikechip::Simulator::set_event_listener(std::function<void(const SimEvent &)> listener)
{
    impl_->event_listener = std::move(listener);
}

void spikechip::Simulator::set_step_listener(std::function<void(int64_t, int64_t)> listener)
{
    impl_->step_listener = std::move(listener);
}

const spikechip::SimulationReport &spikechip::Simulator::report() const
{
    return impl_->report;
}

spikechip::SimulationReport spikechip::Simulator::take_report()
{
    SimulationReport r = impl_->report;
    return r;
}

void spikechip::Simulator::clear_records()
{
    SimulationReport &r = impl_->report;
    r.spikes.clear();
    r.output_events.clear();
    r.errors.clear();
    for (auto &t : r.traces)
    {
        t.samples.clear();
    }
}

spikechip::NeuronProbe spikechip::Simulator::probe(
        const ChipCoord chip, const int core, const int neuron)
{
    Impl &m = *impl_;
    const int gid = m.neuron_gid(chip, core, neuron);
    const int ci = m.cfg.chip_index(chip);
    const bool mux = m.cores[ci * cores_per_chip + core].de_mux;
    const int soma = m.neuron_gid(chip, core, mux_soma_of(neuron, mux));
    m.catch_up(m.group_of[gid], m.now);
    const NeuronState &s = m.nstate[soma];
    NeuronProbe p;
    p.I_mem = s.soma.membrane.I_out;
    p.V_mem = membrane_voltage(p.I_mem, m.phys());
    p.I_adaptation = s.soma.adaptation.I_out;
    p.I_calcium = s.soma.calcium.I_out;
    p.V_gain = s.soma.V_gain;
    p.I_gain = m.gain_current(soma);
    p.refractory = ns_to_s(m.now) < s.soma.refractory_until;
    for (int b = 0; b < dendrite_count; ++b)
    {
        p.dendrite[b] = m.dendrite_output(gid, b);
        p.input[b] = m.branch_input(gid, b);
    }
    return p;
}

double spikechip::Simulator::synapse_weight(
        const ChipCoord chip, const int core, const int neuron, const int synapse)
{
    Impl &m = *impl_;
    if (synapse < 0 || synapse >= synapses_per_neuron)
    {
        throw ConfigError("synapse index out of range");
    }
    const int gid = m.neuron_gid(chip, core, neuron);
    return m.weight_now(static_cast<std::size_t>(gid) * synapses_per_neuron + synapse);
}

uint64_t spikechip::Simulator::state_hash()
{
    Impl &m = *impl_;
    m.catch_up_all(m.now);
    uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char *>(&m.now), sizeof m.now));
    const auto mix = [&](const double v) {
        uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        h = splitmix64(h ^ bits);
    };
    for (const auto &st : m.nstate)
    {
        mix(st.soma.membrane.I_out);
        mix(st.soma.refractory_until);
        mix(st.soma.adaptation.I_out);
        mix(st.soma.calcium.I_out);
        mix(st.soma.V_gain);
        for (int b = 0; b < dendrite_count; ++b)
        {
            mix(st.dend[b].I_out);
            mix(st.input[b]);
        }
    }
    for (const auto &ss : m.sstate)
    {
        mix(static_cast<double>(ss.busy_until));
        mix(ss.V_stp);
    }
    h = splitmix64(h ^ m.report.hash());
    return h;
}

std::string spikechip::SimulationReport::canonical_text() const
{
    std::string out;
    append(out, "until_ns %" PRId64 "\n", until_ns);
    append(out, "spikes %zu\n", spikes.size());
    for (const auto &s : spikes)
    {
        append(out, "%" PRId64 " %d %d %d %d\n", s.t_ns, s.chip.x, s.chip.y, s.core, s.neuron);
    }
    append(out, "output_events %zu\n", output_events.size());
    for (const auto &e : output_events)
    {
        append(out, "%" PRId64 " %06X %d %d\n", e.t_ns, e.word, e.chip.x, e.chip.y);
    }
    for (const auto &t : traces)
    {
        append(out, "trace %s %zu\n", t.tap.label().c_str(), t.samples.size());
        for (const auto &s : t.samples)
        {
            append(out, "%" PRId64 " %.17g\n", s.t_ns, s.value);
        }
    }
    const EngineCounters &c = counters;
    append(out,
            "counters %" PRIu64 " %" PRIu64 " %" PRIu64 " %" PRIu64 " %" PRIu64 " %" PRIu64
            " %" PRIu64 " %" PRIu64 " %" PRIu64 " %" PRIu64 "\n",
            c.input_events, c.input_errors, c.words_routed, c.words_dropped_grid,
            c.words_dropped_no_cores, c.deliveries, c.cam_matches, c.pulses_started,
            c.pulses_dropped_busy, c.spikes);
    append(out,
            "sensor %" PRIu64 " %" PRIu64 " %" PRIu64 " %" PRIu64 " %" PRIu64 " %" PRIu64
            " %" PRIu64 " %" PRIu64 " %" PRIu64 "\n",
            sensor.input, sensor.mapped, sensor.duplicated_and_mapped, sensor.duplicates_emitted,
            sensor.dropped_geometry, sensor.dropped_filter, sensor.dropped_cut,
            sensor.dropped_polarity, sensor.dropped_unmapped);
    for (const auto &[key, n] : energy.counts())
    {
        append(out, "energy %d %d %" PRIu64 " %" PRIu64 "\n", key.first, key.second, n.first,
                n.second);
    }
    append(out, "energy_pJ %.17g\n", energy.energy_pJ());
    for (const auto &e : errors)
    {
        append(out, "error %" PRId64 " %s\n", e.t_ns, e.message.c_str());
    }
    return out;
}

uint64_t spikechip::SimulationReport::hash() const
{
    return fnv1a64(canonical_text());
}

spikechip::SimulationReport spikechip::run(const ChipGridConfig &cfg,
        const std::span<const InputEvent> inputs, const int64_t until_ns)
{
    Simulator sim(cfg);
    sim.inject(inputs);
    sim.run_until(until_ns);
    return sim.take_report();
}
