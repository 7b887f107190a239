// scenarios.cpp

#include <algorithm>
#include <cmath>
#include <random>

#include "spikechip/scenarios.hpp"

namespace
{

using namespace spikechip;
using Json = nlohmann::json;

constexpr int64_t us = 1000;
constexpr int64_t ms = 1000 * us;
constexpr int64_t sec = 1000 * ms;
constexpr ChipCoord origin{};

CoreConfig &core0(ChipGridConfig &cfg)
{
    return cfg.chips[0].cores[0];
}

void set_biases(CoreConfig &core,
        std::initializer_list<std::pair<const char *, BiasCode>> codes)
{
    for (const auto &[name, code] : codes)
    {
        core.set_bias(name, code);
    }
}

void connect(CoreConfig &core, const int neuron, const int synapse, const uint16_t tag,
        const int weight_bit, const Dendrite d)
{
    SynapseConfig &s = core.neurons[neuron].synapses[synapse];
    s.cam_tag = tag;
    s.weight_bits = {};
    s.weight_bits[weight_bit] = true;
    s.set_target(d);
}

uint32_t tag_word(const uint16_t tag)
{
    return encode_word(InterNeuronEvent::make(tag, 0, 0, 0x1));
}

MonitorTap probe_tap(const MonitorSource source, const int64_t interval_ns,
        const int neuron = 0, const Dendrite branch = Dendrite::ampa)
{
    MonitorTap t;
    t.kind = MonitorKind::probe;
    t.source = source;
    t.neuron = neuron;
    t.branch = branch;
    t.interval_ns = interval_ns;
    return t;
}

double bias(const ChipGridConfig &cfg, const char *name)
{
    return cfg.bias_current(origin, 0, name);
}

std::vector<int64_t> spikes_of(const SimulationReport &r, const int neuron)
{
    std::vector<int64_t> t;
    for (const SpikeRecord &s : r.spikes)
    {
        if (s.core == 0 && s.neuron == neuron && s.chip == origin)
        {
            t.push_back(s.t_ns);
        }
    }
    return t;
}

int count_in(const std::vector<int64_t> &times, const int64_t t0, const int64_t t1)
{
    return static_cast<int>(std::count_if(times.begin(), times.end(),
            [&](const int64_t t) { return t >= t0 && t < t1; }));
}

// Fast refractory clamp (about 2 ms) shared by the scenarios.
constexpr BiasCode fast_refractory{2, 77};

} // namespace

std::vector<spikechip::InputEvent> spikechip::poisson_train(const double rate_hz,
        const double duration_s, const uint64_t seed, const uint32_t word,
        const ChipCoord chip)
{
    if (!(rate_hz > 0.0) || !(duration_s >= 0.0))
    {
        throw ConfigError("Poisson train needs a positive rate and a non-negative duration");
    }
    std::mt19937_64 rng(seed);
    std::vector<InputEvent> events;
    double t = 0.0;
    for (;;)
    {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        t += -std::log1p(-u) / rate_hz;
        if (t >= duration_s)
        {
            break;
        }
        events.push_back({std::llround(t * 1e9), word, chip});
    }
    return events;
}

double spikechip::dpi_time_constant(
        const double capacitance, const double I_tau, const PhysicsConstants &consts)
{
    return capacitance * consts.thermal_voltage / (consts.kappa * I_tau);
}

// ---- adaptation -------------------------------------------------------------

spikechip::ChipGridConfig spikechip::adaptation_config()
{
    ChipGridConfig cfg;
    CoreConfig &core = core0(cfg);
    // 20 ms membrane, DC at about 2.5x threshold, 130 ms adaptation
    set_biases(core, {
            {"SOIF_LEAK", {0, 50}},
            {"SOIF_GAIN", {0, 50}},
            {"SOIF_REFR", fast_refractory},
            {"SOIF_DC", {2, 86}},
            {"SOAD_TAU", {0, 1}},
            {"SOAD_GAIN", {0, 1}},
            {"SOAD_W", {3, 160}},
    });
    NeuronLatches &l = core.neurons[0].latches;
    l.SO_DC = true;
    l.SO_ADAPTATION = true;
    cfg.monitors.push_back(probe_tap(MonitorSource::membrane, 1 * ms));
    cfg.monitors.push_back(probe_tap(MonitorSource::adaptation, 1 * ms));
    return cfg;
}

spikechip::AdaptationResult spikechip::run_adaptation()
{
    AdaptationResult r;
    r.run.name = "adaptation";
    r.run.config = adaptation_config();
    r.input_off_ns = 1 * sec;
    r.tau_adaptation = dpi_time_constant(
            r.run.config.analog.C_adaptation, bias(r.run.config, "SOAD_TAU"),
            r.run.config.analog.physics);

    Simulator sim(r.run.config);
    sim.run_until(r.input_off_ns);
    r.I_adapt_at_off = sim.probe(origin, 0, 0).I_adaptation;
    sim.set_latch(origin, 0, 0, "SO_DC", false);
    const int64_t after = r.input_off_ns +
            static_cast<int64_t>(std::ceil(5.0 * r.tau_adaptation * 1e9));
    sim.run_until(after);
    r.I_adapt_after = sim.probe(origin, 0, 0).I_adaptation;
    sim.run_until(std::max(after, r.input_off_ns + 1 * sec));
    r.run.report = sim.take_report();

    for (const int64_t t : spikes_of(r.run.report, 0))
    {
        if (t < r.input_off_ns)
        {
            r.spike_times.push_back(t);
        }
    }
    for (std::size_t i = 1; i < r.spike_times.size(); ++i)
    {
        r.rates.push_back(1e9 / static_cast<double>(r.spike_times[i] - r.spike_times[i - 1]));
    }
    return r;
}

// ---- homeostasis ------------------------------------------------------------

spikechip::ChipGridConfig spikechip::homeostasis_config()
{
    ChipGridConfig cfg;
    CoreConfig &core = core0(cfg);
    // The gain starts at V_ref_M (110 pA), ten times the gain that holds
    // calcium at the reference under 100 Hz input.
    set_biases(core, {
            {"SOIF_LEAK", {0, 20}},
            {"SOIF_REFR", fast_refractory},
            {"DEAM_ETAU", {0, 7}},
            {"DEAM_EGAIN", {0, 7}},
            {"SYAM_W0", {3, 50}},
            {"SOCA_W", {3, 100}},
            {"SOCA_TAU", {0, 1}},
            {"SOCA_GAIN", {0, 1}},
            {"SOHO_VREF", {1, 153}},
            {"SOHO_VREF_M", {1, 51}},
            {"SOHO_VREF_L", {0, 140}},
            {"SOHO_VREF_H", {1, 140}},
    });
    connect(core, 0, 0, 1, 0, Dendrite::ampa);
    NeuronLatches &l = core.neurons[0].latches;
    l.HO_ENABLE = true;
    l.HO_ACTIVE = true;

    MonitorTap ca;
    ca.kind = MonitorKind::sadc;
    ca.group = 1;
    ca.channel = 0;
    ca.source = MonitorSource::calcium;
    ca.gain = 1e13;
    ca.interval_ns = 10 * ms;
    ca.window_samples = 200;
    cfg.monitors.push_back(ca);
    cfg.monitors.push_back(probe_tap(MonitorSource::calcium, 10 * ms));
    cfg.monitors.push_back(probe_tap(MonitorSource::homeo_gain, 10 * ms));
    cfg.monitors.push_back(probe_tap(MonitorSource::membrane, 1 * ms));
    return cfg;
}

spikechip::HomeostasisResult spikechip::run_homeostasis(
        const uint64_t seed, const double duration_s)
{
    HomeostasisResult r;
    r.run.name = "homeostasis";
    r.run.config = homeostasis_config();
    r.run.inputs = poisson_train(100.0, duration_s, seed, tag_word(1));
    const ChipGridConfig &cfg = r.run.config;
    r.I_Ca_ref = bias(cfg, "SOHO_VREF");
    const MonitorTap &sadc = cfg.monitors[0];
    r.window_s = static_cast<double>(sadc.interval_ns * sadc.window_samples) * 1e-9;
    r.reference_counts = sadc.gain * r.I_Ca_ref * r.window_s;
    const double band = cfg.analog.homeostasis_deadband * r.I_Ca_ref;

    Simulator sim(cfg);
    sim.inject(r.run.inputs);
    NeuronProbe prev = sim.probe(origin, 0, 0);
    r.initial_gain = prev.I_gain;
    uint64_t spikes_before = 0;
    const int64_t until = std::llround(duration_s * 1e9);
    for (int64_t t = 1 * ms; t <= until; t += 1 * ms)
    {
        sim.run_until(t);
        const NeuronProbe p = sim.probe(origin, 0, 0);
        const uint64_t spikes = sim.report().counters.spikes;
        // Calcium only decays between spikes, so both ends on one side of
        // the band means the whole interval is.
        const int side0 = prev.I_calcium > r.I_Ca_ref + band ? -1 :
                (prev.I_calcium < r.I_Ca_ref - band ? 1 : 0);
        const int side1 = p.I_calcium > r.I_Ca_ref + band ? -1 :
                (p.I_calcium < r.I_Ca_ref - band ? 1 : 0);
        if (spikes == spikes_before && side0 != 0 && side0 == side1)
        {
            ++r.direction_checks;
            const double dV = p.V_gain - prev.V_gain;
            if (!(dV * side0 > 0.0))
            {
                ++r.direction_violations;
            }
        }
        spikes_before = spikes;
        prev = p;
    }
    r.run.report = sim.take_report();

    for (const TraceSample &s : r.run.report.traces[0].samples)
    {
        r.calcium_counts.push_back(s.value);
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const TraceSample &s : r.run.report.traces[2].samples)
    {
        if (s.t_ns >= until / 2)
        {
            sum += s.value;
            ++n;
        }
    }
    r.settled_gain = n > 0 ? sum / static_cast<double>(n) : 0.0;
    return r;
}

// ---- order detection --------------------------------------------------------

const char *spikechip::order_mechanism_name(const OrderMechanism m)
{
    switch (m)
    {
    case OrderMechanism::conductance:
        return "conductance";
    case OrderMechanism::alpha:
        return "alpha";
    case OrderMechanism::nmda:
        return "nmda";
    }
    return "?";
}

spikechip::ChipGridConfig spikechip::order_config(const OrderMechanism m)
{
    ChipGridConfig cfg;
    CoreConfig &core = core0(cfg);
    NeuronLatches &l = core.neurons[0].latches;
    core.set_bias("SOIF_REFR", fast_refractory);
    switch (m)
    {
    case OrderMechanism::conductance:
        // A: strong, reversal 0.475 V below the 0.50 V threshold.
        // B: weak, reversal 0.55 V above it. 50 ms membrane.
        set_biases(core, {
                {"SOIF_LEAK", {0, 20}},
                {"SOIF_GAIN", {0, 20}},
                {"DEAM_ETAU", {0, 65}},
                {"DEAM_EGAIN", {0, 65}},
                {"DENM_ETAU", {0, 26}},
                {"DENM_EGAIN", {0, 26}},
                {"DEAM_REV", {1, 139}},
                {"DENM_REV", {2, 143}},
                {"SYAM_W0", {3, 200}},
                {"SYAM_W1", {3, 235}},
        });
        l.DEAM_CONDUCTANCE = true;
        l.DENM_CONDUCTANCE = true;
        break;
    case OrderMechanism::alpha:
        // A: alpha-function AMPA peaking near 21 ms. B: fast plain NMDA
        // DPI. 10 ms membrane.
        set_biases(core, {
                {"SOIF_LEAK", {0, 100}},
                {"SOIF_GAIN", {0, 100}},
                {"DEAM_ETAU", {0, 4}},
                {"DEAM_EGAIN", {0, 40}},
                {"DEAM_ITAU", {0, 9}},
                {"DEAM_IGAIN", {0, 40}},
                {"DENM_ETAU", {0, 65}},
                {"DENM_EGAIN", {0, 65}},
                {"SYAM_W0", {3, 30}},
                {"SYAM_W1", {3, 50}},
        });
        l.DEAM_ALPHA = true;
        break;
    case OrderMechanism::nmda:
        // A: AMPA lifting V_mem above the 0.40 V NMDA threshold. B: NMDA
        // gated by V_mem. 10 ms membrane.
        set_biases(core, {
                {"SOIF_LEAK", {0, 100}},
                {"SOIF_GAIN", {0, 100}},
                {"DEAM_ETAU", {0, 26}},
                {"DEAM_EGAIN", {0, 26}},
                {"DENM_ETAU", {0, 65}},
                {"DENM_EGAIN", {0, 65}},
                {"DENM_NMREV", {0, 133}},
                {"SYAM_W0", {3, 30}},
                {"SYAM_W1", {3, 80}},
        });
        l.DENM_NMDA = true;
        break;
    }
    connect(core, 0, 0, 1, 0, Dendrite::ampa);
    connect(core, 0, 1, 2, 1, Dendrite::nmda);
    cfg.monitors.push_back(probe_tap(MonitorSource::membrane, 100 * us));
    cfg.monitors.push_back(probe_tap(MonitorSource::dendritic, 100 * us, 0, Dendrite::ampa));
    cfg.monitors.push_back(probe_tap(MonitorSource::dendritic, 100 * us, 0, Dendrite::nmda));
    return cfg;
}

spikechip::OrderResult spikechip::run_order_detection(const OrderMechanism m)
{
    OrderResult r;
    r.mechanism = m;
    r.run.name = std::string("order-") + order_mechanism_name(m);
    r.run.config = order_config(m);
    r.gap_ns = m == OrderMechanism::alpha ? 20 * ms : 5 * ms;
    r.reversed_at_ns = m == OrderMechanism::alpha ? 300 * ms : 100 * ms;
    const uint32_t a = tag_word(1);
    const uint32_t b = tag_word(2);
    r.run.inputs = {
            {0, a, origin},
            {r.gap_ns, b, origin},
            {r.reversed_at_ns, b, origin},
            {r.reversed_at_ns + r.gap_ns, a, origin},
    };
    const int64_t until = 2 * r.reversed_at_ns;
    r.run.report = run(r.run.config, r.run.inputs, until);
    const std::vector<int64_t> t = spikes_of(r.run.report, 0);
    r.forward_spikes = count_in(t, 0, r.reversed_at_ns);
    r.reversed_spikes = count_in(t, r.reversed_at_ns, until + 1);
    return r;
}

// ---- diffusion --------------------------------------------------------------

spikechip::ChipGridConfig spikechip::diffusion_config()
{
    ChipGridConfig cfg;
    CoreConfig &core = core0(cfg);
    // g_n = 25 g_h: the current falls by about 26x per node, so the end of
    // the row perturbs the bump by less than 1e-9 of the injection; the
    // membrane voltage, logarithmic in current, still spans the row
    set_biases(core, {
            {"SOIF_LEAK", {0, 20}},
            {"SOIF_GAIN", {0, 20}},
            {"SOIF_REFR", fast_refractory},
            {"DEAM_ETAU", {0, 26}},
            {"DEAM_EGAIN", {0, 26}},
            {"DEAM_NRES", {2, 228}},
            {"DEAM_HRES", {2, 9}},
            {"SYAM_W0", {3, 20}},
    });
    for (int n = 0; n < diffusion_nodes; ++n)
    {
        core.neurons[n].latches.DEAM_AMPA = true;
        // One direct membrane probe per core, so the row goes through the sADC
        MonitorTap t;
        t.kind = MonitorKind::sadc;
        t.group = 0;
        t.channel = n;
        t.source = MonitorSource::membrane;
        t.neuron = n;
        t.interval_ns = 1 * ms;
        t.window_samples = 1;
        cfg.monitors.push_back(t);
    }
    connect(core, 7, 0, 1, 0, Dendrite::ampa);
    return cfg;
}

spikechip::DiffusionResult spikechip::run_diffusion()
{
    DiffusionResult r;
    r.run.name = "diffusion";
    r.run.config = diffusion_config();
    r.injected_node = 7;
    const int64_t t_in = 1 * ms;
    r.run.inputs = {{t_in, tag_word(1), origin}};
    const ChipGridConfig &cfg = r.run.config;

    r.grid.width = diffusion_nodes;
    r.grid.height = 1;
    r.grid.g_n = bias(cfg, "DEAM_NRES");
    r.grid.g_h = bias(cfg, "DEAM_HRES");
    r.grid.g_v = bias(cfg, "DEAM_VRES");
    r.grid.enabled_mask.assign(diffusion_nodes, true);

    Simulator sim(cfg);
    sim.inject(r.run.inputs);
    r.injected_current = sim.synapse_weight(origin, 0, r.injected_node, 0);
    sim.run_until(t_in + 100 * us);
    r.peak_membrane.assign(diffusion_nodes, 0.0);
    for (int n = 0; n < diffusion_nodes; ++n)
    {
        r.outputs.push_back(sim.probe(origin, 0, n).input[0]);
    }
    for (int64_t t = t_in; t <= 200 * ms; t += 100 * us)
    {
        sim.run_until(t);
        for (int n = 0; n < diffusion_nodes; ++n)
        {
            r.peak_membrane[n] = std::max(r.peak_membrane[n], sim.probe(origin, 0, n).V_mem);
        }
    }
    r.run.report = sim.take_report();
    return r;
}

// ---- short-term depression --------------------------------------------------

spikechip::ChipGridConfig spikechip::stp_config()
{
    ChipGridConfig cfg;
    CoreConfig &core = core0(cfg);
    // 18.6 ms AMPA filter; each pulse depresses V_stp by a few mV
    set_biases(core, {
            {"DEAM_ETAU", {0, 7}},
            {"DEAM_EGAIN", {0, 7}},
            {"SYAM_W0", {3, 50}},
            {"SYAN_STDSTR", {0, 16}},
    });
    connect(core, 0, 20, 1, 0, Dendrite::ampa);
    core.neurons[0].synapses[20].stp_enabled = true;
    cfg.monitors.push_back(probe_tap(MonitorSource::dendritic, 100 * us));
    MonitorTap w = probe_tap(MonitorSource::synapse_weight, 1 * ms);
    w.synapse = 20;
    cfg.monitors.push_back(w);
    return cfg;
}

spikechip::StpResult spikechip::run_stp()
{
    StpResult r;
    r.run.name = "stp";
    r.run.config = stp_config();
    r.input_end_ns = 60 * ms;
    for (int k = 0;; ++k)
    {
        const int64_t t = std::llround(k * 1e9 / 167.0);
        if (t >= r.input_end_ns)
        {
            break;
        }
        r.pulse_times.push_back(t);
        r.run.inputs.push_back({t, tag_word(1), origin});
    }

    Simulator sim(r.run.config);
    sim.inject(r.run.inputs);
    r.baseline_weight = sim.synapse_weight(origin, 0, 0, 20);
    sim.run_until(r.input_end_ns);
    r.weight_at_end = sim.synapse_weight(origin, 0, 0, 20);
    const int64_t recover = r.input_end_ns +
            std::llround(5.0 * r.run.config.analog.stp_tau_recovery * 1e9);
    sim.run_until(recover);
    r.weight_recovered = sim.synapse_weight(origin, 0, 0, 20);
    sim.run_until(recover + 50 * ms);
    r.run.report = sim.take_report();

    const auto &out = r.run.report.traces[0].samples;
    for (std::size_t i = 0; i < r.pulse_times.size(); ++i)
    {
        const int64_t t0 = r.pulse_times[i];
        const int64_t t1 = i + 1 < r.pulse_times.size() ?
                r.pulse_times[i + 1] :
                t0 + (r.pulse_times.size() > 1 ? r.pulse_times[1] - r.pulse_times[0] : 0);
        double peak = 0.0;
        for (const TraceSample &s : out)
        {
            if (s.t_ns >= t0 && s.t_ns < t1)
            {
                peak = std::max(peak, s.value);
            }
        }
        r.peaks.push_back(peak);
    }
    for (const TraceSample &s : r.run.report.traces[1].samples)
    {
        if (s.t_ns >= r.input_end_ns && s.value >= 0.99 * r.baseline_weight)
        {
            r.recovered_ns = s.t_ns - r.input_end_ns;
            break;
        }
    }
    return r;
}

// ---- demos ------------------------------------------------------------------

const std::vector<std::string> &spikechip::demo_names()
{
    static const std::vector<std::string> names = {"adaptation", "homeostasis",
            "order-conductance", "order-alpha", "order-nmda", "diffusion", "stp"};
    return names;
}

spikechip::DemoOutput spikechip::run_demo(const std::string &name)
{
    DemoOutput d;
    if (name == "adaptation")
    {
        AdaptationResult r = run_adaptation();
        d.metrics = {{"tau_adaptation_s", r.tau_adaptation},
                {"initial_rate_hz", r.rates.empty() ? 0.0 : r.rates.front()},
                {"steady_rate_hz", r.rates.empty() ? 0.0 : r.rates.back()},
                {"rates_hz", r.rates}, {"input_off_us", r.input_off_ns / 1000},
                {"I_adapt_at_off", r.I_adapt_at_off},
                {"I_adapt_after_5tau", r.I_adapt_after}};
        d.run = std::move(r.run);
    }
    else if (name == "homeostasis")
    {
        HomeostasisResult r = run_homeostasis();
        d.metrics = {{"I_Ca_ref", r.I_Ca_ref}, {"window_s", r.window_s},
                {"reference_counts", r.reference_counts},
                {"calcium_counts", r.calcium_counts}, {"initial_gain", r.initial_gain},
                {"settled_gain", r.settled_gain}, {"direction_checks", r.direction_checks},
                {"direction_violations", r.direction_violations}};
        d.run = std::move(r.run);
    }
    else if (name.rfind("order-", 0) == 0)
    {
        const std::string m = name.substr(6);
        OrderMechanism mech;
        if (m == "conductance")
        {
            mech = OrderMechanism::conductance;
        }
        else if (m == "alpha")
        {
            mech = OrderMechanism::alpha;
        }
        else if (m == "nmda")
        {
            mech = OrderMechanism::nmda;
        }
        else
        {
            throw ConfigError("unknown demo '" + name + "'");
        }
        OrderResult r = run_order_detection(mech);
        d.metrics = {{"mechanism", order_mechanism_name(mech)}, {"gap_us", r.gap_ns / 1000},
                {"reversed_at_us", r.reversed_at_ns / 1000},
                {"forward_spikes", r.forward_spikes}, {"reversed_spikes", r.reversed_spikes}};
        d.run = std::move(r.run);
    }
    else if (name == "diffusion")
    {
        DiffusionResult r = run_diffusion();
        d.metrics = {{"injected_node", r.injected_node},
                {"injected_current", r.injected_current}, {"outputs", r.outputs},
                {"peak_membrane_V", r.peak_membrane}};
        d.run = std::move(r.run);
    }
    else if (name == "stp")
    {
        StpResult r = run_stp();
        d.metrics = {{"pulses", r.pulse_times.size()}, {"peaks", r.peaks},
                {"baseline_weight", r.baseline_weight}, {"weight_at_end", r.weight_at_end},
                {"weight_recovered_5tau", r.weight_recovered},
                {"recovered_us", r.recovered_ns < 0 ? Json(nullptr) : Json(r.recovered_ns / 1000)}};
        d.run = std::move(r.run);
    }
    else
    {
        throw ConfigError("unknown demo '" + name + "'");
    }
    return d;
}
